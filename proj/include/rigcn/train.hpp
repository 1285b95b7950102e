#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "rigcn/data.hpp"
#include "rigcn/model.hpp"

namespace rigcn {

/// Worker count from RIGCN_THREADS (defaults to the hardware concurrency).
std::size_t default_thread_count();

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Results must be
/// written to per-index slots by the caller; the first exception is rethrown.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

struct TrainOptions {
  /// Samples whose gradients are averaged per optimizer step (1 = per-sample updates).
  std::size_t batch_size = 1;
  std::size_t threads = 0;  // 0 = default_thread_count()
};

struct EpochMetrics {
  double mean_loss = 0.0;
  double accuracy = 0.0;
  /// Running (during-training) accuracy per class; 0 for absent classes.
  std::vector<double> per_class_accuracy;
};

/// One pass over `samples` in a seed-shuffled order: rotate per `augmentation`,
/// stochastic forward, cross-entropy, backward, optimizer step per batch.
EpochMetrics train_epoch(RiGcnModel& model, std::span<const LabeledCloud> samples,
                         RotationMode augmentation, nn::Optimizer& optimizer, Rng& rng,
                         const TrainOptions& options = {});

struct EvalOptions {
  std::optional<CorruptionSpec> corruption;
  std::size_t threads = 0;
};

struct EvalResult {
  double accuracy = 0.0;
  double mean_loss = 0.0;
  std::vector<double> per_class_accuracy;
  std::vector<std::size_t> per_class_count;
  std::vector<std::size_t> predictions;
  std::vector<nn::Matrix> logits;
};

/// Deterministic evaluation. Each sample draws its rotation (and corruption)
/// from a per-sample seed taken from `rng`, so corruption-free runs see the
/// same rotations regardless of the corruption spec.
EvalResult evaluate(const RiGcnModel& model, std::span<const LabeledCloud> samples,
                    RotationMode mode, Rng& rng, const EvalOptions& options = {});

/// Finite-difference check of every parameter block of `model` on one cloud
/// (deterministic forward, cross-entropy against `label`). `corrupt_block`
/// scales that block's analytic gradient by 1.5 as a negative control.
struct ModelGradcheckOptions {
  double epsilon = 1e-6;
  std::optional<std::size_t> corrupt_block;
};

nn::GradientCheckReport model_gradient_check(RiGcnModel& model, const PointCloud& cloud,
                                             std::size_t label,
                                             const ModelGradcheckOptions& options = {});

struct InvarianceReport {
  std::size_t trials = 0;
  /// max |f(P) - f(RP)|_inf
  double max_deviation = 0.0;
  /// max |f(P) - f(RP)|_inf / (1 + |f(P)|_inf)
  double max_scaled_deviation = 0.0;
  /// argmax changes among trials whose top-2 margin exceeds 1e-4
  std::size_t argmax_mismatches = 0;
  std::size_t low_margin_trials = 0;
  /// smallest PCA eigenvalue gap seen on any patch of any reference cloud
  double min_eigen_gap = 0.0;
  std::size_t degenerate_patches = 0;

  bool passed(double tolerance = 1e-5) const {
    return max_scaled_deviation <= tolerance && argmax_mismatches == 0;
  }
};

/// Compares deterministic logits of each cloud against `rotations` rotated
/// copies drawn in `mode`.
InvarianceReport invariance_check(const RiGcnModel& model, std::span<const PointCloud> clouds,
                                  std::size_t rotations, RotationMode mode, Rng& rng,
                                  std::size_t threads = 0);

struct RobustnessRow {
  double sigma = 0.0;
  std::size_t outliers = 0;
  double accuracy = 0.0;
};

/// Grid sweep, rows sorted by (sigma, outliers). Every cell replays the same
/// per-sample rotation seeds, so the (0, 0) cell equals a clean evaluate()
/// with Rng(seed).
std::vector<RobustnessRow> robustness_sweep(const RiGcnModel& model,
                                            std::span<const LabeledCloud> samples,
                                            RotationMode mode, std::vector<double> sigmas,
                                            std::vector<std::size_t> outliers,
                                            std::uint64_t seed, std::size_t threads = 0);

/// Binary checkpoint: magic, version, metadata JSON (model config plus
/// caller-supplied fields), then named fp64 tensors with their shapes.
void save_checkpoint(const std::filesystem::path& path, const RiGcnModel& model,
                     const nlohmann::json& metadata = nlohmann::json::object());

struct LoadedCheckpoint {
  RiGcnModel model;
  nlohmann::json metadata;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace rigcn

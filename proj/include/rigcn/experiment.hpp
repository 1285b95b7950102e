#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "rigcn/data.hpp"
#include "rigcn/model.hpp"
#include "rigcn/nn.hpp"

namespace rigcn {

enum class DatasetKind { synthetic, manifest };

struct DatasetConfig {
  DatasetKind kind = DatasetKind::synthetic;
  SyntheticSpec synthetic;
  std::filesystem::path manifest;
  /// Points per cloud; 0 means model.input_size.
  std::size_t points = 0;
  /// Kept apart from the experiment seed so that runs with different seeds
  /// see the same data.
  std::uint64_t seed = 0;
};

struct TrainingConfig {
  std::size_t epochs = 20;
  double learning_rate = 2e-3;
  nn::OptimizerKind optimizer = nn::OptimizerKind::adam;
  std::size_t batch_size = 8;
  /// Learning rate of epoch e (1-based) is learning_rate * lr_decay^(e - 1).
  double lr_decay = 1.0;
};

struct ProtocolConfig {
  RotationMode train_rotation = RotationMode::z;
  RotationMode test_rotation = RotationMode::so3;
};

struct ExperimentConfig {
  std::string experiment_id = "experiment";
  RiGcnConfig model;
  DatasetConfig dataset;
  TrainingConfig training;
  ProtocolConfig protocol;
  /// Drives model initialization, training order and evaluation rotations.
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "runs/experiment";
  bool deterministic = false;

  /// Throws ConfigError.
  void validate() const;
  std::string protocol_name() const;
};

nlohmann::json to_json(const ExperimentConfig& config);
/// Strict: unknown keys at any level raise ConfigError. Relative manifest
/// paths are resolved against `base_dir`.
ExperimentConfig experiment_from_json(const nlohmann::json& j,
                                      const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment(const std::filesystem::path& path);

/// Loads or generates the dataset described by `config.dataset`.
DatasetSplit load_dataset(const ExperimentConfig& config);

/// Model config with the experiment seed and the dataset's class count applied.
RiGcnConfig resolved_model_config(const ExperimentConfig& config, std::size_t num_classes);

}  // namespace rigcn

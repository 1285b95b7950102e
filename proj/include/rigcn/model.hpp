#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "json.hpp"
#include "rigcn/geom.hpp"
#include "rigcn/graph.hpp"
#include "rigcn/nn.hpp"

namespace rigcn {

enum class AbstractionKind { gcn, mlp };
enum class TransformScope { local, global };

AbstractionKind parse_abstraction_kind(const std::string& name);
TransformScope parse_transform_scope(const std::string& name);
const char* to_string(AbstractionKind kind);
const char* to_string(TransformScope scope);

struct RiGcnConfig {
  std::size_t input_size = 1024;
  std::size_t levels = 3;
  /// Representative counts per level (first `levels` entries are used).
  std::vector<std::size_t> representatives{512, 128, 32};
  /// Descriptor width per level.
  std::vector<std::size_t> channels{64, 128, 256};
  /// Width of the two per-point branches per level; empty means channels / 2.
  std::vector<std::size_t> branch_widths{};
  IntInterval k{24, 40};
  IntInterval d{1, 4};
  IntInterval khat{6, 12};
  /// Neighbor count used by the extension levels (searched among the
  /// previous level's representatives, dilation 1).
  IntInterval extension_k{8, 16};
  std::vector<std::size_t> classifier_widths{128};
  std::size_t num_classes = 2;
  bool stochastic_d = true;
  bool stochastic_k = true;
  bool stochastic_khat = true;
  AbstractionKind abstraction = AbstractionKind::gcn;
  TransformScope transform = TransformScope::local;
  std::uint64_t seed = 0;

  /// Throws ConfigError on any inconsistency.
  void validate() const;
  std::size_t branch_width(std::size_t level) const;
};

nlohmann::json to_json(const RiGcnConfig& config);
/// Keys missing from `j` keep their defaults; unknown keys are rejected.
RiGcnConfig config_from_json(const nlohmann::json& j);
/// Applies a single `key=value` override (value parsed as JSON, falling back to a string).
void apply_override(RiGcnConfig& config, const std::string& assignment);

struct LevelBlocks {
  nn::Mlp point_branch;    // projected neighbor coordinates
  nn::Mlp context_branch;  // level 0: dilated patch; later levels: previous descriptors
  nn::Mlp fuse;
  std::size_t gcn_weight = 0;
};

class RiGcnModel {
 public:
  /// Parameters are initialized from `config.seed`.
  explicit RiGcnModel(RiGcnConfig config);

  const RiGcnConfig& config() const { return config_; }
  nn::ParameterStore& params() { return params_; }
  const nn::ParameterStore& params() const { return params_; }
  const std::vector<LevelBlocks>& levels() const { return levels_; }
  const nn::Mlp& classifier() const { return classifier_; }

 private:
  RiGcnConfig config_;
  nn::ParameterStore params_;
  std::vector<LevelBlocks> levels_;
  nn::Mlp classifier_;
};

struct DescriptorSet {
  std::size_t level = 0;
  std::vector<Vec3> points;
  /// Frame of each representative; extension levels copy them from level 0.
  std::vector<LocalFrame> frames;
  /// Index of each representative in the previous level (the cloud for level 0).
  std::vector<std::size_t> source_indices;
  nn::Var features;  // points.size() x C_l on the tape that built it
};

struct ForwardTrace {
  std::vector<DescriptorSet> levels;
  std::vector<WeightedGraph> graphs;
  std::size_t degenerate_patches = 0;
  double min_eigen_gap = std::numeric_limits<double>::infinity();
};

DescriptorSet extract_descriptors(nn::Tape& tape, const PointCloud& cloud,
                                  const RiGcnModel& model, Rng& rng, bool stochastic,
                                  ForwardTrace* trace = nullptr);

DescriptorSet extend_descriptors(nn::Tape& tape, const DescriptorSet& previous,
                                 const RiGcnModel& model, std::size_t level, Rng& rng,
                                 bool stochastic, ForwardTrace* trace = nullptr);

/// One graph convolution (or per-node layer for the MLP ablation) over the
/// level's k-NN graph, max-pooled to a 1 x C_l summary.
nn::Var abstract_level(nn::Tape& tape, const DescriptorSet& descriptors,
                       const RiGcnModel& model, Rng& rng, bool stochastic,
                       ForwardTrace* trace = nullptr);

/// 1 x num_classes logits.
nn::Var forward(nn::Tape& tape, const PointCloud& cloud, const RiGcnModel& model, Rng& rng,
                bool stochastic, ForwardTrace* trace = nullptr);

/// Deterministic logits without keeping the tape.
nn::Matrix predict_logits(const RiGcnModel& model, const PointCloud& cloud);

/// Whole-cloud PCA alignment used by the global-transform ablation.
PointCloud align_to_global_frame(const PointCloud& cloud);

}  // namespace rigcn

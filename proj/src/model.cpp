#include "rigcn/model.hpp"

#include <algorithm>

#include "rigcn/errors.hpp"

namespace rigcn {

AbstractionKind parse_abstraction_kind(const std::string& name) {
  if (name == "gcn") return AbstractionKind::gcn;
  if (name == "mlp") return AbstractionKind::mlp;
  throw ConfigError("unknown abstraction '" + name + "' (expected gcn|mlp)");
}

TransformScope parse_transform_scope(const std::string& name) {
  if (name == "local") return TransformScope::local;
  if (name == "global") return TransformScope::global;
  throw ConfigError("unknown transform scope '" + name + "' (expected local|global)");
}

const char* to_string(AbstractionKind kind) { return kind == AbstractionKind::gcn ? "gcn" : "mlp"; }

const char* to_string(TransformScope scope) {
  return scope == TransformScope::local ? "local" : "global";
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

void check_interval(const IntInterval& range, const char* name, int minimum) {
  if (range.lo < minimum || range.lo > range.hi) {
    throw ConfigError(std::string(name) + " interval [" + std::to_string(range.lo) + ", " +
                      std::to_string(range.hi) + "] is invalid (lower bound must be >= " +
                      std::to_string(minimum) + ")");
  }
}

nlohmann::json interval_json(const IntInterval& r) { return nlohmann::json::array({r.lo, r.hi}); }

IntInterval interval_from_json(const nlohmann::json& j, const char* key) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number_integer() || !j[1].is_number_integer()) {
    throw ConfigError(std::string("'") + key + "' must be a [lo, hi] integer pair");
  }
  return {j[0].get<int>(), j[1].get<int>()};
}

template <typename T>
T get_as(const nlohmann::json& j, const char* key) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("'") + key + "': " + e.what());
  }
}

}  // namespace

std::size_t RiGcnConfig::branch_width(std::size_t level) const {
  if (!branch_widths.empty()) return branch_widths[level];
  return std::max<std::size_t>(1, channels[level] / 2);
}

void RiGcnConfig::validate() const {
  if (levels < 1 || levels > 4) {
    throw ConfigError("levels must lie in [1, 4], got " + std::to_string(levels));
  }
  if (representatives.size() < levels || channels.size() < levels) {
    throw ConfigError("representatives and channels need one entry per level");
  }
  if (!branch_widths.empty() && branch_widths.size() < levels) {
    throw ConfigError("branch_widths needs one entry per level when given");
  }
  if (representatives[0] > input_size) {
    throw ConfigError("representatives[0]=" + std::to_string(representatives[0]) +
                      " exceeds input_size=" + std::to_string(input_size));
  }
  for (std::size_t l = 0; l < levels; ++l) {
    if (representatives[l] < 2) throw ConfigError("every level needs at least 2 representatives");
    if (l > 0 && representatives[l] >= representatives[l - 1]) {
      throw ConfigError("representative counts must strictly decrease across levels");
    }
    if (channels[l] == 0 || branch_width(l) == 0) throw ConfigError("channel widths must be >= 1");
  }
  check_interval(k, "k", 3);
  check_interval(d, "d", 1);
  check_interval(khat, "khat", 1);
  check_interval(extension_k, "extension_k", 1);
  for (auto w : classifier_widths) {
    if (w == 0) throw ConfigError("classifier widths must be >= 1");
  }
  if (num_classes == 0) throw ConfigError("num_classes must be >= 1");
}

nlohmann::json to_json(const RiGcnConfig& c) {
  return {
      {"input_size", c.input_size},
      {"levels", c.levels},
      {"representatives", c.representatives},
      {"channels", c.channels},
      {"branch_widths", c.branch_widths},
      {"k", interval_json(c.k)},
      {"d", interval_json(c.d)},
      {"khat", interval_json(c.khat)},
      {"extension_k", interval_json(c.extension_k)},
      {"classifier_widths", c.classifier_widths},
      {"num_classes", c.num_classes},
      {"stochastic_d", c.stochastic_d},
      {"stochastic_k", c.stochastic_k},
      {"stochastic_khat", c.stochastic_khat},
      {"abstraction", to_string(c.abstraction)},
      {"transform_scope", to_string(c.transform)},
      {"seed", c.seed},
  };
}

RiGcnConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  RiGcnConfig c;
  for (const auto& [key, value] : j.items()) {
    const char* k = key.c_str();
    if (key == "input_size") c.input_size = get_as<std::size_t>(value, k);
    else if (key == "levels") c.levels = get_as<std::size_t>(value, k);
    else if (key == "representatives") c.representatives = get_as<std::vector<std::size_t>>(value, k);
    else if (key == "channels") c.channels = get_as<std::vector<std::size_t>>(value, k);
    else if (key == "branch_widths") c.branch_widths = get_as<std::vector<std::size_t>>(value, k);
    else if (key == "k") c.k = interval_from_json(value, k);
    else if (key == "d") c.d = interval_from_json(value, k);
    else if (key == "khat") c.khat = interval_from_json(value, k);
    else if (key == "extension_k") c.extension_k = interval_from_json(value, k);
    else if (key == "classifier_widths") c.classifier_widths = get_as<std::vector<std::size_t>>(value, k);
    else if (key == "num_classes") c.num_classes = get_as<std::size_t>(value, k);
    else if (key == "stochastic_d") c.stochastic_d = get_as<bool>(value, k);
    else if (key == "stochastic_k") c.stochastic_k = get_as<bool>(value, k);
    else if (key == "stochastic_khat") c.stochastic_khat = get_as<bool>(value, k);
    else if (key == "abstraction") c.abstraction = parse_abstraction_kind(get_as<std::string>(value, k));
    else if (key == "transform_scope") c.transform = parse_transform_scope(get_as<std::string>(value, k));
    else if (key == "seed") c.seed = get_as<std::uint64_t>(value, k);
    else throw ConfigError("unknown model config key '" + key + "'");
  }
  return c;
}

void apply_override(RiGcnConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not of the form key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  nlohmann::json j = to_json(config);
  if (!j.contains(key)) throw ConfigError("unknown model config key '" + key + "'");
  j[key] = value;
  config = config_from_json(j);
}

// ---------------------------------------------------------------------------
// Model

RiGcnModel::RiGcnModel(RiGcnConfig config) : config_(std::move(config)) {
  config_.validate();
  Rng rng(derive_seed(config_.seed, 0x1417));
  std::size_t summary_width = 0;
  for (std::size_t l = 0; l < config_.levels; ++l) {
    const std::string prefix = "level" + std::to_string(l);
    const std::size_t b = config_.branch_width(l);
    const std::size_t c = config_.channels[l];
    const std::size_t context_in = l == 0 ? 3 : config_.channels[l - 1];
    LevelBlocks blocks;
    const std::size_t point_widths[] = {3, b, b};
    const std::size_t context_widths[] = {context_in, b, b};
    const std::size_t fuse_widths[] = {2 * b, c, c};
    blocks.point_branch = nn::Mlp::create(params_, prefix + ".point_branch", point_widths, rng);
    blocks.context_branch = nn::Mlp::create(params_, prefix + ".context_branch", context_widths, rng);
    blocks.fuse = nn::Mlp::create(params_, prefix + ".fuse", fuse_widths, rng);
    blocks.gcn_weight = params_.add_glorot(prefix + ".abstraction.weight", c, c, rng);
    levels_.push_back(std::move(blocks));
    summary_width += c;
  }
  std::vector<std::size_t> head{summary_width};
  head.insert(head.end(), config_.classifier_widths.begin(), config_.classifier_widths.end());
  head.push_back(config_.num_classes);
  classifier_ = nn::Mlp::create(params_, "classifier", head, rng);
}

// ---------------------------------------------------------------------------
// Forward pass

namespace {

struct StackedPatches {
  std::vector<double> values;        // row-major, 3 per row
  std::vector<std::size_t> offsets{0};

  void append(const Coords& patch) {
    values.insert(values.end(), patch.data(), patch.data() + patch.size());
    offsets.push_back(values.size() / 3);
  }

  nn::Matrix matrix() const {
    return Eigen::Map<const nn::Matrix>(values.data(), static_cast<Eigen::Index>(values.size() / 3), 3);
  }
};

void note_frame(ForwardTrace* trace, const LocalFrame& frame) {
  if (!trace) return;
  trace->min_eigen_gap = std::min(trace->min_eigen_gap, frame.min_eigen_gap());
  if (frame.degenerate) ++trace->degenerate_patches;
}

nn::Var pooled_branch(nn::Tape& tape, const nn::Mlp& mlp, const nn::ParameterStore& params,
                      const StackedPatches& patches) {
  const nn::Var x = tape.constant(patches.matrix());
  return nn::segment_maxpool(tape, mlp.forward(tape, params, x), patches.offsets);
}

}  // namespace

PointCloud align_to_global_frame(const PointCloud& cloud) {
  Vec3 centroid = Vec3::Zero();
  for (const auto& p : cloud.points) centroid += p;
  centroid /= static_cast<double>(cloud.size());
  LocalFrame frame = estimate_frame(cloud.points, centroid);
  PointCloud out;
  out.points.reserve(cloud.size());
  for (const auto& p : cloud.points) out.points.push_back(frame.axes.transpose() * (p - centroid));
  return out;
}

DescriptorSet extract_descriptors(nn::Tape& tape, const PointCloud& input,
                                  const RiGcnModel& model, Rng& rng, bool stochastic,
                                  ForwardTrace* trace) {
  const RiGcnConfig& cfg = model.config();
  const std::size_t m = cfg.representatives[0];
  if (input.size() < m) {
    throw ConfigError("cloud has " + std::to_string(input.size()) + " points but level 0 needs " +
                      std::to_string(m) + " representatives");
  }
  const bool global = cfg.transform == TransformScope::global;
  const PointCloud aligned = global ? align_to_global_frame(input) : PointCloud{};
  const std::vector<Vec3>& pts = global ? aligned.points : input.points;

  DescriptorSet out;
  out.level = 0;
  out.source_indices = farthest_point_sampling(pts, m);
  out.points.reserve(m);
  out.frames.reserve(m);

  StackedPatches near_patches;
  StackedPatches wide_patches;
  for (auto anchor : out.source_indices) {
    const NeighborParams p =
        sample_neighbor_params(rng, cfg.k, cfg.d, stochastic && cfg.stochastic_k,
                               stochastic && cfg.stochastic_d);
    const NeighborSet near = dilated_knn(pts, anchor, {p.k, 1});
    const NeighborSet wide = dilated_knn(pts, anchor, p);
    LocalFrame frame;
    if (global) {
      frame.origin = pts[anchor];
    } else {
      frame = estimate_lrf(pts, anchor, wide);
      note_frame(trace, frame);
    }
    near_patches.append(project_to_lrf(frame, pts, near.members));
    wide_patches.append(project_to_lrf(frame, pts, wide.members));
    out.points.push_back(pts[anchor]);
    out.frames.push_back(frame);
  }

  const LevelBlocks& blocks = model.levels()[0];
  const nn::Var near_features = pooled_branch(tape, blocks.point_branch, model.params(), near_patches);
  const nn::Var wide_features = pooled_branch(tape, blocks.context_branch, model.params(), wide_patches);
  out.features = blocks.fuse.forward(tape, model.params(),
                                     nn::concat_cols(tape, near_features, wide_features));
  return out;
}

DescriptorSet extend_descriptors(nn::Tape& tape, const DescriptorSet& previous,
                                 const RiGcnModel& model, std::size_t level, Rng& rng,
                                 bool stochastic, ForwardTrace* /*trace*/) {
  const RiGcnConfig& cfg = model.config();
  if (level == 0 || level >= cfg.levels) {
    throw InvalidArgumentError("extend_descriptors: level " + std::to_string(level) +
                               " is not an extension level");
  }
  const std::size_t m = cfg.representatives[level];
  if (m > previous.points.size()) {
    throw ConfigError("level " + std::to_string(level) + " needs " + std::to_string(m) +
                      " representatives but the previous level has " +
                      std::to_string(previous.points.size()));
  }

  DescriptorSet out;
  out.level = level;
  out.source_indices = farthest_point_sampling(previous.points, m);

  StackedPatches coords;
  std::vector<std::size_t> context_rows;
  std::vector<std::size_t> context_offsets{0};
  for (auto anchor : out.source_indices) {
    const int k = sample_interval(rng, cfg.extension_k, stochastic && cfg.stochastic_k);
    const NeighborSet near = dilated_knn(previous.points, anchor, {k, 1});
    const LocalFrame& frame = previous.frames[anchor];
    coords.append(project_to_lrf(frame, previous.points, near.members));
    context_rows.push_back(anchor);
    context_rows.insert(context_rows.end(), near.members.begin(), near.members.end());
    context_offsets.push_back(context_rows.size());
    out.points.push_back(previous.points[anchor]);
    out.frames.push_back(frame);
  }

  const LevelBlocks& blocks = model.levels()[level];
  const nn::Var coord_features = pooled_branch(tape, blocks.point_branch, model.params(), coords);
  const nn::Var per_node = blocks.context_branch.forward(tape, model.params(), previous.features);
  const nn::Var context_features = nn::segment_maxpool(
      tape, nn::gather_rows(tape, per_node, context_rows), context_offsets);
  out.features = blocks.fuse.forward(tape, model.params(),
                                     nn::concat_cols(tape, coord_features, context_features));
  return out;
}

nn::Var abstract_level(nn::Tape& tape, const DescriptorSet& descriptors, const RiGcnModel& model,
                       Rng& rng, bool stochastic, ForwardTrace* trace) {
  const RiGcnConfig& cfg = model.config();
  const std::size_t n = descriptors.points.size();
  if (n < 2) throw InvalidArgumentError("abstract_level: graph needs at least 2 nodes");
  const nn::Var weight = tape.parameter(model.params(), model.levels()[descriptors.level].gcn_weight);

  nn::Var out;
  if (cfg.abstraction == AbstractionKind::gcn) {
    int khat = sample_interval(rng, cfg.khat, stochastic && cfg.stochastic_khat);
    khat = std::clamp(khat, 1, static_cast<int>(n - 1));
    WeightedGraph graph = build_knn_graph(descriptors.points, khat);
    const NormalizedAdjacency a_hat = renormalize(graph);
    out = nn::gcn_layer(tape, a_hat.entries, descriptors.features, weight);
    if (trace) trace->graphs.push_back(std::move(graph));
  } else {
    out = nn::relu(tape, nn::linear(tape, descriptors.features, weight));
  }
  return nn::maxpool_rows(tape, out);
}

nn::Var forward(nn::Tape& tape, const PointCloud& cloud, const RiGcnModel& model, Rng& rng,
                bool stochastic, ForwardTrace* trace) {
  const RiGcnConfig& cfg = model.config();
  std::vector<nn::Var> summaries;
  DescriptorSet current = extract_descriptors(tape, cloud, model, rng, stochastic, trace);
  for (std::size_t l = 0;; ++l) {
    summaries.push_back(abstract_level(tape, current, model, rng, stochastic, trace));
    if (l + 1 >= cfg.levels) {
      if (trace) trace->levels.push_back(std::move(current));
      break;
    }
    DescriptorSet next = extend_descriptors(tape, current, model, l + 1, rng, stochastic, trace);
    if (trace) trace->levels.push_back(std::move(current));
    current = std::move(next);
  }
  const nn::Var joined = summaries.size() == 1 ? summaries[0] : nn::concat_cols(tape, summaries);
  return model.classifier().forward(tape, model.params(), joined);
}

nn::Matrix predict_logits(const RiGcnModel& model, const PointCloud& cloud) {
  nn::Tape tape;
  Rng rng(0);
  return tape.value(forward(tape, cloud, model, rng, false));
}

}  // namespace rigcn

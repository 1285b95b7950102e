#include "rigcn/experiment.hpp"

#include <fstream>
#include <set>

#include "rigcn/errors.hpp"

namespace rigcn {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const char* section, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ConfigError(std::string("'") + section + "' must be a JSON object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in '" + section + "'");
  }
}

template <typename T>
void read_field(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("'") + key + "': " + e.what());
  }
}

RotationMode read_rotation(const json& j, const char* key, RotationMode fallback) {
  std::string name = to_string(fallback);
  read_field(j, key, name);
  try {
    return parse_rotation_mode(name);
  } catch (const InvalidArgumentError& e) {
    throw ConfigError(std::string("'") + key + "': " + e.what());
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  if (experiment_id.empty()) throw ConfigError("experiment_id must not be empty");
  if (experiment_id.find_first_of(",\n\r\"") != std::string::npos) {
    throw ConfigError("experiment_id must not contain commas, quotes or newlines");
  }
  model.validate();
  if (!(training.learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
  if (training.batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (!(training.lr_decay > 0.0 && training.lr_decay <= 1.0)) {
    throw ConfigError("lr_decay must lie in (0, 1]");
  }
  const std::size_t points = dataset.points == 0 ? model.input_size : dataset.points;
  if (points < model.representatives[0]) {
    throw ConfigError("dataset points (" + std::to_string(points) +
                      ") fewer than level-0 representatives (" +
                      std::to_string(model.representatives[0]) + ")");
  }
  if (dataset.kind == DatasetKind::manifest && dataset.manifest.empty()) {
    throw ConfigError("manifest dataset needs a 'path'");
  }
  if (dataset.kind == DatasetKind::synthetic) {
    const auto& s = dataset.synthetic;
    if (s.classes.size() < 2) throw ConfigError("synthetic dataset needs at least two classes");
    if (s.instances_per_class == 0) throw ConfigError("instances_per_class must be >= 1");
    if (!(s.train_fraction > 0.0 && s.train_fraction < 1.0)) {
      throw ConfigError("train_fraction must lie in (0, 1)");
    }
  }
}

std::string ExperimentConfig::protocol_name() const {
  return std::string(to_string(protocol.train_rotation)) + "/" + to_string(protocol.test_rotation);
}

nlohmann::json to_json(const ExperimentConfig& c) {
  json dataset;
  if (c.dataset.kind == DatasetKind::synthetic) {
    const auto& s = c.dataset.synthetic;
    dataset = {{"kind", "synthetic"},
               {"classes", s.classes},
               {"instances_per_class", s.instances_per_class},
               {"scale_jitter", s.scale_jitter},
               {"proportion_jitter", s.proportion_jitter},
               {"train_fraction", s.train_fraction}};
  } else {
    dataset = {{"kind", "manifest"}, {"path", c.dataset.manifest.generic_string()}};
  }
  dataset["points"] = c.dataset.points;
  dataset["seed"] = c.dataset.seed;
  return {
      {"experiment_id", c.experiment_id},
      {"model", to_json(c.model)},
      {"dataset", dataset},
      {"training",
       {{"epochs", c.training.epochs},
        {"learning_rate", c.training.learning_rate},
        {"optimizer", nn::to_string(c.training.optimizer)},
        {"batch_size", c.training.batch_size},
        {"lr_decay", c.training.lr_decay}}},
      {"protocol",
       {{"train_rotation", to_string(c.protocol.train_rotation)},
        {"test_rotation", to_string(c.protocol.test_rotation)}}},
      {"seed", c.seed},
      {"output_dir", c.output_dir.generic_string()},
      {"deterministic", c.deterministic},
  };
}

ExperimentConfig experiment_from_json(const json& j, const std::filesystem::path& base_dir) {
  reject_unknown(j, "experiment", {"experiment_id", "model", "dataset", "training", "protocol",
                                   "seed", "output_dir", "deterministic"});
  ExperimentConfig c;
  read_field(j, "experiment_id", c.experiment_id);
  read_field(j, "seed", c.seed);
  read_field(j, "deterministic", c.deterministic);
  std::string out = c.output_dir.string();
  read_field(j, "output_dir", out);
  c.output_dir = out;
  if (j.contains("model")) c.model = config_from_json(j.at("model"));

  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    if (!d.is_object()) throw ConfigError("'dataset' must be a JSON object");
    std::string kind = "synthetic";
    read_field(d, "kind", kind);
    if (kind == "synthetic") {
      reject_unknown(d, "dataset", {"kind", "classes", "instances_per_class", "scale_jitter",
                                    "proportion_jitter", "train_fraction", "points", "seed"});
      auto& s = c.dataset.synthetic;
      read_field(d, "classes", s.classes);
      read_field(d, "instances_per_class", s.instances_per_class);
      read_field(d, "scale_jitter", s.scale_jitter);
      read_field(d, "proportion_jitter", s.proportion_jitter);
      read_field(d, "train_fraction", s.train_fraction);
    } else if (kind == "manifest") {
      c.dataset.kind = DatasetKind::manifest;
      reject_unknown(d, "dataset", {"kind", "path", "points", "seed"});
      std::string path;
      read_field(d, "path", path);
      c.dataset.manifest = path;
      if (!path.empty() && c.dataset.manifest.is_relative()) {
        c.dataset.manifest = std::filesystem::absolute(base_dir / c.dataset.manifest).lexically_normal();
      }
    } else {
      throw ConfigError("unknown dataset kind '" + kind + "' (expected synthetic|manifest)");
    }
    read_field(d, "points", c.dataset.points);
    read_field(d, "seed", c.dataset.seed);
  }

  if (j.contains("training")) {
    const json& t = j.at("training");
    reject_unknown(t, "training", {"epochs", "learning_rate", "optimizer", "batch_size", "lr_decay"});
    read_field(t, "epochs", c.training.epochs);
    read_field(t, "learning_rate", c.training.learning_rate);
    read_field(t, "batch_size", c.training.batch_size);
    read_field(t, "lr_decay", c.training.lr_decay);
    std::string opt = nn::to_string(c.training.optimizer);
    read_field(t, "optimizer", opt);
    c.training.optimizer = nn::parse_optimizer_kind(opt);
  }

  if (j.contains("protocol")) {
    const json& p = j.at("protocol");
    reject_unknown(p, "protocol", {"train_rotation", "test_rotation"});
    c.protocol.train_rotation = read_rotation(p, "train_rotation", c.protocol.train_rotation);
    c.protocol.test_rotation = read_rotation(p, "test_rotation", c.protocol.test_rotation);
  }
  c.validate();
  return c;
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config '" + path.string() + "' is not valid JSON");
  return experiment_from_json(j, path.parent_path());
}

DatasetSplit load_dataset(const ExperimentConfig& config) {
  const std::size_t points = config.dataset.points == 0 ? config.model.input_size : config.dataset.points;
  if (config.dataset.kind == DatasetKind::manifest) {
    return load_manifest_dataset(config.dataset.manifest, points, config.dataset.seed);
  }
  SyntheticSpec spec = config.dataset.synthetic;
  spec.points = points;
  return generate_synthetic_dataset(spec, config.dataset.seed);
}

RiGcnConfig resolved_model_config(const ExperimentConfig& config, std::size_t num_classes) {
  RiGcnConfig m = config.model;
  m.seed = config.seed;
  m.num_classes = num_classes;
  m.validate();
  return m;
}

}  // namespace rigcn

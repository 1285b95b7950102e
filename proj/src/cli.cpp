#include "rigcn/cli.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "rigcn/errors.hpp"
#include "rigcn/experiment.hpp"
#include "rigcn/train.hpp"

namespace rigcn {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr std::uint64_t train_stream = 0x7a11;
constexpr std::uint64_t eval_stream = 0x7e57;
constexpr double gradcheck_tolerance = 1e-5;

struct CommonOptions {
  std::string config;
  std::string out;
  std::string checkpoint;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  std::vector<std::string> ablations;
};

void add_common(CLI::App& sub, CommonOptions& o, bool checkpoint) {
  sub.add_option("--config", o.config, "Experiment config (JSON)");
  sub.add_option("--seed", o.seed, "Experiment seed (overrides the config)");
  sub.add_option("--out", o.out, "Output directory (overrides the config)");
  if (checkpoint) sub.add_option("--checkpoint", o.checkpoint, "Checkpoint path");
  sub.add_flag("--deterministic", o.deterministic,
               "Record fp64 deterministic mode (all computation is fp64 and seeded)");
  sub.add_option("--ablation", o.ablations, "Model override key=value (repeatable)");
}

ExperimentConfig resolve_config(const CommonOptions& o) {
  ExperimentConfig cfg = o.config.empty() ? ExperimentConfig{} : load_experiment(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (!o.out.empty()) cfg.output_dir = o.out;
  if (o.deterministic) cfg.deterministic = true;
  for (const auto& a : o.ablations) apply_override(cfg.model, a);
  cfg.validate();
  return cfg;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InvalidInputError("cannot write '" + path.string() + "'");
  f << std::setprecision(std::numeric_limits<double>::max_digits10);
  return f;
}

void echo_config(const ExperimentConfig& cfg, const RiGcnConfig* model) {
  fs::create_directories(cfg.output_dir);
  json j = to_json(cfg);
  if (model) j["model"] = to_json(*model);
  open_output(cfg.output_dir / "config.json") << j.dump(2) << '\n';
}

void write_metrics_header(std::ostream& os, const std::vector<std::string>& classes) {
  os << "experiment_id,protocol,epoch,split,accuracy,loss";
  for (const auto& c : classes) os << ",acc_" << c;
  os << '\n';
}

void write_metrics_row(std::ostream& os, const ExperimentConfig& cfg, const std::string& protocol,
                       std::size_t epoch, const char* split, double accuracy, double loss,
                       const std::vector<double>& per_class) {
  os << cfg.experiment_id << ',' << protocol << ',' << epoch << ',' << split << ',' << accuracy
     << ',' << loss;
  for (double a : per_class) os << ',' << a;
  os << '\n';
}

std::vector<std::string> class_names_of(const json& metadata) {
  if (!metadata.contains("class_names")) return {};
  return metadata.at("class_names").get<std::vector<std::string>>();
}

/// Loads the checkpoint and checks it against the dataset's classes.
RiGcnModel load_matching(const fs::path& path, const std::vector<std::string>& classes) {
  auto loaded = load_checkpoint(path);
  if (loaded.model.config().num_classes != classes.size()) {
    throw ConfigError("checkpoint has " + std::to_string(loaded.model.config().num_classes) +
                      " classes but the dataset has " + std::to_string(classes.size()));
  }
  const auto stored = class_names_of(loaded.metadata);
  if (!stored.empty() && stored != classes) {
    throw ConfigError("checkpoint class names do not match the dataset's");
  }
  return std::move(loaded.model);
}

std::vector<RotationMode> parse_modes(const std::vector<std::string>& names) {
  std::vector<RotationMode> modes;
  for (const auto& n : names) {
    try {
      modes.push_back(parse_rotation_mode(n));
    } catch (const InvalidArgumentError& e) {
      throw ConfigError(e.what());
    }
  }
  return modes;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::optional<std::size_t> epochs;
};

int cmd_train(const CommonOptions& o, const TrainArgs& a, std::ostream& out) {
  ExperimentConfig cfg = resolve_config(o);
  if (a.epochs) cfg.training.epochs = *a.epochs;
  const DatasetSplit data = load_dataset(cfg);
  RiGcnModel model(resolved_model_config(cfg, data.class_names.size()));
  echo_config(cfg, &model.config());

  const fs::path ckpt = o.checkpoint.empty() ? cfg.output_dir / "model.ckpt" : fs::path(o.checkpoint);
  auto metrics = open_output(cfg.output_dir / "metrics.csv");
  auto timing = open_output(cfg.output_dir / "timing.csv");
  write_metrics_header(metrics, data.class_names);
  timing << "epoch,train_seconds,eval_seconds\n";

  nn::Optimizer optimizer({cfg.training.optimizer, cfg.training.learning_rate});
  Rng rng(derive_seed(cfg.seed, train_stream));
  TrainOptions topts;
  topts.batch_size = cfg.training.batch_size;
  const std::string protocol = cfg.protocol_name();
  out << "train " << cfg.experiment_id << ": " << data.train.size() << " train / "
      << data.test.size() << " test clouds, " << data.class_names.size() << " classes, "
      << model.params().scalar_count() << " parameters, protocol " << protocol << '\n';

  double learning_rate = cfg.training.learning_rate;
  for (std::size_t epoch = 1; epoch <= cfg.training.epochs; ++epoch) {
    optimizer.set_learning_rate(learning_rate);
    learning_rate *= cfg.training.lr_decay;
    const auto t0 = std::chrono::steady_clock::now();
    const EpochMetrics m = train_epoch(model, data.train, cfg.protocol.train_rotation, optimizer, rng, topts);
    const double train_seconds = seconds_since(t0);
    write_metrics_row(metrics, cfg, protocol, epoch, "train", m.accuracy, m.mean_loss, m.per_class_accuracy);
    out << "epoch " << epoch << "  loss " << std::fixed << std::setprecision(4) << m.mean_loss
        << "  train_acc " << m.accuracy;
    double eval_seconds = 0.0;
    if (!data.test.empty()) {
      const auto t1 = std::chrono::steady_clock::now();
      Rng eval_rng(derive_seed(cfg.seed, eval_stream));
      const EvalResult r = evaluate(model, data.test, cfg.protocol.test_rotation, eval_rng);
      eval_seconds = seconds_since(t1);
      write_metrics_row(metrics, cfg, protocol, epoch, "test", r.accuracy, r.mean_loss, r.per_class_accuracy);
      out << "  test_acc " << r.accuracy;
    }
    out << std::defaultfloat << std::endl;
    metrics.flush();
    timing << epoch << ',' << train_seconds << ',' << eval_seconds << '\n';
    timing.flush();
  }

  save_checkpoint(ckpt, model,
                  {{"experiment_id", cfg.experiment_id},
                   {"class_names", data.class_names},
                   {"epochs", cfg.training.epochs},
                   {"protocol", protocol},
                   {"seed", cfg.seed}});
  out << "checkpoint: " << ckpt.string() << '\n';
  return exit_success;
}

// ---------------------------------------------------------------------------

struct EvaluateArgs {
  std::vector<std::string> modes;
};

int cmd_evaluate(const CommonOptions& o, const EvaluateArgs& a, std::ostream& out) {
  const ExperimentConfig cfg = resolve_config(o);
  if (o.checkpoint.empty()) throw ConfigError("evaluate needs --checkpoint");
  const DatasetSplit data = load_dataset(cfg);
  if (data.test.empty()) throw ConfigError("the test split is empty");
  const RiGcnModel model = load_matching(o.checkpoint, data.class_names);
  const auto modes = parse_modes(a.modes.empty() ? std::vector<std::string>{to_string(cfg.protocol.test_rotation)}
                                                  : a.modes);
  echo_config(cfg, &model.config());
  auto csv = open_output(cfg.output_dir / "evaluation.csv");
  write_metrics_header(csv, data.class_names);

  for (RotationMode mode : modes) {
    Rng rng(derive_seed(cfg.seed, eval_stream));
    const EvalResult r = evaluate(model, data.test, mode, rng);
    const std::string protocol = std::string(to_string(cfg.protocol.train_rotation)) + "/" + to_string(mode);
    write_metrics_row(csv, cfg, protocol, 0, "test", r.accuracy, r.mean_loss, r.per_class_accuracy);
    out << "mode " << to_string(mode) << ": accuracy " << std::fixed << std::setprecision(4) << r.accuracy
        << "  loss " << r.mean_loss << '\n';
    for (std::size_t c = 0; c < data.class_names.size(); ++c) {
      out << "  " << std::left << std::setw(14) << data.class_names[c] << std::right << ' '
          << r.per_class_accuracy[c] << "  (" << r.per_class_count[c] << ")\n";
    }
    out << std::defaultfloat;
  }
  return exit_success;
}

// ---------------------------------------------------------------------------

struct InvarianceArgs {
  std::size_t trials = 100;
  std::size_t clouds = 20;
  std::string mode = "so3";
  std::string transform_scope;
};

int cmd_invariance(const CommonOptions& o, const InvarianceArgs& a, std::ostream& out) {
  ExperimentConfig cfg = resolve_config(o);
  if (!a.transform_scope.empty()) cfg.model.transform = parse_transform_scope(a.transform_scope);
  if (a.trials == 0 || a.clouds == 0) throw ConfigError("--trials and --clouds must be >= 1");
  const RotationMode mode = parse_modes({a.mode}).front();
  const DatasetSplit data = load_dataset(cfg);
  RiGcnModel model = o.checkpoint.empty()
                         ? RiGcnModel(resolved_model_config(cfg, data.class_names.size()))
                         : load_matching(o.checkpoint, data.class_names);
  if (!a.transform_scope.empty() && !o.checkpoint.empty()) {
    RiGcnConfig mc = model.config();
    mc.transform = cfg.model.transform;
    RiGcnModel rebuilt(mc);
    for (std::size_t i = 0; i < model.params().size(); ++i) rebuilt.params()[i].value = model.params()[i].value;
    model = std::move(rebuilt);
  }

  // a divisor of the trial count, so exactly `trials` pairs are compared
  std::size_t cloud_count = std::min(a.clouds, a.trials);
  while (a.trials % cloud_count != 0) --cloud_count;
  std::vector<PointCloud> clouds;
  for (const auto* split : {&data.test, &data.train}) {
    for (const auto& s : *split) {
      if (clouds.size() < cloud_count) clouds.push_back(s.cloud);
    }
  }
  if (clouds.size() < cloud_count) {
    throw ConfigError("the dataset has " + std::to_string(clouds.size()) + " clouds, " +
                      std::to_string(cloud_count) + " needed");
  }
  const std::size_t rotations = a.trials / cloud_count;
  Rng rng(derive_seed(cfg.seed, 0x1a7));
  const InvarianceReport r = invariance_check(model, clouds, rotations, mode, rng);

  echo_config(cfg, &model.config());
  const json report = {{"trials", r.trials},
                       {"clouds", clouds.size()},
                       {"mode", to_string(mode)},
                       {"transform_scope", to_string(model.config().transform)},
                       {"max_deviation", r.max_deviation},
                       {"max_scaled_deviation", r.max_scaled_deviation},
                       {"argmax_mismatches", r.argmax_mismatches},
                       {"low_margin_trials", r.low_margin_trials},
                       {"min_eigen_gap", r.min_eigen_gap},
                       {"degenerate_patches", r.degenerate_patches},
                       {"passed", r.passed()}};
  open_output(cfg.output_dir / "invariance.json") << report.dump(2) << '\n';
  out << std::setprecision(6) << "trials " << r.trials << "  max_deviation " << r.max_deviation
      << "  scaled " << r.max_scaled_deviation << "  argmax_mismatches " << r.argmax_mismatches
      << "  low_margin " << r.low_margin_trials << "  min_eigen_gap " << r.min_eigen_gap << '\n'
      << (r.passed() ? "PASS" : "FAIL") << '\n';
  return r.passed() ? exit_success : exit_check_failed;
}

// ---------------------------------------------------------------------------

struct RobustnessArgs {
  std::vector<double> sigmas{0.0, 0.02, 0.04, 0.06, 0.08, 0.1};
  std::vector<std::size_t> outliers{0, 10, 50, 100};
  std::string mode;
};

int cmd_robustness(const CommonOptions& o, const RobustnessArgs& a, std::ostream& out) {
  const ExperimentConfig cfg = resolve_config(o);
  if (o.checkpoint.empty()) throw ConfigError("robustness needs --checkpoint");
  for (double s : a.sigmas) {
    if (!(s >= 0.0)) throw ConfigError("noise sigma must be >= 0");
  }
  const RotationMode mode = a.mode.empty() ? cfg.protocol.test_rotation : parse_modes({a.mode}).front();
  const DatasetSplit data = load_dataset(cfg);
  if (data.test.empty()) throw ConfigError("the test split is empty");
  const RiGcnModel model = load_matching(o.checkpoint, data.class_names);
  const auto rows = robustness_sweep(model, data.test, mode, a.sigmas, a.outliers,
                                     derive_seed(cfg.seed, eval_stream));
  echo_config(cfg, &model.config());
  auto csv = open_output(cfg.output_dir / "robustness.csv");
  csv << "sigma,outliers,accuracy\n";
  for (const auto& r : rows) {
    csv << r.sigma << ',' << r.outliers << ',' << r.accuracy << '\n';
    out << "sigma " << r.sigma << "  outliers " << r.outliers << "  accuracy " << r.accuracy << '\n';
  }
  return exit_success;
}

// ---------------------------------------------------------------------------

struct ExportArgs {
  std::string cloud;
};

int cmd_export_graphs(const CommonOptions& o, const ExportArgs& a, std::ostream& out) {
  const ExperimentConfig cfg = resolve_config(o);
  const std::size_t points = cfg.dataset.points == 0 ? cfg.model.input_size : cfg.dataset.points;
  PointCloud cloud;
  std::optional<RiGcnModel> model;
  if (!o.checkpoint.empty()) model.emplace(load_checkpoint(o.checkpoint).model);
  if (!a.cloud.empty()) {
    const fs::path path = a.cloud;
    if (path.extension() == ".off" || path.extension() == ".OFF") {
      Rng rng(derive_seed(cfg.seed, 0x0ff));
      cloud = normalize_unit_sphere(sample_mesh_surface(read_off(path), points, rng));
    } else {
      cloud = read_xyz(path);
    }
  } else {
    const DatasetSplit data = load_dataset(cfg);
    cloud = data.test.empty() ? data.train.front().cloud : data.test.front().cloud;
  }
  if (!model) model.emplace(resolved_model_config(cfg, std::max<std::size_t>(cfg.model.num_classes, 1)));

  nn::Tape tape;
  Rng rng(0);
  ForwardTrace trace;
  forward(tape, cloud, *model, rng, false, &trace);
  echo_config(cfg, &model->config());
  for (std::size_t l = 0; l < trace.levels.size(); ++l) {
    const auto& pts = trace.levels[l].points;
    const int n = static_cast<int>(pts.size());
    Rng unused(0);
    const int khat = std::clamp(sample_interval(unused, model->config().khat, false), 1, n - 1);
    const WeightedGraph graph = build_knn_graph(pts, khat);
    const std::string stem = "level" + std::to_string(l);
    auto nodes = open_output(cfg.output_dir / (stem + "_nodes.txt"));
    auto edges = open_output(cfg.output_dir / (stem + "_edges.txt"));
    write_graph_nodes(nodes, pts);
    write_graph_edges(edges, graph);
    out << stem << ": " << pts.size() << " nodes, khat " << khat << '\n';
  }
  return exit_success;
}

// ---------------------------------------------------------------------------

struct GradcheckArgs {
  std::optional<std::size_t> corrupt_block;
  double epsilon = 1e-6;
};

RiGcnConfig small_gradcheck_config() {
  RiGcnConfig c;
  c.input_size = 32;
  c.levels = 3;
  c.representatives = {16, 8, 4};
  c.channels = {6, 8, 10};
  c.k = {4, 6};
  c.d = {1, 2};
  c.khat = {2, 3};
  c.extension_k = {2, 3};
  c.classifier_widths = {8};
  c.num_classes = 3;
  return c;
}

int cmd_gradcheck(const CommonOptions& o, const GradcheckArgs& a, std::ostream& out) {
  RiGcnConfig mc = small_gradcheck_config();
  std::uint64_t seed = 0;
  if (!o.config.empty()) {
    const ExperimentConfig cfg = resolve_config(o);
    mc = cfg.model;
    seed = cfg.seed;
  } else {
    for (const auto& ab : o.ablations) apply_override(mc, ab);
    if (o.seed) seed = *o.seed;
  }
  mc.seed = seed;
  if (mc.input_size > 64) {
    throw ConfigError("gradcheck needs a small config (input_size <= 64, got " +
                      std::to_string(mc.input_size) + ")");
  }
  RiGcnModel model(mc);
  if (a.corrupt_block && *a.corrupt_block >= model.params().size()) {
    throw ConfigError("--corrupt-block out of range");
  }
  Rng rng(derive_seed(seed, 0x9c));
  const PointCloud cloud = generate_shape("torus", mc.input_size, 0.1, 0.1, rng);
  ModelGradcheckOptions opts;
  opts.epsilon = a.epsilon;
  opts.corrupt_block = a.corrupt_block;
  const auto report = model_gradient_check(model, cloud, seed % mc.num_classes, opts);

  std::size_t width = 5;
  for (const auto& b : report.blocks) width = std::max(width, b.name.size());
  out << std::left << std::setw(static_cast<int>(width)) << "block" << "  max_rel_error\n";
  std::vector<std::string> failing;
  for (const auto& b : report.blocks) {
    out << std::left << std::setw(static_cast<int>(width)) << b.name << "  " << std::scientific
        << std::setprecision(3) << b.max_relative_error << std::defaultfloat << '\n';
    if (!(b.max_relative_error <= gradcheck_tolerance)) failing.push_back(b.name);
  }
  out << "max relative error " << std::scientific << report.max_relative_error << std::defaultfloat << '\n';
  if (!failing.empty()) {
    out << "FAIL:";
    for (const auto& f : failing) out << ' ' << f;
    out << '\n';
    return exit_check_failed;
  }
  out << "PASS\n";
  return exit_success;
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const CommonOptions& o, std::ostream& out) {
  const ExperimentConfig cfg = resolve_config(o);
  const DatasetSplit data = load_dataset(cfg);
  echo_config(cfg, nullptr);
  const auto manifest = export_dataset(data, cfg.output_dir / "data");
  out << data.train.size() << " train / " << data.test.size() << " test clouds written; manifest "
      << manifest.string() << '\n';
  return exit_success;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Rotation-invariant point cloud recognition with graph convolutions", "rigcn"};
  app.require_subcommand(1);
  CommonOptions common;

  auto* train = app.add_subcommand("train", "Train a model and write metrics and a checkpoint");
  TrainArgs train_args;
  add_common(*train, common, true);
  train->add_option("--epochs", train_args.epochs, "Number of epochs (overrides the config)");

  auto* eval = app.add_subcommand("evaluate", "Evaluate a checkpoint on the test split");
  EvaluateArgs eval_args;
  add_common(*eval, common, true);
  eval->add_option("--modes", eval_args.modes, "Test rotation modes (none,z,so3)")->delimiter(',');

  auto* inv = app.add_subcommand("invariance-check", "Compare logits of clouds and rotated copies");
  InvarianceArgs inv_args;
  add_common(*inv, common, true);
  inv->add_option("--trials", inv_args.trials, "Number of (cloud, rotation) pairs");
  inv->add_option("--clouds", inv_args.clouds, "Number of distinct clouds");
  inv->add_option("--mode", inv_args.mode, "Rotation mode (none|z|so3)");
  inv->add_option("--transform-scope", inv_args.transform_scope, "local|global");

  auto* rob = app.add_subcommand("robustness", "Accuracy under noise and outliers");
  RobustnessArgs rob_args;
  add_common(*rob, common, true);
  rob->add_option("--sigmas", rob_args.sigmas, "Noise standard deviations")->delimiter(',');
  rob->add_option("--outliers", rob_args.outliers, "Outlier counts")->delimiter(',');
  rob->add_option("--mode", rob_args.mode, "Test rotation mode (default: the protocol's)");

  auto* exp = app.add_subcommand("export-graphs", "Write per-level node and edge files");
  ExportArgs exp_args;
  add_common(*exp, common, true);
  exp->add_option("--cloud", exp_args.cloud, "Input cloud (.xyz or .off)");

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every parameter block");
  GradcheckArgs grad_args;
  add_common(*grad, common, false);
  grad->add_option("--epsilon", grad_args.epsilon, "Central difference step");
  grad->add_option("--corrupt-block", grad_args.corrupt_block)->group("");

  auto* gen = app.add_subcommand("gen-data", "Write the configured synthetic dataset as XYZ files");
  add_common(*gen, common, false);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? exit_success : exit_usage;
  }

  try {
    if (train->parsed()) return cmd_train(common, train_args, out);
    if (eval->parsed()) return cmd_evaluate(common, eval_args, out);
    if (inv->parsed()) return cmd_invariance(common, inv_args, out);
    if (rob->parsed()) return cmd_robustness(common, rob_args, out);
    if (exp->parsed()) return cmd_export_graphs(common, exp_args, out);
    if (grad->parsed()) return cmd_gradcheck(common, grad_args, out);
    if (gen->parsed()) return cmd_gen_data(common, out);
  } catch (const TrainingDivergenceError& e) {
    err << "diverged: " << e.what() << '\n';
    return exit_diverged;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return exit_usage;
  } catch (const InvalidArgumentError& e) {
    err << "invalid argument: " << e.what() << '\n';
    return exit_usage;
  } catch (const InvalidInputError& e) {
    err << "invalid input: " << e.what() << '\n';
    return exit_usage;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << '\n';
    return exit_usage;
  } catch (const nlohmann::json::exception& e) {
    err << "config error: " << e.what() << '\n';
    return exit_usage;
  } catch (const fs::filesystem_error& e) {
    err << "file error: " << e.what() << '\n';
    return exit_usage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_check_failed;
  }
  return exit_usage;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, out, err);
}

}  // namespace rigcn

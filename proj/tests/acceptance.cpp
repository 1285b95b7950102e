// Acceptance run: one PASS/FAIL line per criterion, exit 1 if any fails.
// Usage: acceptance [work_dir]

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"
#include "oracles.hpp"
#include "rigcn/cli.hpp"
#include "rigcn/experiment.hpp"
#include "rigcn/train.hpp"
#include "support.hpp"

using namespace rigcn;
namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  std::printf("criterion %2d %s  %s: %s\n", id, pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(slurp(p));
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

// ---------------------------------------------------------------------------

struct DeskRun {
  bool ok = false;
  double seconds = 0;
  std::size_t epochs = 0;
  double final_accuracy = 0;
  std::string error;
  fs::path config;
  fs::path checkpoint;
  ExperimentConfig experiment;
};

DeskRun train_desk(const fs::path& work) {
  DeskRun run;
  run.config = fs::path(RIGCN_SOURCE_DIR) / "configs" / "desk.json";
  run.experiment = load_experiment(run.config);
  const fs::path out = work / "desk";
  const auto t0 = Clock::now();
  auto r = cli({"train", "--config", run.config.string(), "--out", out.string()});
  run.seconds = seconds_since(t0);
  if (r.code != 0) {
    run.error = "train exited with " + std::to_string(r.code) + ": " + r.err;
    return run;
  }
  std::cerr << r.out;
  run.checkpoint = out / "model.ckpt";
  for (const auto& row : read_csv(out / "metrics.csv")) {
    if (row.size() > 4 && row[3] == "test") {
      run.epochs = std::stoul(row[2]);
      run.final_accuracy = std::stod(row[4]);
    }
  }
  run.ok = true;
  return run;
}

void criterion_invariance(const RiGcnModel& model, const DatasetSplit& data) {
  std::vector<PointCloud> clouds;
  for (std::size_t i = 0; i < 20; ++i) clouds.push_back(data.test[i * data.test.size() / 20].cloud);
  Rng rng(2024);
  const auto t0 = Clock::now();
  const auto r = invariance_check(model, clouds, 100, RotationMode::so3, rng);
  const double s = seconds_since(t0);
  report(1, "rotation invariance", r.passed(1e-5) && r.trials == 2000 && s <= 300,
         std::to_string(r.trials) + " trials, max deviation " + fmt("%.3g", r.max_deviation) +
             ", scaled " + fmt("%.3g", r.max_scaled_deviation) + " (limit 1e-5), " +
             std::to_string(r.argmax_mismatches) + " argmax changes (" +
             std::to_string(r.low_margin_trials) + " low-margin trials), " + fmt("%.1f s", s));
}

void criterion_protocol_equivalence(const RiGcnModel& model, const DatasetSplit& data) {
  std::vector<std::vector<std::size_t>> predictions;
  std::vector<double> accuracy;
  for (auto mode : {RotationMode::none, RotationMode::z, RotationMode::so3}) {
    Rng rng(77);
    const auto r = evaluate(model, data.test, mode, rng);
    predictions.push_back(r.predictions);
    accuracy.push_back(r.accuracy);
  }
  const bool same = predictions[0] == predictions[1] && predictions[0] == predictions[2];
  report(2, "z-trained model equal under none/z/so3", same,
         "accuracies " + fmt("%.4f", accuracy[0]) + " / " + fmt("%.4f", accuracy[1]) + " / " +
             fmt("%.4f", accuracy[2]) + ", predictions " + (same ? "identical" : "differ"));
}

void criterion_desk_learning(const DeskRun& run) {
  if (!run.ok) {
    report(3, "desk-scale learning", false, run.error);
    return;
  }
  const bool pass = run.epochs <= 50 && run.final_accuracy >= 0.9 && run.seconds <= 1200;
  report(3, "desk-scale learning", pass,
         "so3 test accuracy " + fmt("%.4f", run.final_accuracy) + " after " + std::to_string(run.epochs) +
             " epochs (z-train), " + fmt("%.0f s", run.seconds) + " (limits >= 0.90, <= 50 epochs, <= 1200 s)");
}

void criterion_gradcheck() {
  auto r = cli({"gradcheck"});
  double max_err = -1;
  std::size_t blocks = 0;
  std::istringstream in(r.out);
  for (std::string line; std::getline(in, line);) {
    if (line.rfind("max relative error ", 0) == 0) max_err = std::stod(line.substr(19));
    else if (line.find(".weight ") != std::string::npos || line.find(".bias ") != std::string::npos) ++blocks;
  }
  report(4, "gradient check", r.code == 0 && max_err >= 0 && max_err <= 1e-5,
         std::to_string(blocks) + " blocks, max relative error " + fmt("%.3g", max_err) + " (limit 1e-5)");
}

void criterion_fps() {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1, 1);
  int violations = 0;
  double worst = 1e300;
  for (int t = 0; t < 200; ++t) {
    const int n = std::uniform_int_distribution<int>(2, 8)(rng);
    const std::size_t m = std::uniform_int_distribution<std::size_t>(2, std::min(3, n))(rng);
    std::vector<Vec3> pts;
    for (int i = 0; i < n; ++i) pts.emplace_back(u(rng), u(rng), u(rng));
    const auto p3 = testing_support::to_p3(pts);
    const double got = oracle::min_pairwise(p3, farthest_point_sampling(pts, m));
    const double best = oracle::best_dispersion(p3, m);
    worst = std::min(worst, got / best);
    if (got < 0.5 * best) ++violations;
  }
  report(5, "FPS 2-approximation", violations == 0,
         "200 instances, " + std::to_string(violations) + " violations, worst ratio " + fmt("%.3f", worst));
}

void criterion_adjacency() {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0, 1);
  double asym = 0, radius = 0;
  for (int t = 0; t < 100; ++t) {
    WeightedGraph g;
    if (t % 2 == 0) {
      const auto n = static_cast<Eigen::Index>(2 + t % 30);
      g.weights = nn::Matrix::Zero(n, n);
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j)
          if (u(rng) < 0.3) g.weights(i, j) = g.weights(j, i) = u(rng);
    } else {
      const auto cloud = testing_support::random_cloud(20 + static_cast<std::size_t>(t), 100 + static_cast<std::uint64_t>(t));
      g = build_knn_graph(cloud.points, 1 + t % 12);
    }
    const nn::Matrix a = renormalize(g).entries;
    asym = std::max(asym, (a - a.transpose()).cwiseAbs().maxCoeff());
    oracle::Dense dense(static_cast<std::size_t>(a.rows()), std::vector<double>(static_cast<std::size_t>(a.cols())));
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      for (Eigen::Index j = 0; j < a.cols(); ++j) dense[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = a(i, j);
    radius = std::max(radius, oracle::spectral_radius(dense));
  }
  bool identity = true;
  for (Eigen::Index n = 1; n <= 12; ++n) {
    identity = identity && renormalize(WeightedGraph{nn::Matrix::Zero(n, n)}).entries == nn::Matrix::Identity(n, n);
  }
  report(6, "renormalized adjacency", asym <= 1e-12 && radius <= 1 + 1e-9 && identity,
         "100 graphs, max asymmetry " + fmt("%.2g", asym) + ", max spectral radius " + fmt("%.12f", radius) +
             ", edgeless case " + (identity ? "exactly I" : "not I"));
}

// ---------------------------------------------------------------------------

double final_test_accuracy(const fs::path& metrics) {
  double acc = -1;
  for (const auto& row : read_csv(metrics)) {
    if (row.size() > 4 && row[3] == "test") acc = std::stod(row[4]);
  }
  return acc;
}

void criterion_ablations(const DeskRun& desk, const DatasetSplit& data, const fs::path& work) {
  // every toggle combination, one epoch on a per-class subset of the desk data
  const auto t0 = Clock::now();
  std::vector<LabeledCloud> train, test;
  std::vector<int> seen_train(data.class_names.size(), 0), seen_test(data.class_names.size(), 0);
  for (const auto& s : data.train) {
    if (seen_train[s.label]++ < 2) train.push_back(s);
  }
  for (const auto& s : data.test) {
    if (seen_test[s.label]++ < 1) test.push_back(s);
  }
  std::size_t ran = 0;
  std::string first_error;
  for (int mask = 0; mask < 128; ++mask) {
    RiGcnConfig c = resolved_model_config(desk.experiment, data.class_names.size());
    c.stochastic_d = mask & 1;
    c.stochastic_k = mask & 2;
    c.stochastic_khat = mask & 4;
    c.abstraction = (mask & 8) ? AbstractionKind::mlp : AbstractionKind::gcn;
    c.transform = (mask & 16) ? TransformScope::global : TransformScope::local;
    c.levels = 1 + static_cast<std::size_t>(mask >> 5);
    if (c.representatives.size() < c.levels) c.representatives.push_back(c.representatives.back() / 2);
    if (c.channels.size() < c.levels) c.channels.push_back(c.channels.back());
    try {
      RiGcnModel model(c);
      nn::Optimizer opt({nn::OptimizerKind::adam, 2e-3});
      Rng rng(static_cast<std::uint64_t>(mask));
      train_epoch(model, train, RotationMode::z, opt, rng, {8, 0});
      const double acc = evaluate(model, test, RotationMode::so3, rng).accuracy;
      if (acc >= 0.0 && acc <= 1.0) ++ran;
    } catch (const std::exception& e) {
      if (first_error.empty()) first_error = "combination " + std::to_string(mask) + ": " + e.what();
    }
  }
  const double grid_seconds = seconds_since(t0);

  // directional check: full vs reduced configuration, desk protocol, same seeds
  double full_sum = 0, reduced_sum = 0;
  std::string per_seed;
  for (std::uint64_t seed : {3, 4, 5}) {
    const std::string tag = std::to_string(seed);
    double full = -1;
    if (seed == desk.experiment.seed) {
      full = desk.final_accuracy;
    } else {
      const fs::path out = work / ("full_" + tag);
      if (cli({"train", "--config", desk.config.string(), "--seed", tag, "--out", out.string()}).code == 0) {
        full = final_test_accuracy(out / "metrics.csv");
      }
    }
    const fs::path out = work / ("reduced_" + tag);
    double reduced = -1;
    if (cli({"train", "--config", desk.config.string(), "--seed", tag, "--out", out.string(), "--ablation",
             "levels=1", "--ablation", "abstraction=mlp", "--ablation", "transform_scope=global", "--ablation",
             "stochastic_d=false", "--ablation", "stochastic_k=false", "--ablation", "stochastic_khat=false"})
            .code == 0) {
      reduced = final_test_accuracy(out / "metrics.csv");
    }
    full_sum += full;
    reduced_sum += reduced;
    per_seed += " " + fmt("%.3f", full) + "/" + fmt("%.3f", reduced);
  }
  const bool pass = ran == 128 && full_sum >= reduced_sum;
  std::string detail = std::to_string(ran) + "/128 combinations ran (" + fmt("%.0f s", grid_seconds) +
                       "); mean so3 accuracy stochastic/gcn/local/L=3 " + fmt("%.3f", full_sum / 3) +
                       " vs deterministic/mlp/global/L=1 " + fmt("%.3f", reduced_sum / 3) +
                       " (seeds 3,4,5:" + per_seed + ")";
  if (!first_error.empty()) detail += "; " + first_error;
  report(7, "ablation scaffolding", pass, detail);
}

void criterion_robustness(const DeskRun& run, const fs::path& work) {
  const fs::path out = work / "robustness";
  auto r = cli({"robustness", "--config", run.config.string(), "--checkpoint", run.checkpoint.string(),
                "--sigmas", "0,0.02,0.04,0.06,0.08,0.1", "--outliers", "0,10,50,100", "--out", out.string()});
  auto e = cli({"evaluate", "--config", run.config.string(), "--checkpoint", run.checkpoint.string(), "--out",
                (work / "clean").string()});
  if (r.code != 0 || e.code != 0) {
    report(8, "robustness harness", false, "robustness exit " + std::to_string(r.code) + ", evaluate exit " +
                                              std::to_string(e.code) + ": " + r.err + e.err);
    return;
  }
  const auto rows = read_csv(out / "robustness.csv");
  const auto clean = read_csv(work / "clean" / "evaluation.csv");
  bool shape = rows.size() == 25 && rows[0] == std::vector<std::string>{"sigma", "outliers", "accuracy"};
  for (std::size_t i = 1; shape && i < rows.size(); ++i) {
    shape = rows[i].size() == 3 && std::stod(rows[i][0]) == std::vector<double>{0, 0.02, 0.04, 0.06, 0.08, 0.1}[(i - 1) / 4] &&
            std::stoul(rows[i][1]) == std::vector<std::size_t>{0, 10, 50, 100}[(i - 1) % 4];
  }
  const bool clean_equal = shape && rows[1][2] == clean[1][4];
  const double harshest = shape ? std::stod(rows.back()[2]) : 0.0;
  std::string grid;
  for (std::size_t i = 1; shape && i < rows.size(); i += 4) {
    grid += " s=" + fmt("%.2f", std::stod(rows[i][0])) + ":";
    for (std::size_t j = 0; j < 4; ++j) grid += " " + fmt("%.3f", std::stod(rows[i + j][2]));
  }
  report(8, "robustness harness", shape && clean_equal && harshest > 0,
         std::string("24 cells") + (shape ? "" : " (bad shape)") + ", clean cell " + (clean_equal ? "==" : "!=") +
             " evaluate (" + (shape ? rows[1][2] : "?") + "), harshest " + fmt("%.3f", harshest) +
             "; outliers 0/10/50/100 per sigma:" + grid);
}

void criterion_permutation(const RiGcnModel& model) {
  std::mt19937_64 rng(9);
  double worst = 0;
  for (std::uint64_t c = 0; c < 50; ++c) {
    const PointCloud cloud = testing_support::random_cloud(model.config().input_size, 500 + c);
    const nn::Matrix reference = predict_logits(model, cloud);
    for (int p = 0; p < 10; ++p) {
      std::vector<std::size_t> perm(cloud.size());
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      PointCloud shuffled;
      for (std::size_t i : perm) shuffled.points.push_back(cloud.points[i]);
      worst = std::max(worst, (predict_logits(model, shuffled) - reference).cwiseAbs().maxCoeff());
    }
  }
  report(9, "permutation invariance", worst <= 1e-8,
         "500 permuted clouds, max logit deviation " + fmt("%.3g", worst) + " (limit 1e-8)");
}

// ---------------------------------------------------------------------------

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().filename() != "timing.csv") {
      files[fs::relative(e.path(), dir).generic_string()] = slurp(e.path());
    }
  }
  return files;
}

void criterion_reproducibility(const fs::path& work) {
  const fs::path dir = work / "repro";
  fs::create_directories(dir);
  json cfg = json::parse(R"({
    "experiment_id": "repro",
    "model": {"input_size": 128, "levels": 3, "representatives": [48, 16, 8], "channels": [12, 16, 24],
              "k": [8, 12], "d": [1, 3], "khat": [3, 5], "extension_k": [3, 5], "classifier_widths": [16]},
    "dataset": {"kind": "synthetic", "classes": ["sphere", "cube", "torus", "helix"], "instances_per_class": 6},
    "training": {"epochs": 2, "batch_size": 3},
    "seed": 21
  })");
  const fs::path cfg_path = dir / "repro.json";
  std::ofstream(cfg_path) << cfg.dump(2);
  const fs::path out = dir / "out";

  auto pipeline = [&]() {
    const std::string c = cfg_path.string(), o = out.string();
    const std::string ckpt = (out / "train" / "model.ckpt").string();
    const std::vector<std::vector<std::string>> commands = {
        {"train", "--config", c, "--out", o + "/train", "--deterministic"},
        {"evaluate", "--config", c, "--checkpoint", ckpt, "--modes", "none,z,so3", "--out", o + "/evaluate"},
        {"invariance-check", "--config", c, "--checkpoint", ckpt, "--trials", "20", "--out", o + "/invariance"},
        {"robustness", "--config", c, "--checkpoint", ckpt, "--sigmas", "0,0.05", "--outliers", "0,20", "--out",
         o + "/robustness"},
        {"export-graphs", "--config", c, "--checkpoint", ckpt, "--out", o + "/graphs"},
        {"gen-data", "--config", c, "--out", o + "/data"},
        {"gradcheck", "--seed", "4"},
    };
    std::vector<std::pair<int, std::string>> outputs;
    for (const auto& cmd : commands) {
      auto r = cli(cmd);
      outputs.emplace_back(r.code, r.out);
    }
    return outputs;
  };

  fs::remove_all(out);
  const auto first_out = pipeline();
  const auto first_files = snapshot(out);
  fs::remove_all(out);
  const auto second_out = pipeline();
  const auto second_files = snapshot(out);

  bool codes_ok = true;
  for (const auto& [code, text] : first_out) codes_ok = codes_ok && code == 0;
  std::size_t differing = 0;
  std::string first_diff;
  for (const auto& [name, content] : first_files) {
    auto it = second_files.find(name);
    if (it == second_files.end() || it->second != content) {
      ++differing;
      if (first_diff.empty()) first_diff = name;
    }
  }
  const bool stdout_same = first_out == second_out;
  report(10, "reproducibility", codes_ok && differing == 0 && stdout_same && first_files.size() == second_files.size(),
         "7 verbs run twice, " + std::to_string(first_files.size()) + " output files, " + std::to_string(differing) +
             " differ" + (first_diff.empty() ? "" : " (first: " + first_diff + ")") + ", console output " +
             (stdout_same ? "identical" : "differs") + (codes_ok ? "" : ", a command failed") +
             " (timing.csv excluded: wall time)");
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "rigcn_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);
  std::printf("acceptance run in %s, %zu worker threads\n", work.string().c_str(), default_thread_count());
  std::fflush(stdout);

  const DeskRun desk = train_desk(work);
  std::optional<RiGcnModel> model;
  DatasetSplit data;
  if (desk.ok) {
    model.emplace(load_checkpoint(desk.checkpoint).model);
    data = load_dataset(desk.experiment);
  }

  if (model) {
    criterion_invariance(*model, data);
    criterion_protocol_equivalence(*model, data);
  } else {
    report(1, "rotation invariance", false, "desk training failed: " + desk.error);
    report(2, "z-trained model equal under none/z/so3", false, "desk training failed");
  }
  criterion_desk_learning(desk);
  criterion_gradcheck();
  criterion_fps();
  criterion_adjacency();
  if (model) {
    criterion_ablations(desk, data, work);
  } else {
    report(7, "ablation scaffolding", false, "desk training failed");
  }
  if (model) {
    criterion_robustness(desk, work);
    criterion_permutation(*model);
  } else {
    report(8, "robustness harness", false, "desk training failed");
    report(9, "permutation invariance", false, "desk training failed");
  }
  criterion_reproducibility(work);

  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}

#include "rigcn/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

#include "rigcn/errors.hpp"

namespace rigcn {

std::size_t default_thread_count() {
  if (const char* env = std::getenv("RIGCN_THREADS")) {
    const long value = std::strtol(env, nullptr, 10);
    if (value > 0) return static_cast<std::size_t>(value);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, std::size_t threads,
                  const std::function<void(std::size_t)>& fn) {
  if (threads == 0) threads = default_thread_count();
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> workers;
  workers.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& w : workers) w.join();
  if (failure) std::rethrow_exception(failure);
}

namespace {

std::size_t argmax(const nn::Matrix& row) {
  Eigen::Index best = 0;
  row.row(0).maxCoeff(&best);
  return static_cast<std::size_t>(best);
}

struct SampleGradient {
  double loss = 0.0;
  bool correct = false;
  nn::GradientBuffer grads;
};

}  // namespace

EpochMetrics train_epoch(RiGcnModel& model, std::span<const LabeledCloud> samples,
                         RotationMode augmentation, nn::Optimizer& optimizer, Rng& rng,
                         const TrainOptions& options) {
  if (samples.empty()) throw InvalidArgumentError("train_epoch: empty training split");
  const std::size_t batch = std::max<std::size_t>(1, options.batch_size);

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::uint64_t> seeds(samples.size());
  for (auto& s : seeds) s = rng();

  const std::size_t classes = model.config().num_classes;
  for (const auto& item : samples) {
    if (item.label >= classes) {
      throw InvalidArgumentError("sample '" + item.source_id + "' has label " +
                                 std::to_string(item.label) + " but the model has " +
                                 std::to_string(classes) + " classes");
    }
  }
  double loss_sum = 0.0;
  std::size_t correct = 0;
  std::vector<double> class_correct(classes, 0.0), class_count(classes, 0.0);
  auto& params = model.params();
  params.zero_grad();
  for (std::size_t start = 0; start < order.size(); start += batch) {
    const std::size_t count = std::min(batch, order.size() - start);
    std::vector<SampleGradient> results(count);
    parallel_for(count, options.threads, [&](std::size_t j) {
      const std::size_t position = start + j;
      const LabeledCloud& item = samples[order[position]];
      Rng sample_rng(seeds[position]);
      const PointCloud cloud = rotate(item.cloud, random_rotation(sample_rng, augmentation));
      nn::Tape tape;
      const nn::Var logits = forward(tape, cloud, model, sample_rng, true);
      const nn::LossResult loss = nn::softmax_cross_entropy(tape.value(logits), item.label);
      if (!std::isfinite(loss.loss)) {
        throw TrainingDivergenceError("non-finite loss at sample " + std::to_string(order[position]) +
                                      " (" + item.source_id + ")");
      }
      tape.backward(logits, loss.grad);
      results[j].loss = loss.loss;
      results[j].correct = argmax(tape.value(logits)) == item.label;
      results[j].grads = tape.parameter_gradients(params.size());
    });
    for (std::size_t j = 0; j < count; ++j) {
      const auto& r = results[j];
      const std::size_t label = samples[order[start + j]].label;
      loss_sum += r.loss;
      correct += r.correct ? 1 : 0;
      class_count[label] += 1.0;
      class_correct[label] += r.correct ? 1.0 : 0.0;
      r.grads.add_to(params, 1.0 / static_cast<double>(count));
    }
    optimizer.step(params);
  }
  EpochMetrics m;
  m.mean_loss = loss_sum / static_cast<double>(samples.size());
  m.accuracy = static_cast<double>(correct) / static_cast<double>(samples.size());
  m.per_class_accuracy.assign(classes, 0.0);
  for (std::size_t c = 0; c < classes; ++c) {
    if (class_count[c] > 0) m.per_class_accuracy[c] = class_correct[c] / class_count[c];
  }
  return m;
}

EvalResult evaluate(const RiGcnModel& model, std::span<const LabeledCloud> samples,
                    RotationMode mode, Rng& rng, const EvalOptions& options) {
  if (samples.empty()) throw InvalidArgumentError("evaluate: empty split");
  const std::size_t classes = model.config().num_classes;
  std::vector<std::uint64_t> seeds(samples.size());
  for (auto& s : seeds) s = rng();

  EvalResult result;
  result.predictions.resize(samples.size());
  result.logits.resize(samples.size());
  std::vector<double> losses(samples.size());
  parallel_for(samples.size(), options.threads, [&](std::size_t i) {
    const LabeledCloud& item = samples[i];
    if (item.label >= classes) {
      throw InvalidArgumentError("sample '" + item.source_id + "' has label " +
                                 std::to_string(item.label) + " but the model has " +
                                 std::to_string(classes) + " classes");
    }
    Rng rotation_rng(seeds[i]);
    PointCloud cloud = item.cloud;
    if (options.corruption) {
      Rng corruption_rng(derive_seed(seeds[i], 0xc0));
      cloud = corrupt(cloud, *options.corruption, corruption_rng);
    }
    cloud = rotate(cloud, random_rotation(rotation_rng, mode));
    result.logits[i] = predict_logits(model, cloud);
    result.predictions[i] = argmax(result.logits[i]);
    losses[i] = nn::softmax_cross_entropy(result.logits[i], item.label).loss;
  });

  result.per_class_accuracy.assign(classes, 0.0);
  result.per_class_count.assign(classes, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const std::size_t label = samples[i].label;
    ++result.per_class_count[label];
    if (result.predictions[i] == label) {
      ++correct;
      result.per_class_accuracy[label] += 1.0;
    }
    result.mean_loss += losses[i];
  }
  for (std::size_t c = 0; c < classes; ++c) {
    if (result.per_class_count[c] > 0) {
      result.per_class_accuracy[c] /= static_cast<double>(result.per_class_count[c]);
    }
  }
  result.accuracy = static_cast<double>(correct) / static_cast<double>(samples.size());
  result.mean_loss /= static_cast<double>(samples.size());
  return result;
}

nn::GradientCheckReport model_gradient_check(RiGcnModel& model, const PointCloud& cloud,
                                             std::size_t label,
                                             const ModelGradcheckOptions& options) {
  if (options.corrupt_block && *options.corrupt_block >= model.params().size()) {
    throw InvalidArgumentError("corrupt_block out of range");
  }
  auto loss = [&](nn::ParameterStore& params, bool with_grad) {
    nn::Tape tape;
    Rng rng(0);
    const nn::Var logits = forward(tape, cloud, model, rng, false);
    const nn::LossResult l = nn::softmax_cross_entropy(tape.value(logits), label);
    if (with_grad) {
      tape.backward(logits, l.grad);
      tape.accumulate_into(params);
      if (options.corrupt_block) params[*options.corrupt_block].grad *= 1.5;
    }
    return l.loss;
  };
  return nn::gradient_check(loss, model.params(), options.epsilon);
}

namespace {

double top2_margin(const nn::Matrix& logits) {
  if (logits.cols() < 2) return std::numeric_limits<double>::infinity();
  double first = -std::numeric_limits<double>::infinity(), second = first;
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const double v = logits(0, j);
    if (v > first) {
      second = first;
      first = v;
    } else if (v > second) {
      second = v;
    }
  }
  return first - second;
}

}  // namespace

InvarianceReport invariance_check(const RiGcnModel& model, std::span<const PointCloud> clouds,
                                  std::size_t rotations, RotationMode mode, Rng& rng,
                                  std::size_t threads) {
  std::vector<std::uint64_t> seeds(clouds.size());
  for (auto& s : seeds) s = rng();

  struct CloudResult {
    double deviation = 0.0, scaled = 0.0, gap = 0.0;
    std::size_t mismatches = 0, low_margin = 0, degenerate = 0;
  };
  std::vector<CloudResult> results(clouds.size());
  parallel_for(clouds.size(), threads, [&](std::size_t c) {
    CloudResult& r = results[c];
    nn::Tape tape;
    Rng det(0);
    ForwardTrace trace;
    const nn::Matrix ref = tape.value(forward(tape, clouds[c], model, det, false, &trace));
    r.gap = trace.min_eigen_gap;
    r.degenerate = trace.degenerate_patches;
    const double scale = 1.0 + ref.cwiseAbs().maxCoeff();
    const double margin = top2_margin(ref);
    Eigen::Index ref_arg = 0;
    ref.row(0).maxCoeff(&ref_arg);
    Rng rotation_rng(seeds[c]);
    for (std::size_t t = 0; t < rotations; ++t) {
      const nn::Matrix out = predict_logits(model, rotate(clouds[c], random_rotation(rotation_rng, mode)));
      const double dev = (out - ref).cwiseAbs().maxCoeff();
      r.deviation = std::max(r.deviation, dev);
      r.scaled = std::max(r.scaled, dev / scale);
      Eigen::Index arg = 0;
      out.row(0).maxCoeff(&arg);
      if (margin > 1e-4) {
        if (arg != ref_arg) ++r.mismatches;
      } else {
        ++r.low_margin;
      }
    }
  });

  InvarianceReport report;
  report.trials = clouds.size() * rotations;
  report.min_eigen_gap = std::numeric_limits<double>::infinity();
  for (const auto& r : results) {
    report.max_deviation = std::max(report.max_deviation, r.deviation);
    report.max_scaled_deviation = std::max(report.max_scaled_deviation, r.scaled);
    report.argmax_mismatches += r.mismatches;
    report.low_margin_trials += r.low_margin;
    report.degenerate_patches += r.degenerate;
    report.min_eigen_gap = std::min(report.min_eigen_gap, r.gap);
  }
  return report;
}

std::vector<RobustnessRow> robustness_sweep(const RiGcnModel& model,
                                            std::span<const LabeledCloud> samples,
                                            RotationMode mode, std::vector<double> sigmas,
                                            std::vector<std::size_t> outliers,
                                            std::uint64_t seed, std::size_t threads) {
  for (double s : sigmas) {
    if (!(s >= 0.0) || !std::isfinite(s)) throw InvalidArgumentError("noise sigma must be >= 0");
  }
  std::sort(sigmas.begin(), sigmas.end());
  sigmas.erase(std::unique(sigmas.begin(), sigmas.end()), sigmas.end());
  std::sort(outliers.begin(), outliers.end());
  outliers.erase(std::unique(outliers.begin(), outliers.end()), outliers.end());

  std::vector<RobustnessRow> rows;
  for (double s : sigmas) {
    for (auto o : outliers) {
      Rng rng(seed);
      EvalOptions options;
      options.threads = threads;
      if (s > 0.0 || o > 0) options.corruption = CorruptionSpec{s, o};
      rows.push_back({s, o, evaluate(model, samples, mode, rng, options).accuracy});
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'R', 'I', 'G', 'C', 'N', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw InvalidInputError("checkpoint is truncated");
  return value;
}

std::string read_string(std::istream& in, std::uint64_t size) {
  if (size > (1ULL << 32)) throw InvalidInputError("checkpoint string length is implausible");
  std::string s(size, '\0');
  in.read(s.data(), static_cast<std::streamsize>(size));
  if (!in) throw InvalidInputError("checkpoint is truncated");
  return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const RiGcnModel& model,
                     const nlohmann::json& metadata) {
  nlohmann::json meta = metadata;
  meta["model"] = to_json(model.config());
  const std::string text = meta.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInputError("cannot write checkpoint '" + path.string() + "'");
  out.write(kMagic, sizeof(kMagic));
  write_pod(out, kVersion);
  write_pod(out, static_cast<std::uint64_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  const auto& params = model.params();
  write_pod(out, static_cast<std::uint64_t>(params.size()));
  for (const auto& p : params.all()) {
    write_pod(out, static_cast<std::uint64_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    write_pod(out, static_cast<std::uint64_t>(p.value.rows()));
    write_pod(out, static_cast<std::uint64_t>(p.value.cols()));
    out.write(reinterpret_cast<const char*>(p.value.data()),
              static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(p.value.size())));
  }
  if (!out) throw InvalidInputError("failed writing checkpoint '" + path.string() + "'");
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInputError("cannot open checkpoint '" + path.string() + "'");
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw InvalidInputError("'" + path.string() + "' is not a checkpoint");
  }
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kVersion) {
    throw InvalidInputError("unsupported checkpoint version " + std::to_string(version));
  }
  nlohmann::json meta =
      nlohmann::json::parse(read_string(in, read_pod<std::uint64_t>(in)), nullptr, false);
  if (meta.is_discarded() || !meta.contains("model")) {
    throw InvalidInputError("checkpoint metadata is malformed");
  }
  RiGcnModel model(config_from_json(meta["model"]));
  auto& params = model.params();
  const auto count = read_pod<std::uint64_t>(in);
  if (count != params.size()) {
    throw ConfigError("checkpoint holds " + std::to_string(count) + " tensors, config expects " +
                      std::to_string(params.size()));
  }
  for (auto& p : params.all()) {
    const std::string name = read_string(in, read_pod<std::uint64_t>(in));
    const auto rows = read_pod<std::uint64_t>(in);
    const auto cols = read_pod<std::uint64_t>(in);
    if (name != p.name || rows != static_cast<std::uint64_t>(p.value.rows()) ||
        cols != static_cast<std::uint64_t>(p.value.cols())) {
      throw ConfigError("checkpoint tensor '" + name + "' does not match '" + p.name + "' " +
                        nn::shape_string(p.value));
    }
    in.read(reinterpret_cast<char*>(p.value.data()),
            static_cast<std::streamsize>(sizeof(double) * rows * cols));
    if (!in) throw InvalidInputError("checkpoint is truncated");
  }
  meta.erase("model");
  return {std::move(model), std::move(meta)};
}

}  // namespace rigcn

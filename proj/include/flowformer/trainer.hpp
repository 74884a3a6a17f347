#pragma once

// Training protocol, evaluation and throughput timing.
//
// Training holds out the final slice of the training windows as the
// early-stopping monitor; the evaluation split is never consulted. Windows
// between the two parts are dropped so no monitor flow appears inside a
// fitted window.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <string>
#include <vector>

#include "flowformer/error.hpp"
#include "flowformer/ingest.hpp"
#include "flowformer/metrics.hpp"
#include "flowformer/model.hpp"
#include "flowformer/nn/adam.hpp"
#include "flowformer/nn/ops.hpp"

namespace flowformer {

struct TrainProtocol {
  std::size_t max_epochs = 20;
  std::size_t patience = 5;
  double monitor_fraction = 0.1;
  bool restore_best = true;
};

enum class RunStatus { Ok, Diverged };

inline const char* to_string(RunStatus s) { return s == RunStatus::Ok ? "ok" : "diverged"; }

struct TrainHistory {
  std::vector<double> train_loss;    ///< mean loss per epoch
  std::vector<double> monitor_loss;  ///< per epoch
  std::vector<double> batch_seconds; ///< wall time of every optimization step
  std::vector<std::size_t> batch_sizes;
  std::size_t best_epoch = 0;  ///< 1-based; 0 if no epoch finished
  double best_monitor = std::numeric_limits<double>::infinity();
  RunStatus status = RunStatus::Ok;
  std::string failure;

  std::size_t epochs_run() const { return train_loss.size(); }
};

struct TrainHooks {
  /// Replaces the measured monitor value of an epoch (1-based).
  std::function<double(std::size_t epoch, double measured)> monitor;
  /// Called after every optimization step with the global step count.
  std::function<void(std::size_t step)> after_step;
};

struct MonitorSplit {
  std::vector<std::size_t> fit;
  std::vector<std::size_t> monitor;
};

inline MonitorSplit monitor_split(std::size_t n_windows, std::size_t window, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ValidationError("monitor fraction must lie in (0, 1)");
  const auto n_mon = std::max<std::size_t>(1, std::size_t(std::llround(fraction * double(n_windows))));
  const std::size_t gap = window - 1;
  if (n_windows < n_mon + gap + 1)
    throw ValidationError("too few training windows (" + std::to_string(n_windows) +
                          ") for a monitor slice");
  MonitorSplit s;
  s.fit.resize(n_windows - n_mon - gap);
  std::iota(s.fit.begin(), s.fit.end(), std::size_t{0});
  s.monitor.resize(n_mon);
  std::iota(s.monitor.begin(), s.monitor.end(), n_windows - n_mon);
  return s;
}

template <class T>
nn::Tensor<T> batch_tensor(const WindowBatch& b) {
  return nn::Tensor<T>({b.batch, b.window, b.width}, std::vector<T>(b.features.begin(), b.features.end()));
}

template <class T>
std::vector<T> batch_targets(const WindowBatch& b) {
  return std::vector<T>(b.labels.begin(), b.labels.end());
}

/// Malicious-class probabilities for the given windows (all if `ids` empty).
template <class T>
std::vector<double> predict_windows(const Model<T>& model, const WindowSet& windows,
                                    std::span<const std::size_t> ids = {}, std::size_t batch_size = 256) {
  std::vector<double> out;
  for (const auto& b : windows.batches(batch_size, ids)) {
    auto logits = model.predict(batch_tensor<T>(b));
    for (T z : logits.data()) out.push_back(double(nn::sigmoid_scalar(z)));
  }
  return out;
}

/// Mean binary cross-entropy over the given windows.
template <class T>
double mean_loss(const Model<T>& model, const WindowSet& windows, std::span<const std::size_t> ids,
                 std::size_t batch_size = 256) {
  double total = 0;
  std::size_t n = 0;
  for (const auto& b : windows.batches(batch_size, ids)) {
    nn::NoGradGuard guard;
    auto y = batch_targets<T>(b);
    auto loss = nn::bce_with_logits(model.predict(batch_tensor<T>(b)), std::span<const T>(y));
    total += double(loss.item()) * double(b.batch);
    n += b.batch;
  }
  return total / double(n);
}

template <class T>
TrainHistory train(Model<T>& model, const WindowSet& windows, const TrainProtocol& protocol,
                   const TrainHooks& hooks = {}) {
  if (windows.size() == 0) throw ValidationError("no training windows");
  if (protocol.max_epochs == 0) throw ValidationError("max_epochs must be positive");
  const auto& cfg = model.config();
  const auto split = monitor_split(windows.size(), windows.window(), protocol.monitor_fraction);

  nn::Rng shuffle_rng(nn::derive_seed(cfg.seed, {1}));
  nn::Rng dropout_rng(nn::derive_seed(cfg.seed, {2}));
  nn::AdamState<T> opt(cfg.learning_rate);
  auto& params = model.parameters();

  TrainHistory hist;
  std::vector<std::vector<T>> best;
  std::size_t stale = 0, step = 0;
  std::vector<std::size_t> order = split.fit;

  auto fail = [&](std::string why) {
    hist.status = RunStatus::Diverged;
    hist.failure = std::move(why);
    return hist;
  };

  for (std::size_t epoch = 1; epoch <= protocol.max_epochs; ++epoch) {
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    double total = 0;
    for (std::size_t i = 0; i < order.size(); i += cfg.batch_size) {
      const auto ids = std::span<const std::size_t>(order).subspan(i, std::min(cfg.batch_size, order.size() - i));
      const auto batch = windows.gather(ids);
      const auto x = batch_tensor<T>(batch);
      const auto y = batch_targets<T>(batch);

      const auto t0 = std::chrono::steady_clock::now();
      auto loss = nn::bce_with_logits(model.forward(x, true, dropout_rng), std::span<const T>(y));
      const double value = double(loss.item());
      if (!std::isfinite(value))
        return fail("non-finite training loss at epoch " + std::to_string(epoch));
      nn::backward(loss);
      for (auto& p : params) p.tensor.grad();  // parameters outside the graph get zero grads
      nn::adam_step(params, opt);
      hist.batch_seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
      hist.batch_sizes.push_back(batch.batch);

      total += value * double(batch.batch);
      if (hooks.after_step) hooks.after_step(++step);
    }
    hist.train_loss.push_back(total / double(order.size()));

    double mon = mean_loss(model, windows, split.monitor);
    if (hooks.monitor) mon = hooks.monitor(epoch, mon);
    hist.monitor_loss.push_back(mon);
    if (!std::isfinite(mon)) return fail("non-finite monitor loss at epoch " + std::to_string(epoch));

    if (mon < hist.best_monitor) {
      hist.best_monitor = mon;
      hist.best_epoch = epoch;
      stale = 0;
      if (protocol.restore_best) {
        best.clear();
        for (const auto& p : params) best.emplace_back(p.tensor.values());
      }
    } else if (++stale >= protocol.patience) {
      break;
    }
  }

  if (protocol.restore_best && !best.empty()) {
    std::size_t k = 0;
    for (auto& p : params) p.tensor.values() = best[k++];
  }
  return hist;
}

template <class T>
Metrics evaluate(const Model<T>& model, const WindowSet& windows, double threshold = 0.5) {
  if (windows.size() == 0) throw ValidationError("no evaluation windows");
  const auto probs = predict_windows(model, windows);
  Metrics m;
  for (std::size_t i = 0; i < probs.size(); ++i) m.add(probs[i] >= threshold, windows.label(i) != 0);
  return m;
}

// ---------------------------------------------------------------------------
// Throughput

/// Held by every timing measurement so two never overlap in one process.
inline std::mutex& timing_mutex() {
  static std::mutex m;
  return m;
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw ValidationError("median of an empty sample");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Flows/sec from per-step wall times: the reciprocal of the mean per-flow
/// time, where each step's per-flow time is its duration over its batch size.
inline double flows_per_second(std::span<const double> seconds, std::span<const std::size_t> sizes) {
  if (seconds.empty() || seconds.size() != sizes.size()) throw ValidationError("no timed batches");
  double per_flow = 0;
  for (std::size_t i = 0; i < seconds.size(); ++i) per_flow += seconds[i] / double(sizes[i]);
  per_flow /= double(seconds.size());
  return 1.0 / per_flow;
}

/// Training throughput from a run's recorded step times, skipping the first
/// (warm-up) step.
inline double training_throughput(const TrainHistory& h) {
  if (h.batch_seconds.size() < 2) throw ValidationError("training throughput needs at least 2 batches");
  return flows_per_second(std::span<const double>(h.batch_seconds).subspan(1),
                          std::span<const std::size_t>(h.batch_sizes).subspan(1));
}

/// `step(i)` performs one full optimization step on batch i and returns
/// its batch size. Batch 0 warms up and is not timed.
template <class Step>
double measure_training_throughput(Step&& step, std::size_t n_batches) {
  if (n_batches < 2) throw ValidationError("training throughput needs at least 2 batches");
  std::lock_guard lock(timing_mutex());
  step(std::size_t{0});
  std::vector<double> seconds;
  std::vector<std::size_t> sizes;
  for (std::size_t i = 1; i < n_batches; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    sizes.push_back(step(i));
    seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return flows_per_second(seconds, sizes);
}

struct InferenceTiming {
  double flows_per_sec = 0;
  double mean_batch_seconds = 0;
  std::size_t batches = 0;  ///< batches actually timed
  std::size_t batch_size = 0;
  std::string warning;
};

/// The seeded choice of batches to time: `n_batches` distinct indices, or
/// all of them when fewer are available.
inline std::vector<std::size_t> inference_sample(std::size_t available, std::size_t n_batches,
                                                 std::uint64_t seed) {
  std::vector<std::size_t> ids(available);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  nn::Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(ids));
  ids.resize(std::min(available, n_batches));
  return ids;
}

/// `forward(i)` runs inference on batch i of `available`. Each selected
/// batch is timed `repeats` times and contributes its median; throughput is
/// batch_size over the mean of those medians.
template <class Forward>
InferenceTiming measure_inference_throughput(Forward&& forward, std::size_t available, std::size_t batch_size,
                                             std::uint64_t seed, std::size_t n_batches = 50,
                                             std::size_t repeats = 4) {
  if (available == 0) throw ValidationError("no batches to time");
  InferenceTiming r;
  r.batch_size = batch_size;
  if (available < n_batches)
    r.warning = "only " + std::to_string(available) + " of " + std::to_string(n_batches) + " batches available";
  const auto ids = inference_sample(available, n_batches, seed);

  std::lock_guard lock(timing_mutex());
  std::vector<double> medians;
  for (auto id : ids) {
    std::vector<double> times;
    for (std::size_t k = 0; k < repeats; ++k) {
      const auto t0 = std::chrono::steady_clock::now();
      forward(id);
      times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    medians.push_back(median(std::move(times)));
  }
  r.batches = medians.size();
  r.mean_batch_seconds = std::accumulate(medians.begin(), medians.end(), 0.0) / double(medians.size());
  r.flows_per_sec = double(batch_size) / r.mean_batch_seconds;
  return r;
}

/// Inference timing over full batches of consecutive windows.
template <class T>
InferenceTiming measure_inference_throughput(const Model<T>& model, const WindowSet& windows,
                                             std::size_t batch_size, std::uint64_t seed,
                                             std::size_t n_batches = 50) {
  const std::size_t available = windows.size() / batch_size;
  if (available == 0) throw ValidationError("fewer windows than one inference batch");
  // inputs are assembled before timing starts
  std::map<std::size_t, nn::Tensor<T>> inputs;
  std::vector<std::size_t> rows(batch_size);
  for (auto b : inference_sample(available, n_batches, seed)) {
    std::iota(rows.begin(), rows.end(), b * batch_size);
    inputs.emplace(b, batch_tensor<T>(windows.gather(rows)));
  }
  return measure_inference_throughput([&](std::size_t b) { model.predict(inputs.at(b)); }, available,
                                      batch_size, seed, n_batches);
}

}  // namespace flowformer

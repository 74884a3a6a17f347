#pragma once

// Shared helpers for the test binaries: finite-difference gradient checks,
// brute-force reference ops and scratch directories.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "flowformer/flowformer.hpp"

namespace testing_support {

using flowformer::nn::Shape;
using flowformer::nn::Tensor;

inline Tensor<double> random_tensor(Shape shape, std::mt19937_64& gen, double lo = -1.0, double hi = 1.0,
                                    bool requires_grad = true) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(flowformer::nn::numel(shape));
  for (auto& x : v) x = dist(gen);
  return Tensor<double>(std::move(shape), std::move(v), requires_grad);
}

struct GradCheckResult {
  double max_rel_error = 0;
  std::size_t checked = 0;
};

/// Compares backward() against central differences of a scalar reduction
/// sum(r * f(inputs)) with fixed random r, so every output element is
/// exercised with a distinct weight. Relative error per element is
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-6).
inline GradCheckResult grad_check(const std::function<Tensor<double>(std::vector<Tensor<double>>&)>& f,
                                  std::vector<Tensor<double>> inputs, std::uint64_t seed, double h = 1e-4) {
  namespace nn = flowformer::nn;
  std::mt19937_64 gen(seed);
  auto out = f(inputs);
  const auto r = random_tensor(out.shape(), gen, 0.5, 1.5, false);
  auto objective = [&]() {
    nn::NoGradGuard g;
    auto y = f(inputs);
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += r.data()[i] * y.data()[i];
    return s;
  };

  for (auto& t : inputs) t.zero_grad();
  auto loss = nn::sum(nn::mul(f(inputs), r));
  nn::backward(loss);

  GradCheckResult res;
  for (auto& t : inputs) {
    if (!t.requires_grad()) continue;
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double orig = t.data()[i];
      t.data()[i] = orig + h;
      const double up = objective();
      t.data()[i] = orig - h;
      const double down = objective();
      t.data()[i] = orig;
      const double numeric = (up - down) / (2 * h);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-6});
      res.max_rel_error = std::max(res.max_rel_error, std::abs(analytic[i] - numeric) / denom);
      ++res.checked;
    }
  }
  return res;
}

/// Fresh empty directory under the system temp dir.
inline std::string scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("flowformer-test-" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

/// A fitted preprocessor over a random table with `n_cat` categorical
/// columns of about `levels` distinct values and `n_num` numerical ones.
inline flowformer::PreprocessorState random_state(flowformer::CategoricalFormat format, std::size_t n_cat,
                                                  std::size_t n_num, std::size_t levels, std::size_t budget,
                                                  std::uint64_t seed = 1) {
  flowformer::FlowTable t;
  for (std::size_t c = 0; c < n_cat; ++c) t.spec.categorical_features.push_back("cat" + std::to_string(c));
  for (std::size_t c = 0; c < n_num; ++c) t.spec.numerical_features.push_back("num" + std::to_string(c));
  t.spec.class_column = "Label";
  t.spec.benign_label = "Benign";
  std::mt19937_64 gen(seed);
  t.categorical.assign(n_cat, {});
  t.numerical.assign(n_num, {});
  for (std::size_t r = 0; r < 20 * levels; ++r) {
    for (auto& col : t.categorical) col.push_back("v" + std::to_string(gen() % levels));
    for (auto& col : t.numerical) col.push_back(double(gen() % 1000));
    t.classes.push_back("Benign");
  }
  return flowformer::fit(t, budget, format);
}

/// Random valid model input for `state`: numericals in [0, 1], categoricals
/// as a random valid index or one-hot block.
inline Tensor<double> random_input(const flowformer::PreprocessorState& state, std::size_t batch,
                                   std::size_t window, std::mt19937_64& gen) {
  const std::size_t width = state.output_width();
  std::vector<double> v(batch * window * width, 0.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto layout = state.layout();
  for (std::size_t r = 0; r < batch * window; ++r)
    for (std::size_t b = 0; b < layout.size(); ++b) {
      double* row = v.data() + r * width + layout[b].offset;
      if (layout[b].kind == flowformer::FeatureKind::Numerical) {
        row[0] = u(gen);
        continue;
      }
      const std::size_t levels = state.categorical[b - state.numerical.size()].fitted_levels() + 1;
      const std::size_t k = gen() % levels;
      if (state.format == flowformer::CategoricalFormat::IntegerIndex) row[0] = double(k);
      else row[k] = 1.0;
    }
  return Tensor<double>({batch, window, width}, std::move(v), false);
}

/// A synthetic dataset split, preprocessed and windowed.
struct Windowed {
  flowformer::PreprocessorState state;
  flowformer::WindowSet train, eval;
};

inline Windowed windowed_synth(const flowformer::synth::Options& opt, flowformer::CategoricalFormat format,
                               std::size_t window, std::size_t levels = 32) {
  const auto ds = flowformer::synth::generate(opt);
  const auto parts = flowformer::split(ds.table, {});
  Windowed w;
  w.state = flowformer::fit(parts.train, levels, format);
  w.train = flowformer::WindowSet(flowformer::transform(parts.train, w.state), flowformer::row_labels(parts.train),
                                  window);
  w.eval = flowformer::WindowSet(flowformer::transform(parts.eval, w.state), flowformer::row_labels(parts.eval),
                                 window);
  return w;
}

// ---------------------------------------------------------------------------
// Brute-force references (plain loops, no shared code with the library)

/// [.., K] x [K, N]
inline std::vector<double> ref_matmul(const std::vector<double>& x, std::size_t rows, std::size_t k,
                                      const std::vector<double>& w, std::size_t n) {
  std::vector<double> y(rows * n, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0;
      for (std::size_t i = 0; i < k; ++i) s += x[r * k + i] * w[i * n + j];
      y[r * n + j] = s;
    }
  return y;
}

inline std::vector<double> ref_layer_norm(const std::vector<double>& x, std::size_t rows, std::size_t d,
                                          const std::vector<double>& gain, const std::vector<double>& bias,
                                          double eps) {
  std::vector<double> y(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    double mean = 0, var = 0;
    for (std::size_t i = 0; i < d; ++i) mean += x[r * d + i];
    mean /= double(d);
    for (std::size_t i = 0; i < d; ++i) var += (x[r * d + i] - mean) * (x[r * d + i] - mean);
    var /= double(d);
    for (std::size_t i = 0; i < d; ++i)
      y[r * d + i] = (x[r * d + i] - mean) / std::sqrt(var + eps) * gain[i] + bias[i];
  }
  return y;
}

/// Per-head softmax(q k^T / sqrt(dh)) v with an optional causal mask, all
/// [B, T, D] row-major.
inline std::vector<double> ref_attention(const std::vector<double>& q, const std::vector<double>& k,
                                         const std::vector<double>& v, std::size_t B, std::size_t T,
                                         std::size_t D, std::size_t heads, bool causal) {
  const std::size_t dh = D / heads;
  std::vector<double> out(B * T * D, 0.0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t i = 0; i < T; ++i) {
        std::vector<double> score(T, -INFINITY);
        double mx = -INFINITY;
        for (std::size_t j = 0; j < T; ++j) {
          if (causal && j > i) continue;
          double s = 0;
          for (std::size_t c = 0; c < dh; ++c) s += q[(b * T + i) * D + h * dh + c] * k[(b * T + j) * D + h * dh + c];
          score[j] = s / std::sqrt(double(dh));
          mx = std::max(mx, score[j]);
        }
        double z = 0;
        for (std::size_t j = 0; j < T; ++j) z += std::isinf(score[j]) ? 0.0 : std::exp(score[j] - mx);
        for (std::size_t j = 0; j < T; ++j) {
          if (std::isinf(score[j])) continue;
          const double p = std::exp(score[j] - mx) / z;
          for (std::size_t c = 0; c < dh; ++c) out[(b * T + i) * D + h * dh + c] += p * v[(b * T + j) * D + h * dh + c];
        }
      }
  return out;
}

}  // namespace testing_support

#pragma once

#include <cmath>
#include <vector>

#include "flowformer/nn/layers.hpp"

namespace flowformer::nn {

template <class T>
struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
  long step = 0;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;

  explicit AdamState(double lr = 1e-3) : learning_rate(lr) {}
};

/// One bias-corrected Adam update of every parameter, then zeroes grads.
template <class T>
void adam_step(ParameterList<T>& params, AdamState<T>& state) {
  for (const auto& p : params)
    if (!p.tensor.has_grad())
      throw ShapeError("adam_step: parameter '" + p.name + "' has no gradient");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.tensor.size(), T(0));
      state.v.emplace_back(p.tensor.size(), T(0));
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adam_step: parameter list changed");

  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, double(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, double(state.step));
  const T b1 = T(state.beta1), b2 = T(state.beta2);
  std::size_t k = 0;
  for (auto& p : params) {
    auto w = p.tensor.data();
    auto g = p.tensor.grad();
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      const double mhat = double(m[i]) / c1;
      const double vhat = double(v[i]) / c2;
      w[i] -= T(state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon));
    }
    p.tensor.zero_grad();
    ++k;
  }
}

}  // namespace flowformer::nn

#pragma once

#include <cmath>
#include <string>
#include <unordered_set>
#include <vector>

#include "flowformer/nn/ops.hpp"
#include "flowformer/nn/random.hpp"
#include "flowformer/nn/tensor.hpp"

namespace flowformer::nn {

template <class T>
struct NamedParameter {
  std::string name;
  Tensor<T> tensor;
};

/// Flat, ordered view of a model's parameters. Tensors are shared handles,
/// so updates through the list reach the owning layers.
template <class T>
class ParameterList {
 public:
  void add(std::string name, const Tensor<T>& t) {
    if (!names_.insert(name).second) throw ShapeError("duplicate parameter name '" + name + "'");
    items_.push_back({std::move(name), t});
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& p : items_) n += p.tensor.size();
    return n;
  }

  const std::vector<NamedParameter<T>>& items() const { return items_; }
  std::vector<NamedParameter<T>>& items() { return items_; }
  std::size_t size() const { return items_.size(); }
  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

  void zero_grad() {
    for (auto& p : items_) p.tensor.zero_grad();
  }

 private:
  std::vector<NamedParameter<T>> items_;
  std::unordered_set<std::string> names_;
};

inline std::string join_name(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

// ---------------------------------------------------------------------------
// Initializers

template <class T>
Tensor<T> glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / double(fan_in + fan_out));
  std::vector<T> w(fan_in * fan_out);
  for (auto& v : w) v = T(rng.uniform(-limit, limit));
  return Tensor<T>({fan_in, fan_out}, std::move(w), true);
}

template <class T>
Tensor<T> normal_init(Shape shape, double stddev, Rng& rng) {
  std::vector<T> w(numel(shape));
  for (auto& v : w) v = T(rng.normal(0.0, stddev));
  return Tensor<T>(std::move(shape), std::move(w), true);
}

template <class T>
Tensor<T> constant_init(Shape shape, T value) {
  const auto n = numel(shape);
  return Tensor<T>(std::move(shape), std::vector<T>(n, value), true);
}

// ---------------------------------------------------------------------------
// Layers

/// y = act(x W + b). Without bias and activation it is a linear projection.
template <class T>
class Dense {
 public:
  Dense() = default;
  Dense(std::size_t in, std::size_t out, bool bias, Activation act, Rng& rng)
      : weight_(glorot_uniform<T>(in, out, rng)), act_(act) {
    if (bias) bias_ = constant_init<T>({out}, T(0));
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    auto y = matmul(x, weight_);
    if (bias_.defined()) y = add_bias(y, bias_);
    return activate(y, act_);
  }

  void collect(const std::string& prefix, ParameterList<T>& out) const {
    out.add(join_name(prefix, "w"), weight_);
    if (bias_.defined()) out.add(join_name(prefix, "b"), bias_);
  }

  std::size_t in_features() const { return weight_.dim(0); }
  std::size_t out_features() const { return weight_.dim(1); }
  bool has_bias() const { return bias_.defined(); }
  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }

  static std::size_t parameter_count(std::size_t in, std::size_t out, bool bias) {
    return in * out + (bias ? out : 0);
  }

 private:
  Tensor<T> weight_;
  Tensor<T> bias_;
  Activation act_ = Activation::None;
};

template <class T>
class LayerNorm {
 public:
  LayerNorm() = default;
  explicit LayerNorm(std::size_t d, T eps = T(1e-5))
      : gain_(constant_init<T>({d}, T(1))), bias_(constant_init<T>({d}, T(0))), eps_(eps) {}

  Tensor<T> forward(const Tensor<T>& x) const { return layer_norm(x, gain_, bias_, eps_); }

  void collect(const std::string& prefix, ParameterList<T>& out) const {
    out.add(join_name(prefix, "gain"), gain_);
    out.add(join_name(prefix, "bias"), bias_);
  }

  static std::size_t parameter_count(std::size_t d) { return 2 * d; }

 private:
  Tensor<T> gain_, bias_;
  T eps_ = T(1e-5);
};

/// Learned lookup table [rows, dim].
template <class T>
class Embedding {
 public:
  Embedding() = default;
  Embedding(std::size_t rows, std::size_t dim, Rng& rng)
      : table_(normal_init<T>({rows, dim}, 0.02, rng)) {}

  Tensor<T> forward(std::vector<std::size_t> indices, Shape index_shape) const {
    return embedding(table_, std::move(indices), std::move(index_shape));
  }

  void collect(const std::string& prefix, ParameterList<T>& out) const {
    out.add(join_name(prefix, "table"), table_);
  }

  std::size_t rows() const { return table_.dim(0); }
  std::size_t dim() const { return table_.dim(1); }
  Tensor<T>& table() { return table_; }

 private:
  Tensor<T> table_;
};

/// Multi-head self-attention with query/key/value/output projections.
template <class T>
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(std::size_t d_model, std::size_t heads, bool causal, Rng& rng)
      : heads_(heads), causal_(causal) {
    if (heads == 0 || d_model % heads != 0)
      throw ShapeError("d_model " + std::to_string(d_model) + " is not divisible by " +
                       std::to_string(heads) + " heads");
    wq_ = Dense<T>(d_model, d_model, true, Activation::None, rng);
    wk_ = Dense<T>(d_model, d_model, true, Activation::None, rng);
    wv_ = Dense<T>(d_model, d_model, true, Activation::None, rng);
    wo_ = Dense<T>(d_model, d_model, true, Activation::None, rng);
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    auto ctx = scaled_dot_product_attention(wq_.forward(x), wk_.forward(x), wv_.forward(x),
                                            heads_, causal_);
    return wo_.forward(ctx);
  }

  void collect(const std::string& prefix, ParameterList<T>& out) const {
    wq_.collect(join_name(prefix, "wq"), out);
    wk_.collect(join_name(prefix, "wk"), out);
    wv_.collect(join_name(prefix, "wv"), out);
    wo_.collect(join_name(prefix, "wo"), out);
  }

  bool causal() const { return causal_; }
  std::size_t heads() const { return heads_; }

  static std::size_t parameter_count(std::size_t d) { return 4 * d * d + 4 * d; }

 private:
  Dense<T> wq_, wk_, wv_, wo_;
  std::size_t heads_ = 1;
  bool causal_ = false;
};

}  // namespace flowformer::nn

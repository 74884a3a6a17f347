#pragma once

// Differentiable tensor operations. Every op validates shapes, computes the
// forward pass eagerly and (when recording) attaches its backward closure.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "flowformer/nn/random.hpp"
#include "flowformer/nn/tensor.hpp"

namespace flowformer::nn {

enum class Activation { None, ReLU, GELU, Sigmoid };

namespace detail {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapC = Eigen::Map<const RowMatrix<T>>;
template <class T>
using Map = Eigen::Map<RowMatrix<T>>;

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

/// Product of all dims but the last.
inline std::size_t leading(const Shape& s) { return s.empty() ? 1 : numel(s) / s.back(); }

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

/// x[..., K] @ w[K, N] -> [..., N]
template <class T>
Tensor<T> matmul(const Tensor<T>& x, const Tensor<T>& w) {
  detail::require(w.rank() == 2 && x.rank() >= 1 && x.shape().back() == w.dim(0),
                  "matmul: cannot multiply " + to_string(x.shape()) + " by " + to_string(w.shape()));
  const std::size_t M = detail::leading(x.shape()), K = w.dim(0), N = w.dim(1);
  Shape out_shape = x.shape();
  out_shape.back() = N;
  std::vector<T> out(M * N);
  detail::Map<T>(out.data(), M, N).noalias() =
      detail::MapC<T>(x.data().data(), M, K) * detail::MapC<T>(w.data().data(), K, N);
  return make_result<T>(std::move(out_shape), std::move(out), {&x, &w}, [M, K, N](Node<T>& self) {
    auto& xn = *self.parents[0];
    auto& wn = *self.parents[1];
    detail::MapC<T> dy(self.grad.data(), M, N);
    if (xn.requires_grad)
      detail::Map<T>(xn.ensure_grad().data(), M, K).noalias() +=
          dy * detail::MapC<T>(wn.data.data(), K, N).transpose();
    if (wn.requires_grad)
      detail::Map<T>(wn.ensure_grad().data(), K, N).noalias() +=
          detail::MapC<T>(xn.data.data(), M, K).transpose() * dy;
  });
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.shape() == b.shape(),
                  "add: shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_result<T>(a.shape(), std::move(out), {&a, &b}, [](Node<T>& self) {
    for (auto& p : self.parents)
      if (p->requires_grad) {
        auto& g = p->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      }
  });
}

/// x[..., N] + b[N]
template <class T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& b) {
  detail::require(b.rank() == 1 && x.rank() >= 1 && x.shape().back() == b.dim(0),
                  "add_bias: bias " + to_string(b.shape()) + " vs input " + to_string(x.shape()));
  const std::size_t N = b.dim(0), M = x.size() / N;
  std::vector<T> out(x.values());
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t n = 0; n < N; ++n) out[m * N + n] += b.data()[n];
  return make_result<T>(x.shape(), std::move(out), {&x, &b}, [M, N](Node<T>& self) {
    auto& xn = *self.parents[0];
    auto& bn = *self.parents[1];
    if (xn.requires_grad) {
      auto& g = xn.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (bn.requires_grad) {
      auto& g = bn.ensure_grad();
      for (std::size_t m = 0; m < M; ++m)
        for (std::size_t n = 0; n < N; ++n) g[n] += self.grad[m * N + n];
    }
  });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.shape() == b.shape(),
                  "mul: shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_result<T>(a.shape(), std::move(out), {&a, &b}, [](Node<T>& self) {
    auto& an = *self.parents[0];
    auto& bn = *self.parents[1];
    if (an.requires_grad) {
      auto& g = an.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bn.data[i];
    }
    if (bn.requires_grad) {
      auto& g = bn.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * an.data[i];
    }
  });
}

template <class T>
Tensor<T> scale(const Tensor<T>& x, T s) {
  std::vector<T> out(x.values());
  for (auto& v : out) v *= s;
  return make_result<T>(x.shape(), std::move(out), {&x}, [s](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
  });
}

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  T s = 0;
  for (T v : x.data()) s += v;
  return make_result<T>({1}, {s}, {&x}, [](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (auto& v : g) v += self.grad[0];
  });
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / T(x.size()));
}

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  detail::require(numel(shape) == x.size(),
                  "reshape: " + to_string(x.shape()) + " -> " + to_string(shape));
  return make_result<T>(std::move(shape), x.values(), {&x}, [](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Elementwise nonlinearities

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(x.data()[i], T(0));
  return make_result<T>(x.shape(), std::move(out), {&x}, [](Node<T>& self) {
    auto& xn = *self.parents[0];
    auto& g = xn.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xn.data[i] > T(0)) g[i] += self.grad[i];
  });
}

/// Exact (erf-based) GELU.
template <class T>
Tensor<T> gelu(const Tensor<T>& x) {
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T v = x.data()[i];
    out[i] = T(0.5) * v * (T(1) + std::erf(v * T(detail::kInvSqrt2)));
  }
  return make_result<T>(x.shape(), std::move(out), {&x}, [](Node<T>& self) {
    auto& xn = *self.parents[0];
    auto& g = xn.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T v = xn.data[i];
      const T cdf = T(0.5) * (T(1) + std::erf(v * T(detail::kInvSqrt2)));
      const T pdf = T(detail::kInvSqrt2Pi) * std::exp(T(-0.5) * v * v);
      g[i] += self.grad[i] * (cdf + v * pdf);
    }
  });
}

template <class T>
T sigmoid_scalar(T z) {
  if (z >= T(0)) return T(1) / (T(1) + std::exp(-z));
  const T e = std::exp(z);
  return e / (T(1) + e);
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid_scalar(x.data()[i]);
  return make_result<T>(x.shape(), out, {&x}, [out](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * out[i] * (T(1) - out[i]);
  });
}

template <class T>
Tensor<T> activate(const Tensor<T>& x, Activation a) {
  switch (a) {
    case Activation::ReLU: return relu(x);
    case Activation::GELU: return gelu(x);
    case Activation::Sigmoid: return sigmoid(x);
    case Activation::None: break;
  }
  return x;
}

// ---------------------------------------------------------------------------
// Normalization

/// Softmax along `axis`, with max subtraction.
template <class T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  detail::require(axis < x.rank(), "softmax: axis out of range");
  const auto& s = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  std::vector<T> out(x.size());
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t k = 0; k < len; ++k) mx = std::max(mx, x.data()[base + k * inner]);
      T z = 0;
      for (std::size_t k = 0; k < len; ++k) {
        const T e = std::exp(x.data()[base + k * inner] - mx);
        out[base + k * inner] = e;
        z += e;
      }
      for (std::size_t k = 0; k < len; ++k) out[base + k * inner] /= z;
    }
  return make_result<T>(s, out, {&x}, [out, outer, inner, len](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        T dot = 0;
        for (std::size_t k = 0; k < len; ++k) dot += self.grad[base + k * inner] * out[base + k * inner];
        for (std::size_t k = 0; k < len; ++k) {
          const std::size_t i = base + k * inner;
          g[i] += out[i] * (self.grad[i] - dot);
        }
      }
  });
}

/// Normalizes over the last axis, then applies gain and bias.
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                     T eps = T(1e-5)) {
  detail::require(x.rank() >= 1 && gain.shape() == Shape{x.shape().back()} &&
                      bias.shape() == gain.shape(),
                  "layer_norm: gain/bias must match the last axis of " + to_string(x.shape()));
  const std::size_t D = x.shape().back(), M = x.size() / D;
  std::vector<T> out(x.size()), xhat(x.size()), inv(M);
  for (std::size_t m = 0; m < M; ++m) {
    const T* row = x.data().data() + m * D;
    T mu = 0;
    for (std::size_t d = 0; d < D; ++d) mu += row[d];
    mu /= T(D);
    T var = 0;
    for (std::size_t d = 0; d < D; ++d) var += (row[d] - mu) * (row[d] - mu);
    var /= T(D);
    inv[m] = T(1) / std::sqrt(var + eps);
    for (std::size_t d = 0; d < D; ++d) {
      xhat[m * D + d] = (row[d] - mu) * inv[m];
      out[m * D + d] = xhat[m * D + d] * gain.data()[d] + bias.data()[d];
    }
  }
  return make_result<T>(x.shape(), std::move(out), {&x, &gain, &bias},
                        [xhat = std::move(xhat), inv = std::move(inv), M, D](Node<T>& self) {
    auto& xn = *self.parents[0];
    auto& gn = *self.parents[1];
    auto& bn = *self.parents[2];
    const T* dy = self.grad.data();
    if (gn.requires_grad) {
      auto& g = gn.ensure_grad();
      for (std::size_t m = 0; m < M; ++m)
        for (std::size_t d = 0; d < D; ++d) g[d] += dy[m * D + d] * xhat[m * D + d];
    }
    if (bn.requires_grad) {
      auto& g = bn.ensure_grad();
      for (std::size_t m = 0; m < M; ++m)
        for (std::size_t d = 0; d < D; ++d) g[d] += dy[m * D + d];
    }
    if (xn.requires_grad) {
      auto& g = xn.ensure_grad();
      for (std::size_t m = 0; m < M; ++m) {
        T sum_dxhat = 0, sum_dxhat_xhat = 0;
        for (std::size_t d = 0; d < D; ++d) {
          const T dxh = dy[m * D + d] * gn.data[d];
          sum_dxhat += dxh;
          sum_dxhat_xhat += dxh * xhat[m * D + d];
        }
        for (std::size_t d = 0; d < D; ++d) {
          const T dxh = dy[m * D + d] * gn.data[d];
          g[m * D + d] += inv[m] / T(D) *
                          (T(D) * dxh - sum_dxhat - xhat[m * D + d] * sum_dxhat_xhat);
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Indexing and sequence reshaping

/// Looks up rows of table[V, D]; output shape is index_shape + [D].
template <class T>
Tensor<T> embedding(const Tensor<T>& table, std::vector<std::size_t> indices, Shape index_shape) {
  detail::require(table.rank() == 2, "embedding: table must be 2-d");
  detail::require(numel(index_shape) == indices.size(), "embedding: index shape mismatch");
  const std::size_t V = table.dim(0), D = table.dim(1);
  std::vector<T> out(indices.size() * D);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= V)
      throw ShapeError("embedding: index " + std::to_string(indices[i]) + " out of range for " +
                       std::to_string(V) + " rows");
    std::copy_n(table.data().data() + indices[i] * D, D, out.data() + i * D);
  }
  Shape shape = std::move(index_shape);
  shape.push_back(D);
  return make_result<T>(std::move(shape), std::move(out), {&table},
                        [indices = std::move(indices), D](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < indices.size(); ++i)
      for (std::size_t d = 0; d < D; ++d) g[indices[i] * D + d] += self.grad[i * D + d];
  });
}

/// Columns [begin, begin + len) of the last axis.
template <class T>
Tensor<T> slice_last(const Tensor<T>& x, std::size_t begin, std::size_t len) {
  const std::size_t W = x.shape().back(), M = x.size() / W;
  detail::require(begin + len <= W, "slice_last: range exceeds width " + std::to_string(W));
  Shape shape = x.shape();
  shape.back() = len;
  std::vector<T> out(M * len);
  for (std::size_t m = 0; m < M; ++m)
    std::copy_n(x.data().data() + m * W + begin, len, out.data() + m * len);
  return make_result<T>(std::move(shape), std::move(out), {&x}, [M, W, begin, len](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t j = 0; j < len; ++j) g[m * W + begin + j] += self.grad[m * len + j];
  });
}

/// Concatenation along the last axis; leading dims must agree.
template <class T>
Tensor<T> concat_last(const std::vector<Tensor<T>>& parts) {
  detail::require(!parts.empty(), "concat_last: nothing to concatenate");
  Shape lead = parts[0].shape();
  lead.pop_back();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    Shape l = p.shape();
    l.pop_back();
    detail::require(l == lead, "concat_last: leading dims differ");
    widths.push_back(p.shape().back());
    total += widths.back();
  }
  const std::size_t M = numel(lead);
  std::vector<T> out(M * total);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    for (std::size_t m = 0; m < M; ++m)
      std::copy_n(parts[k].data().data() + m * widths[k], widths[k], out.data() + m * total + off);
    off += widths[k];
  }
  Shape shape = lead;
  shape.push_back(total);
  return make_result<T>(std::move(shape), std::move(out), parts, [widths, M, total](Node<T>& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      auto& p = *self.parents[k];
      if (p.requires_grad) {
        auto& g = p.ensure_grad();
        for (std::size_t m = 0; m < M; ++m)
          for (std::size_t j = 0; j < widths[k]; ++j)
            g[m * widths[k] + j] += self.grad[m * total + off + j];
      }
      off += widths[k];
    }
  });
}

/// x[B, T, D] -> x[:, t, :]
template <class T>
Tensor<T> select_position(const Tensor<T>& x, std::size_t t) {
  detail::require(x.rank() == 3 && t < x.dim(1), "select_position: bad position or rank");
  const std::size_t B = x.dim(0), L = x.dim(1), D = x.dim(2);
  std::vector<T> out(B * D);
  for (std::size_t b = 0; b < B; ++b)
    std::copy_n(x.data().data() + (b * L + t) * D, D, out.data() + b * D);
  return make_result<T>({B, D}, std::move(out), {&x}, [B, L, D, t](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t d = 0; d < D; ++d) g[(b * L + t) * D + d] += self.grad[b * D + d];
  });
}

/// Mean over the sequence axis: x[B, T, D] -> [B, D]
template <class T>
Tensor<T> mean_positions(const Tensor<T>& x) {
  detail::require(x.rank() == 3, "mean_positions: expected [B, T, D]");
  const std::size_t B = x.dim(0), L = x.dim(1), D = x.dim(2);
  std::vector<T> out(B * D, T(0));
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < L; ++t)
      for (std::size_t d = 0; d < D; ++d) out[b * D + d] += x.data()[(b * L + t) * D + d];
  for (auto& v : out) v /= T(L);
  return make_result<T>({B, D}, std::move(out), {&x}, [B, L, D](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t t = 0; t < L; ++t)
        for (std::size_t d = 0; d < D; ++d) g[(b * L + t) * D + d] += self.grad[b * D + d] / T(L);
  });
}

/// x[B, T, D], token[D] -> [B, T + 1, D] with the token as the final position.
template <class T>
Tensor<T> append_token(const Tensor<T>& x, const Tensor<T>& token) {
  detail::require(x.rank() == 3 && token.shape() == Shape{x.dim(2)},
                  "append_token: token must be [d_model]");
  const std::size_t B = x.dim(0), L = x.dim(1), D = x.dim(2);
  std::vector<T> out(B * (L + 1) * D);
  for (std::size_t b = 0; b < B; ++b) {
    std::copy_n(x.data().data() + b * L * D, L * D, out.data() + b * (L + 1) * D);
    std::copy_n(token.data().data(), D, out.data() + (b * (L + 1) + L) * D);
  }
  return make_result<T>({B, L + 1, D}, std::move(out), {&x, &token}, [B, L, D](Node<T>& self) {
    auto& xn = *self.parents[0];
    auto& tn = *self.parents[1];
    if (xn.requires_grad) {
      auto& g = xn.ensure_grad();
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < L * D; ++i) g[b * L * D + i] += self.grad[b * (L + 1) * D + i];
    }
    if (tn.requires_grad) {
      auto& g = tn.ensure_grad();
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t d = 0; d < D; ++d) g[d] += self.grad[(b * (L + 1) + L) * D + d];
    }
  });
}

/// x[B, T, D] + table[0:T, :] broadcast over the batch.
template <class T>
Tensor<T> add_positional(const Tensor<T>& x, const Tensor<T>& table) {
  detail::require(x.rank() == 3 && table.rank() == 2 && table.dim(1) == x.dim(2),
                  "add_positional: table width must equal d_model");
  const std::size_t B = x.dim(0), L = x.dim(1), D = x.dim(2);
  detail::require(L <= table.dim(0), "add_positional: sequence length " + std::to_string(L) +
                                         " exceeds maximum " + std::to_string(table.dim(0)));
  std::vector<T> out(x.values());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < L * D; ++i) out[b * L * D + i] += table.data()[i];
  return make_result<T>(x.shape(), std::move(out), {&x, &table}, [B, L, D](Node<T>& self) {
    auto& xn = *self.parents[0];
    auto& tn = *self.parents[1];
    if (xn.requires_grad) {
      auto& g = xn.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (tn.requires_grad) {
      auto& g = tn.ensure_grad();
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < L * D; ++i) g[i] += self.grad[b * L * D + i];
    }
  });
}

/// Weighted sum over the sequence axis, independently per feature:
///   y[b, d] = sum_t w[t(, d)] * x[b, t, d] (+ bias[0 or d]).
/// `weights` is [T] (shared across features) or [T, D]; `bias` may be
/// undefined, [1] or [D].
template <class T>
Tensor<T> time_weighted_sum(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& bias) {
  detail::require(x.rank() == 3, "time_weighted_sum: expected [B, T, D]");
  const std::size_t B = x.dim(0), L = x.dim(1), D = x.dim(2);
  const bool per_feature = weights.rank() == 2;
  detail::require(weights.dim(0) == L && (!per_feature || weights.dim(1) == D),
                  "time_weighted_sum: weights " + to_string(weights.shape()) + " vs input " +
                      to_string(x.shape()));
  const bool has_bias = bias.defined();
  const bool bias_per_feature = has_bias && bias.dim(0) == D && D != 1;
  detail::require(!has_bias || bias.dim(0) == 1 || bias.dim(0) == D, "time_weighted_sum: bad bias");
  auto w_at = [&](std::size_t t, std::size_t d) {
    return per_feature ? weights.data()[t * D + d] : weights.data()[t];
  };
  std::vector<T> out(B * D, T(0));
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < L; ++t)
      for (std::size_t d = 0; d < D; ++d) out[b * D + d] += w_at(t, d) * x.data()[(b * L + t) * D + d];
  if (has_bias)
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t d = 0; d < D; ++d) out[b * D + d] += bias.data()[bias_per_feature ? d : 0];

  std::vector<Tensor<T>> inputs{x, weights};
  if (has_bias) inputs.push_back(bias);
  return make_result<T>({B, D}, std::move(out), inputs,
                        [B, L, D, per_feature, has_bias, bias_per_feature](Node<T>& self) {
    auto& xn = *self.parents[0];
    auto& wn = *self.parents[1];
    const T* dy = self.grad.data();
    auto widx = [&](std::size_t t, std::size_t d) { return per_feature ? t * D + d : t; };
    if (xn.requires_grad) {
      auto& g = xn.ensure_grad();
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < L; ++t)
          for (std::size_t d = 0; d < D; ++d) g[(b * L + t) * D + d] += dy[b * D + d] * wn.data[widx(t, d)];
    }
    if (wn.requires_grad) {
      auto& g = wn.ensure_grad();
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < L; ++t)
          for (std::size_t d = 0; d < D; ++d) g[widx(t, d)] += dy[b * D + d] * xn.data[(b * L + t) * D + d];
    }
    if (has_bias && self.parents[2]->requires_grad) {
      auto& g = self.parents[2]->ensure_grad();
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t d = 0; d < D; ++d) g[bias_per_feature ? d : 0] += dy[b * D + d];
    }
  });
}

// ---------------------------------------------------------------------------
// Attention

/// Scaled dot-product attention over already-projected q, k, v [B, T, D]
/// split into `heads` heads of width D / heads. With `causal`, query i only
/// sees keys j <= i. Returns the concatenated head outputs [B, T, D].
template <class T>
Tensor<T> scaled_dot_product_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                                       std::size_t heads, bool causal) {
  detail::require(q.rank() == 3 && k.shape() == q.shape() && v.shape() == q.shape(),
                  "attention: q, k, v must share shape [B, T, D]");
  const std::size_t B = q.dim(0), L = q.dim(1), D = q.dim(2);
  if (heads == 0 || D % heads != 0)
    throw ShapeError("attention: d_model " + std::to_string(D) + " is not divisible by " +
                     std::to_string(heads) + " heads");
  const std::size_t dk = D / heads;
  const T scale = T(1) / std::sqrt(T(dk));
  std::vector<T> probs(B * heads * L * L, T(0));
  std::vector<T> out(B * L * D, T(0));
  const T* Q = q.data().data();
  const T* K = k.data().data();
  const T* V = v.data().data();
  std::vector<T> row(L);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = h * dk;
      for (std::size_t i = 0; i < L; ++i) {
        const std::size_t visible = causal ? i + 1 : L;
        const T* qi = Q + (b * L + i) * D + off;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < visible; ++j) {
          const T* kj = K + (b * L + j) * D + off;
          T s = 0;
          for (std::size_t c = 0; c < dk; ++c) s += qi[c] * kj[c];
          row[j] = s * scale;
          mx = std::max(mx, row[j]);
        }
        T z = 0;
        for (std::size_t j = 0; j < visible; ++j) {
          row[j] = std::exp(row[j] - mx);
          z += row[j];
        }
        T* p = probs.data() + ((b * heads + h) * L + i) * L;
        T* oi = out.data() + (b * L + i) * D + off;
        for (std::size_t j = 0; j < visible; ++j) {
          p[j] = row[j] / z;
          const T* vj = V + (b * L + j) * D + off;
          for (std::size_t c = 0; c < dk; ++c) oi[c] += p[j] * vj[c];
        }
      }
    }
  return make_result<T>(q.shape(), std::move(out), {&q, &k, &v},
                        [probs = std::move(probs), B, L, D, heads, dk, scale, causal](Node<T>& self) {
    auto& qn = *self.parents[0];
    auto& kn = *self.parents[1];
    auto& vn = *self.parents[2];
    T* dQ = qn.requires_grad ? qn.ensure_grad().data() : nullptr;
    T* dK = kn.requires_grad ? kn.ensure_grad().data() : nullptr;
    T* dV = vn.requires_grad ? vn.ensure_grad().data() : nullptr;
    const T* dO = self.grad.data();
    std::vector<T> dp(L), ds(L);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = h * dk;
        for (std::size_t i = 0; i < L; ++i) {
          const std::size_t visible = causal ? i + 1 : L;
          const T* p = probs.data() + ((b * heads + h) * L + i) * L;
          const T* doi = dO + (b * L + i) * D + off;
          T dot = 0;
          for (std::size_t j = 0; j < visible; ++j) {
            const T* vj = vn.data.data() + (b * L + j) * D + off;
            T s = 0;
            for (std::size_t c = 0; c < dk; ++c) s += doi[c] * vj[c];
            dp[j] = s;
            dot += p[j] * s;
            if (dV) {
              T* dvj = dV + (b * L + j) * D + off;
              for (std::size_t c = 0; c < dk; ++c) dvj[c] += p[j] * doi[c];
            }
          }
          for (std::size_t j = 0; j < visible; ++j) ds[j] = p[j] * (dp[j] - dot) * scale;
          const T* qi = qn.data.data() + (b * L + i) * D + off;
          for (std::size_t j = 0; j < visible; ++j) {
            const T* kj = kn.data.data() + (b * L + j) * D + off;
            if (dQ) {
              T* dqi = dQ + (b * L + i) * D + off;
              for (std::size_t c = 0; c < dk; ++c) dqi[c] += ds[j] * kj[c];
            }
            if (dK) {
              T* dkj = dK + (b * L + j) * D + off;
              for (std::size_t c = 0; c < dk; ++c) dkj[c] += ds[j] * qi[c];
            }
          }
        }
      }
  });
}

// ---------------------------------------------------------------------------
// Regularization and loss

/// Inverted dropout. Identity when not training or rate == 0.
template <class T>
Tensor<T> dropout(const Tensor<T>& x, double rate, bool training, Rng& rng) {
  if (!training || rate <= 0.0) return x;
  if (rate >= 1.0) throw ShapeError("dropout: rate must be < 1");
  const T keep_scale = T(1.0 / (1.0 - rate));
  std::vector<T> mask(x.size());
  for (auto& m : mask) m = rng.bernoulli(rate) ? T(0) : keep_scale;
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * mask[i];
  return make_result<T>(x.shape(), std::move(out), {&x}, [mask = std::move(mask)](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
  });
}

/// Mean binary cross-entropy of sigmoid(logits) against 0/1 targets,
/// computed from logits for stability.
template <class T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, std::span<const T> targets) {
  detail::require(logits.size() == targets.size() && logits.size() > 0,
                  "bce_with_logits: logits/targets size mismatch");
  const std::size_t n = logits.size();
  T total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T z = logits.data()[i];
    total += std::max(z, T(0)) - z * targets[i] + std::log1p(std::exp(-std::abs(z)));
  }
  std::vector<T> y(targets.begin(), targets.end());
  return make_result<T>({1}, {total / T(n)}, {&logits}, [y = std::move(y), n](Node<T>& self) {
    auto& zn = *self.parents[0];
    auto& g = zn.ensure_grad();
    for (std::size_t i = 0; i < n; ++i)
      g[i] += self.grad[0] * (sigmoid_scalar(zn.data[i]) - y[i]) / T(n);
  });
}

}  // namespace flowformer::nn

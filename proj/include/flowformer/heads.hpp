#pragma once

// Classification heads: reduce the transformer output [B, T, d] to [B, r],
// then an MLP (ReLU hidden layers) ends in one logit per window.
//
// ClsToken is the only head that changes the sequence before the
// transformer: it appends one learned d-wide token as the final position
// and later classifies from that position's output.

#include <cmath>
#include <string>
#include <vector>

#include "flowformer/error.hpp"
#include "flowformer/nn/layers.hpp"

namespace flowformer {

enum class HeadKind {
  LastToken,
  Flatten,
  GlobalAveragePooling,
  FeaturewiseEmbedding,
  FeaturewiseProjection,
  ClsToken,
};

struct HeadSpec {
  HeadKind kind = HeadKind::LastToken;
  std::vector<std::size_t> mlp_hidden{128};
  /// Featurewise heads: learn a separate T -> 1 map per feature instead of
  /// one map shared by all features.
  bool featurewise_per_feature = false;

  bool operator==(const HeadSpec&) const = default;
};

inline bool is_featurewise(HeadKind k) {
  return k == HeadKind::FeaturewiseEmbedding || k == HeadKind::FeaturewiseProjection;
}

/// Width of the reduced representation.
inline std::size_t reduced_width(HeadKind kind, std::size_t seq_len, std::size_t d_model) {
  return kind == HeadKind::Flatten ? seq_len * d_model : d_model;
}

/// Sequence length seen by the transformer for a window of `window` flows.
inline std::size_t sequence_length(HeadKind kind, std::size_t window) {
  return kind == HeadKind::ClsToken ? window + 1 : window;
}

template <class T>
class ClassificationHead {
 public:
  ClassificationHead() = default;

  /// `seq_len` is the transformer's sequence length (after the hook).
  ClassificationHead(const HeadSpec& spec, std::size_t seq_len, std::size_t d_model, nn::Rng& rng)
      : spec_(spec), seq_len_(seq_len), d_model_(d_model) {
    if (spec.kind == HeadKind::ClsToken) cls_token_ = nn::normal_init<T>({d_model}, 0.02, rng);
    if (is_featurewise(spec.kind)) {
      // Glorot-uniform over each T -> 1 map
      const std::size_t fan_out = spec.featurewise_per_feature ? d_model : 1;
      const double limit = std::sqrt(6.0 / double(seq_len + 1));
      std::vector<T> w(seq_len * fan_out);
      for (auto& v : w) v = T(rng.uniform(-limit, limit));
      time_weights_ = spec.featurewise_per_feature
                          ? nn::Tensor<T>({seq_len, d_model}, std::move(w), true)
                          : nn::Tensor<T>({seq_len}, std::move(w), true);
      if (spec.kind == HeadKind::FeaturewiseEmbedding)
        time_bias_ = nn::constant_init<T>({fan_out}, T(0));
    }
    std::size_t in = reduced_width(spec.kind, seq_len, d_model);
    for (auto h : spec.mlp_hidden) {
      if (h == 0) throw ValidationError("MLP hidden sizes must be positive");
      mlp_.emplace_back(in, h, true, nn::Activation::ReLU, rng);
      in = h;
    }
    mlp_.emplace_back(in, 1, true, nn::Activation::None, rng);
  }

  /// Pre-transformer hook: identity except for ClsToken.
  nn::Tensor<T> prepare(const nn::Tensor<T>& encoded) const {
    if (spec_.kind == HeadKind::ClsToken) return nn::append_token(encoded, cls_token_);
    return encoded;
  }

  /// [B, T, d] -> [B, r]
  nn::Tensor<T> reduce(const nn::Tensor<T>& seq) const {
    if (seq.rank() != 3 || seq.dim(2) != d_model_)
      throw ShapeError("head expects [B, T, " + std::to_string(d_model_) + "], got " +
                       nn::to_string(seq.shape()));
    const std::size_t L = seq.dim(1);
    switch (spec_.kind) {
      case HeadKind::LastToken:
      case HeadKind::ClsToken:
        return nn::select_position(seq, L - 1);
      case HeadKind::GlobalAveragePooling:
        return nn::mean_positions(seq);
      case HeadKind::Flatten:
        return nn::reshape(seq, {seq.dim(0), L * d_model_});
      case HeadKind::FeaturewiseEmbedding:
        return nn::relu(nn::time_weighted_sum(seq, time_weights_, time_bias_));
      case HeadKind::FeaturewiseProjection:
        return nn::time_weighted_sum(seq, time_weights_, nn::Tensor<T>{});
    }
    return seq;
  }

  /// [B, r] -> logits [B]
  nn::Tensor<T> classify(const nn::Tensor<T>& reduced) const {
    nn::Tensor<T> h = reduced;
    for (const auto& layer : mlp_) h = layer.forward(h);
    return nn::reshape(h, {h.dim(0)});
  }

  nn::Tensor<T> forward(const nn::Tensor<T>& seq) const { return classify(reduce(seq)); }

  void collect(const std::string& prefix, nn::ParameterList<T>& out) const {
    if (cls_token_.defined()) out.add(nn::join_name(prefix, "cls_token"), cls_token_);
    if (time_weights_.defined()) out.add(nn::join_name(prefix, "featurewise.w"), time_weights_);
    if (time_bias_.defined()) out.add(nn::join_name(prefix, "featurewise.b"), time_bias_);
    for (std::size_t i = 0; i < mlp_.size(); ++i)
      mlp_[i].collect(nn::join_name(prefix, "mlp" + std::to_string(i)), out);
  }

  /// Parameters of the classification MLP alone.
  std::size_t mlp_parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : mlp_) n += nn::Dense<T>::parameter_count(l.in_features(), l.out_features(), l.has_bias());
    return n;
  }

  const HeadSpec& spec() const { return spec_; }
  nn::Tensor<T>& cls_token() { return cls_token_; }
  nn::Tensor<T>& time_weights() { return time_weights_; }
  std::vector<nn::Dense<T>>& mlp() { return mlp_; }

 private:
  HeadSpec spec_;
  std::size_t seq_len_ = 0;
  std::size_t d_model_ = 0;
  nn::Tensor<T> cls_token_;
  nn::Tensor<T> time_weights_;
  nn::Tensor<T> time_bias_;
  std::vector<nn::Dense<T>> mlp_;
};

}  // namespace flowformer

#pragma once

// Pre-norm transformer stacks:
//
//   h = x + MHA(LN1(x))
//   y = h + FF2(GELU(FF1(LN2(h))))
//
// followed by one final LayerNorm after the last block. Decoder blocks use
// causal attention, encoder blocks attend in both directions.

#include <cmath>
#include <string>
#include <vector>

#include "flowformer/error.hpp"
#include "flowformer/nn/layers.hpp"

namespace flowformer {

enum class BlockKind { Encoder, Decoder };
enum class PositionalMode { Learned, Sinusoidal, None };

struct TransformerConfig {
  BlockKind block = BlockKind::Encoder;
  std::size_t layers = 2;
  std::size_t d_model = 0;  ///< 0: taken from the input encoder's width
  std::size_t heads = 2;
  std::size_t ff_dim = 128;
  double dropout = 0.0;
  PositionalMode positional = PositionalMode::Learned;

  bool operator==(const TransformerConfig&) const = default;
};

namespace presets {

inline TransformerConfig basic_encoder() { return {BlockKind::Encoder, 2, 0, 2, 128, 0.0, PositionalMode::Learned}; }
inline TransformerConfig basic_decoder() { return {BlockKind::Decoder, 2, 0, 2, 128, 0.0, PositionalMode::Learned}; }
/// 12 causal blocks, 768 wide, 12 heads, 4x feed-forward.
inline TransformerConfig gpt_shaped() { return {BlockKind::Decoder, 12, 768, 12, 3072, 0.0, PositionalMode::Learned}; }
/// 12 bidirectional blocks, 768 wide, 12 heads, 4x feed-forward.
inline TransformerConfig bert_shaped() { return {BlockKind::Encoder, 12, 768, 12, 3072, 0.0, PositionalMode::Learned}; }

}  // namespace presets

inline void validate(const TransformerConfig& cfg) {
  if (cfg.d_model == 0) throw ValidationError("transformer d_model is unresolved");
  if (cfg.heads == 0 || cfg.d_model % cfg.heads != 0)
    throw ValidationError("d_model " + std::to_string(cfg.d_model) + " is not divisible by " +
                          std::to_string(cfg.heads) + " heads");
  if (cfg.ff_dim == 0) throw ValidationError("ff_dim must be positive");
  if (!(cfg.dropout >= 0.0 && cfg.dropout < 1.0)) throw ValidationError("dropout must lie in [0, 1)");
}

/// sin/cos table [max_len, d]: even dims sin(pos / 10000^(i/d)), odd dims cos.
template <class T>
nn::Tensor<T> sinusoidal_table(std::size_t max_len, std::size_t d) {
  std::vector<T> v(max_len * d);
  for (std::size_t pos = 0; pos < max_len; ++pos)
    for (std::size_t i = 0; i < d; ++i) {
      const double angle = double(pos) / std::pow(10000.0, double(i - i % 2) / double(d));
      v[pos * d + i] = T(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  return nn::Tensor<T>({max_len, d}, std::move(v), false);
}

template <class T>
class PositionalEncoding {
 public:
  PositionalEncoding() = default;
  PositionalEncoding(PositionalMode mode, std::size_t max_len, std::size_t d, nn::Rng& rng)
      : mode_(mode), max_len_(max_len) {
    if (mode == PositionalMode::Learned) table_ = nn::normal_init<T>({max_len, d}, 0.02, rng);
    if (mode == PositionalMode::Sinusoidal) table_ = sinusoidal_table<T>(max_len, d);
  }

  nn::Tensor<T> forward(const nn::Tensor<T>& x) const {
    if (x.rank() == 3 && x.dim(1) > max_len_)
      throw ShapeError("sequence length " + std::to_string(x.dim(1)) + " exceeds maximum " +
                       std::to_string(max_len_));
    if (mode_ == PositionalMode::None) return x;
    return nn::add_positional(x, table_);
  }

  void collect(const std::string& prefix, nn::ParameterList<T>& out) const {
    if (mode_ == PositionalMode::Learned) out.add(nn::join_name(prefix, "table"), table_);
  }

  const nn::Tensor<T>& table() const { return table_; }
  PositionalMode mode() const { return mode_; }

 private:
  PositionalMode mode_ = PositionalMode::None;
  std::size_t max_len_ = 0;
  nn::Tensor<T> table_;
};

template <class T>
class TransformerBlock {
 public:
  TransformerBlock() = default;
  TransformerBlock(const TransformerConfig& cfg, nn::Rng& rng)
      : ln1_(cfg.d_model),
        attn_(cfg.d_model, cfg.heads, cfg.block == BlockKind::Decoder, rng),
        ln2_(cfg.d_model),
        ff1_(cfg.d_model, cfg.ff_dim, true, nn::Activation::GELU, rng),
        ff2_(cfg.ff_dim, cfg.d_model, true, nn::Activation::None, rng),
        dropout_(cfg.dropout) {}

  /// Same shape in and out.
  nn::Tensor<T> forward(const nn::Tensor<T>& x, bool training, nn::Rng& rng) const {
    auto h = nn::add(x, nn::dropout(attn_.forward(ln1_.forward(x)), dropout_, training, rng));
    auto f = ff2_.forward(ff1_.forward(ln2_.forward(h)));
    return nn::add(h, nn::dropout(f, dropout_, training, rng));
  }

  void collect(const std::string& prefix, nn::ParameterList<T>& out) const {
    ln1_.collect(nn::join_name(prefix, "ln1"), out);
    attn_.collect(nn::join_name(prefix, "attn"), out);
    ln2_.collect(nn::join_name(prefix, "ln2"), out);
    ff1_.collect(nn::join_name(prefix, "ff1"), out);
    ff2_.collect(nn::join_name(prefix, "ff2"), out);
  }

  bool causal() const { return attn_.causal(); }

 private:
  nn::LayerNorm<T> ln1_;
  nn::MultiHeadAttention<T> attn_;
  nn::LayerNorm<T> ln2_;
  nn::Dense<T> ff1_, ff2_;
  double dropout_ = 0.0;
};

template <class T>
class TransformerStack {
 public:
  TransformerStack() = default;
  TransformerStack(const TransformerConfig& cfg, nn::Rng& rng) : cfg_(cfg), final_ln_(cfg.d_model) {
    validate(cfg);
    for (std::size_t i = 0; i < cfg.layers; ++i) blocks_.emplace_back(cfg, rng);
  }

  nn::Tensor<T> forward(const nn::Tensor<T>& x, bool training, nn::Rng& rng) const {
    if (x.rank() != 3 || x.dim(2) != cfg_.d_model)
      throw ShapeError("transformer expects [B, T, " + std::to_string(cfg_.d_model) + "], got " +
                       nn::to_string(x.shape()));
    nn::Tensor<T> h = x;
    for (const auto& b : blocks_) h = b.forward(h, training, rng);
    return final_ln_.forward(h);
  }

  void collect(const std::string& prefix, nn::ParameterList<T>& out) const {
    for (std::size_t i = 0; i < blocks_.size(); ++i)
      blocks_[i].collect(nn::join_name(prefix, "block" + std::to_string(i)), out);
    final_ln_.collect(nn::join_name(prefix, "final_ln"), out);
  }

  const TransformerConfig& config() const { return cfg_; }

 private:
  TransformerConfig cfg_;
  std::vector<TransformerBlock<T>> blocks_;
  nn::LayerNorm<T> final_ln_;
};

}  // namespace flowformer

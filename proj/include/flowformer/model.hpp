#pragma once

// A complete window classifier:
//
//   logits = classify(reduce(stack(positional(hook(encode(x))))))
//
// where hook is the head's pre-transformer step (CLS append or identity).

#include <cstdint>
#include <string>
#include <vector>

#include "flowformer/encoders.hpp"
#include "flowformer/error.hpp"
#include "flowformer/heads.hpp"
#include "flowformer/nn/random.hpp"
#include "flowformer/preprocess.hpp"
#include "flowformer/transformer.hpp"

namespace flowformer {

struct ModelConfig {
  EncoderSpec encoder;
  TransformerConfig transformer = presets::basic_encoder();
  HeadSpec head;
  std::size_t window = 8;
  double learning_rate = 1e-3;
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;

  bool operator==(const ModelConfig&) const = default;
};

/// The transformer width a config resolves to on `state`: the record
/// encoder's width for record-level kinds (explicit on either side, else
/// kDefaultRecordDim), otherwise the encoder's output width.
inline std::size_t transformer_width(const ModelConfig& cfg, const PreprocessorState& state) {
  const auto& enc = cfg.encoder;
  const auto& tf = cfg.transformer;
  if (is_record_level(enc.kind)) {
    if (enc.d_model && tf.d_model && enc.d_model != tf.d_model)
      throw ValidationError("encoder width " + std::to_string(enc.d_model) +
                            " does not match transformer d_model " + std::to_string(tf.d_model));
    return enc.d_model ? enc.d_model : (tf.d_model ? tf.d_model : kDefaultRecordDim);
  }
  const std::size_t w = resulting_width(enc, state);
  if (tf.d_model && tf.d_model != w)
    throw ValidationError("transformer d_model " + std::to_string(tf.d_model) +
                          " does not match encoder output width " + std::to_string(w));
  return w;
}

/// Fills in the widths a config leaves at 0 and validates the result.
inline ModelConfig resolve_widths(ModelConfig cfg, const PreprocessorState& state) {
  if (cfg.window == 0) throw ValidationError("window must be positive");
  if (cfg.batch_size == 0) throw ValidationError("batch_size must be positive");
  const std::size_t d = transformer_width(cfg, state);
  cfg.transformer.d_model = d;
  if (is_record_level(cfg.encoder.kind)) cfg.encoder.d_model = d;
  validate(cfg.transformer);
  return cfg;
}

template <class T>
class Model {
 public:
  Model(const ModelConfig& cfg, const PreprocessorState& state) : cfg_(resolve_widths(cfg, state)) {
    nn::Rng rng(nn::derive_seed(cfg_.seed, {0}));
    encoder_ = InputEncoder<T>(cfg_.encoder, state, rng);
    const std::size_t seq = sequence_length(cfg_.head.kind, cfg_.window);
    const std::size_t d = cfg_.transformer.d_model;
    positional_ = PositionalEncoding<T>(cfg_.transformer.positional, seq, d, rng);
    stack_ = TransformerStack<T>(cfg_.transformer, rng);
    head_ = ClassificationHead<T>(cfg_.head, seq, d, rng);

    encoder_.collect("encoder", params_);
    positional_.collect("positional", params_);
    stack_.collect("transformer", params_);
    head_.collect("head", params_);
  }

  /// [B, W, raw_width] -> logits [B]
  nn::Tensor<T> forward(const nn::Tensor<T>& x, bool training, nn::Rng& rng) const {
    if (x.rank() != 3 || x.dim(1) != cfg_.window)
      throw ShapeError("model expects [B, " + std::to_string(cfg_.window) + ", " +
                       std::to_string(encoder_.raw_width()) + "], got " + nn::to_string(x.shape()));
    auto h = head_.prepare(encoder_.forward(x));
    h = positional_.forward(h);
    h = stack_.forward(h, training, rng);
    return head_.forward(h);
  }

  /// Inference forward without dropout or graph recording.
  nn::Tensor<T> predict(const nn::Tensor<T>& x) const {
    nn::NoGradGuard guard;
    nn::Rng unused(0);
    return forward(x, false, unused);
  }

  nn::ParameterList<T>& parameters() { return params_; }
  const nn::ParameterList<T>& parameters() const { return params_; }
  std::size_t parameter_count() const { return params_.count(); }

  const ModelConfig& config() const { return cfg_; }
  const InputEncoder<T>& encoder() const { return encoder_; }
  const TransformerStack<T>& stack() const { return stack_; }
  const ClassificationHead<T>& head() const { return head_; }
  const PositionalEncoding<T>& positional() const { return positional_; }
  std::size_t raw_width() const { return encoder_.raw_width(); }

 private:
  ModelConfig cfg_;
  InputEncoder<T> encoder_;
  PositionalEncoding<T> positional_;
  TransformerStack<T> stack_;
  ClassificationHead<T> head_;
  nn::ParameterList<T> params_;
};

template <class T>
Model<T> build_model(const ModelConfig& cfg, const PreprocessorState& state) {
  return Model<T>(cfg, state);
}

}  // namespace flowformer

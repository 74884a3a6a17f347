#pragma once

// Input encoders: map a preprocessed window [B, W, raw_width] to the
// transformer input [B, W, width]. Every encoder is a per-position map.
//
//   CategoricalLookup      learned table per categorical feature (integer input)
//   CategoricalDense       dense + ReLU per one-hot categorical block
//   CategoricalProjection  bias-free linear map per one-hot categorical block
//   RecordDense            one dense + ReLU layer over the whole flow record
//   RecordProjection       one bias-free linear layer over the whole record
//   NoEncoding             identity over the one-hot record
//
// Categorical kinds emit [categorical vectors..., numerical values...].

#include <algorithm>
#include <string>
#include <vector>

#include "flowformer/error.hpp"
#include "flowformer/nn/layers.hpp"
#include "flowformer/preprocess.hpp"

namespace flowformer {

enum class EncodingKind {
  CategoricalLookup,
  CategoricalDense,
  CategoricalProjection,
  RecordDense,
  RecordProjection,
  NoEncoding,
};

inline constexpr std::size_t kDefaultRecordDim = 64;
inline constexpr std::size_t kMaxCategoricalDim = 16;

inline bool is_record_level(EncodingKind k) {
  return k == EncodingKind::RecordDense || k == EncodingKind::RecordProjection;
}

inline bool is_categorical_level(EncodingKind k) {
  return k == EncodingKind::CategoricalLookup || k == EncodingKind::CategoricalDense ||
         k == EncodingKind::CategoricalProjection;
}

inline CategoricalFormat required_format(EncodingKind k) {
  return k == EncodingKind::CategoricalLookup ? CategoricalFormat::IntegerIndex
                                              : CategoricalFormat::OneHot;
}

struct EncoderSpec {
  EncodingKind kind = EncodingKind::RecordProjection;
  /// Embedding width per categorical feature; 0 selects min(16, ceil(rows / 2))
  /// where rows = fitted levels + 1.
  std::size_t per_categorical_dim = 0;
  /// Output width of record-level kinds; 0 defers to the transformer's
  /// d_model, else kDefaultRecordDim.
  std::size_t d_model = 0;

  bool operator==(const EncoderSpec&) const = default;
};

inline std::size_t default_categorical_dim(std::size_t table_rows) {
  return std::min(kMaxCategoricalDim, (table_rows + 1) / 2);
}

/// Per-categorical embedding widths for a fitted preprocessor.
inline std::vector<std::size_t> categorical_dims(const EncoderSpec& spec,
                                                 const PreprocessorState& state) {
  std::vector<std::size_t> dims;
  for (const auto& c : state.categorical)
    dims.push_back(spec.per_categorical_dim ? spec.per_categorical_dim
                                            : default_categorical_dim(c.fitted_levels() + 1));
  return dims;
}

inline std::size_t resulting_width(const EncoderSpec& spec, const PreprocessorState& state) {
  if (is_record_level(spec.kind)) return spec.d_model ? spec.d_model : kDefaultRecordDim;
  if (spec.kind == EncodingKind::NoEncoding) return state.output_width();
  std::size_t w = state.numerical.size();
  for (auto d : categorical_dims(spec, state)) w += d;
  return w;
}

template <class T>
class InputEncoder {
 public:
  InputEncoder() = default;

  InputEncoder(const EncoderSpec& spec, const PreprocessorState& state, nn::Rng& rng)
      : spec_(spec), layout_(state.layout()), raw_width_(state.output_width()),
        n_numerical_(state.numerical.size()), width_(resulting_width(spec, state)) {
    if (state.format != required_format(spec.kind))
      throw ValidationError(std::string("encoding requires ") +
                            (required_format(spec.kind) == CategoricalFormat::OneHot
                                 ? "one-hot"
                                 : "integer-index") +
                            " categorical preprocessing");
    const auto dims = categorical_dims(spec, state);
    switch (spec.kind) {
      case EncodingKind::CategoricalLookup:
        for (std::size_t c = 0; c < state.categorical.size(); ++c)
          tables_.emplace_back(state.categorical[c].fitted_levels() + 1, dims[c], rng);
        break;
      case EncodingKind::CategoricalDense:
      case EncodingKind::CategoricalProjection: {
        const bool dense = spec.kind == EncodingKind::CategoricalDense;
        for (std::size_t c = 0; c < state.categorical.size(); ++c)
          layers_.emplace_back(layout_[n_numerical_ + c].width, dims[c], dense,
                               dense ? nn::Activation::ReLU : nn::Activation::None, rng);
        break;
      }
      case EncodingKind::RecordDense:
        layers_.emplace_back(raw_width_, width_, true, nn::Activation::ReLU, rng);
        break;
      case EncodingKind::RecordProjection:
        layers_.emplace_back(raw_width_, width_, false, nn::Activation::None, rng);
        break;
      case EncodingKind::NoEncoding:
        break;
    }
  }

  std::size_t raw_width() const { return raw_width_; }
  std::size_t width() const { return width_; }
  const EncoderSpec& spec() const { return spec_; }

  nn::Tensor<T> forward(const nn::Tensor<T>& x) const {
    if (x.rank() != 3 || x.dim(2) != raw_width_)
      throw ShapeError("encoder expects [B, W, " + std::to_string(raw_width_) + "], got " +
                       nn::to_string(x.shape()));
    switch (spec_.kind) {
      case EncodingKind::NoEncoding:
        return x;
      case EncodingKind::RecordDense:
      case EncodingKind::RecordProjection:
        return layers_[0].forward(x);
      case EncodingKind::CategoricalLookup: {
        const std::size_t rows = x.dim(0) * x.dim(1);
        std::vector<nn::Tensor<T>> parts;
        for (std::size_t c = 0; c < tables_.size(); ++c) {
          const std::size_t col = layout_[n_numerical_ + c].offset;
          std::vector<std::size_t> idx(rows);
          for (std::size_t r = 0; r < rows; ++r) {
            const T v = x.data()[r * raw_width_ + col];
            if (!(v >= T(0))) throw ShapeError("negative categorical index");
            idx[r] = static_cast<std::size_t>(std::llround(double(v)));
          }
          parts.push_back(tables_[c].forward(std::move(idx), {x.dim(0), x.dim(1)}));
        }
        return finish(x, std::move(parts));
      }
      case EncodingKind::CategoricalDense:
      case EncodingKind::CategoricalProjection: {
        std::vector<nn::Tensor<T>> parts;
        for (std::size_t c = 0; c < layers_.size(); ++c) {
          const auto& blk = layout_[n_numerical_ + c];
          parts.push_back(layers_[c].forward(nn::slice_last(x, blk.offset, blk.width)));
        }
        return finish(x, std::move(parts));
      }
    }
    return x;
  }

  void collect(const std::string& prefix, nn::ParameterList<T>& out) const {
    for (std::size_t c = 0; c < tables_.size(); ++c)
      tables_[c].collect(nn::join_name(prefix, layout_[n_numerical_ + c].feature), out);
    if (is_record_level(spec_.kind)) {
      layers_[0].collect(nn::join_name(prefix, "record"), out);
    } else {
      for (std::size_t c = 0; c < layers_.size(); ++c)
        layers_[c].collect(nn::join_name(prefix, layout_[n_numerical_ + c].feature), out);
    }
  }

 private:
  nn::Tensor<T> finish(const nn::Tensor<T>& x, std::vector<nn::Tensor<T>> parts) const {
    if (n_numerical_ > 0) parts.push_back(nn::slice_last(x, 0, n_numerical_));
    return nn::concat_last(parts);
  }

  EncoderSpec spec_;
  std::vector<ColumnBlock> layout_;
  std::size_t raw_width_ = 0;
  std::size_t n_numerical_ = 0;
  std::size_t width_ = 0;
  std::vector<nn::Embedding<T>> tables_;
  std::vector<nn::Dense<T>> layers_;
};

}  // namespace flowformer

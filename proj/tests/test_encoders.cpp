#include <gtest/gtest.h>

#include <map>

#include "support.hpp"

using namespace flowformer;
using testing_support::random_input;
using testing_support::random_state;

namespace {

constexpr EncodingKind kAllKinds[] = {EncodingKind::CategoricalLookup, EncodingKind::CategoricalDense,
                                      EncodingKind::CategoricalProjection, EncodingKind::RecordDense,
                                      EncodingKind::RecordProjection, EncodingKind::NoEncoding};

std::map<std::string, nn::Tensor<double>> named(const InputEncoder<double>& enc) {
  nn::ParameterList<double> list;
  enc.collect("enc", list);
  std::map<std::string, nn::Tensor<double>> out;
  for (const auto& p : list) out.emplace(p.name, p.tensor);
  return out;
}

/// Parameter count from the layer shapes alone.
std::size_t expected_count(EncodingKind kind, const PreprocessorState& s, std::size_t record_dim) {
  const std::size_t raw = s.output_width();
  std::size_t n = 0;
  for (std::size_t c = 0; c < s.categorical.size(); ++c) {
    const std::size_t rows = s.categorical[c].fitted_levels() + 1;
    const std::size_t d = std::min<std::size_t>(16, (rows + 1) / 2);
    if (kind == EncodingKind::CategoricalLookup) n += rows * d;
    if (kind == EncodingKind::CategoricalDense) n += rows * d + d;
    if (kind == EncodingKind::CategoricalProjection) n += rows * d;
  }
  if (kind == EncodingKind::RecordDense) n = raw * record_dim + record_dim;
  if (kind == EncodingKind::RecordProjection) n = raw * record_dim;
  return n;
}

}  // namespace

TEST(Encoders, DefaultCategoricalDim) {
  EXPECT_EQ(default_categorical_dim(33), 16u);
  EXPECT_EQ(default_categorical_dim(32), 16u);
  EXPECT_EQ(default_categorical_dim(5), 3u);
  EXPECT_EQ(default_categorical_dim(2), 1u);
}

TEST(Encoders, WidthsAndParameterCounts) {
  for (auto kind : kAllKinds) {
    const auto s = random_state(required_format(kind), 3, 4, 40, 32);
    nn::Rng rng(1);
    EncoderSpec spec{kind, 0, 0};
    InputEncoder<double> enc(spec, s, rng);
    nn::ParameterList<double> list;
    enc.collect("enc", list);
    EXPECT_EQ(list.count(), expected_count(kind, s, 64)) << to_string(kind);

    const std::size_t want = kind == EncodingKind::NoEncoding ? s.output_width()
                             : is_record_level(kind)          ? 64u
                                                              : 4u + 3u * 16u;
    EXPECT_EQ(enc.width(), want) << to_string(kind);
    std::mt19937_64 gen(2);
    const auto y = enc.forward(random_input(s, 3, 5, gen));
    EXPECT_EQ(y.shape(), (nn::Shape{3, 5, want})) << to_string(kind);
  }
}

TEST(Encoders, ExplicitWidthsOverrideDefaults) {
  const auto s = random_state(CategoricalFormat::OneHot, 2, 3, 10, 8);
  nn::Rng rng(1);
  EXPECT_EQ(InputEncoder<double>({EncodingKind::CategoricalDense, 5, 0}, s, rng).width(), 3u + 2u * 5u);
  EXPECT_EQ(InputEncoder<double>({EncodingKind::RecordDense, 0, 24}, s, rng).width(), 24u);
}

TEST(Encoders, FormatMismatchIsRejected) {
  const auto onehot = random_state(CategoricalFormat::OneHot, 2, 2, 10, 8);
  const auto index = random_state(CategoricalFormat::IntegerIndex, 2, 2, 10, 8);
  nn::Rng rng(1);
  EXPECT_THROW(InputEncoder<double>({EncodingKind::CategoricalLookup}, onehot, rng), ValidationError);
  for (auto kind : {EncodingKind::CategoricalDense, EncodingKind::CategoricalProjection, EncodingKind::RecordDense,
                    EncodingKind::RecordProjection, EncodingKind::NoEncoding})
    EXPECT_THROW(InputEncoder<double>({kind}, index, rng), ValidationError) << to_string(kind);
}

TEST(Encoders, WrongInputWidthIsAShapeError) {
  const auto s = random_state(CategoricalFormat::OneHot, 2, 2, 10, 8);
  nn::Rng rng(1);
  InputEncoder<double> enc({EncodingKind::RecordProjection}, s, rng);
  EXPECT_THROW(enc.forward(nn::Tensor<double>::zeros({1, 2, s.output_width() + 1})), ShapeError);
}

TEST(Encoders, LookupMatchesTableRowsAndPassesNumericalsThrough) {
  const auto s = random_state(CategoricalFormat::IntegerIndex, 2, 3, 12, 8);
  nn::Rng rng(3);
  InputEncoder<double> enc({EncodingKind::CategoricalLookup}, s, rng);
  const auto p = named(enc);
  std::mt19937_64 gen(4);
  const auto x = random_input(s, 2, 3, gen);
  const auto y = enc.forward(x);
  const std::size_t raw = s.output_width(), out = enc.width();
  for (std::size_t r = 0; r < 6; ++r) {
    std::size_t off = 0;
    for (std::size_t c = 0; c < 2; ++c) {
      const auto& table = p.at("enc.cat" + std::to_string(c) + ".table");
      const auto idx = std::size_t(x.data()[r * raw + 3 + c]);
      for (std::size_t k = 0; k < table.dim(1); ++k)
        EXPECT_EQ(y.data()[r * out + off + k], table.data()[idx * table.dim(1) + k]);
      off += table.dim(1);
    }
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(y.data()[r * out + off + k], x.data()[r * raw + k]);
  }
}

TEST(Encoders, ProjectionOfOneHotSelectsWeightRows) {
  const auto s = random_state(CategoricalFormat::OneHot, 2, 1, 6, 8);
  nn::Rng rng(5);
  for (auto kind : {EncodingKind::CategoricalProjection, EncodingKind::CategoricalDense}) {
    InputEncoder<double> enc({kind}, s, rng);
    const auto p = named(enc);
    std::mt19937_64 gen(6);
    const auto x = random_input(s, 4, 2, gen);
    const auto y = enc.forward(x);
    const auto lay = s.layout();
    for (std::size_t r = 0; r < 8; ++r) {
      std::size_t off = 0;
      for (std::size_t c = 0; c < 2; ++c) {
        const auto& w = p.at("enc.cat" + std::to_string(c) + ".w");
        const double* hot = x.data().data() + r * s.output_width() + lay[1 + c].offset;
        const auto idx = std::size_t(std::find(hot, hot + lay[1 + c].width, 1.0) - hot);
        for (std::size_t k = 0; k < w.dim(1); ++k) {
          double v = w.data()[idx * w.dim(1) + k];
          if (kind == EncodingKind::CategoricalDense) v = std::max(0.0, v + p.at("enc.cat" + std::to_string(c) + ".b").data()[k]);
          EXPECT_NEAR(y.data()[r * enc.width() + off + k], v, 1e-12);
        }
        off += w.dim(1);
      }
    }
  }
}

TEST(Encoders, RecordProjectionIsALinearMap) {
  const auto s = random_state(CategoricalFormat::OneHot, 2, 3, 6, 8);
  nn::Rng rng(7);
  InputEncoder<double> enc({EncodingKind::RecordProjection, 0, 8}, s, rng);
  const auto& w = named(enc).at("enc.record.w");
  std::mt19937_64 gen(8);
  const auto x = random_input(s, 2, 2, gen);
  const auto ref = testing_support::ref_matmul(x.values(), 4, s.output_width(), w.values(), 8);
  const auto y = enc.forward(x);
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y.data()[i], ref[i], 1e-12);
}

TEST(Encoders, GradientsFlowToEveryParameter) {
  for (auto kind : kAllKinds) {
    if (kind == EncodingKind::NoEncoding) continue;
    const auto s = random_state(required_format(kind), 2, 2, 6, 8);
    nn::Rng rng(9);
    InputEncoder<double> enc({kind, 0, 8}, s, rng);
    std::mt19937_64 gen(10);
    auto loss = nn::sum(nn::mul(enc.forward(random_input(s, 3, 2, gen)),
                                testing_support::random_tensor({3, 2, enc.width()}, gen, 0.5, 1.5, false)));
    nn::backward(loss);
    for (const auto& [name, t] : named(enc)) {
      double mag = 0;
      for (double g : t.grad()) mag += std::abs(g);
      EXPECT_GT(mag, 0.0) << to_string(kind) << " " << name;
    }
  }
}

#include <gtest/gtest.h>

#include "support.hpp"

using namespace flowformer;
using testing_support::random_tensor;

namespace {

constexpr HeadKind kAllHeads[] = {HeadKind::LastToken,           HeadKind::Flatten,
                                  HeadKind::GlobalAveragePooling, HeadKind::FeaturewiseEmbedding,
                                  HeadKind::FeaturewiseProjection, HeadKind::ClsToken};

std::size_t mlp_count(std::size_t r) { return r * 128 + 128 + 128 + 1; }

/// Head parameters from the shapes alone, default [128] hidden layer.
std::size_t expected(HeadKind kind, std::size_t seq, std::size_t d, bool per_feature) {
  switch (kind) {
    case HeadKind::LastToken:
    case HeadKind::GlobalAveragePooling:
      return mlp_count(d);
    case HeadKind::ClsToken:
      return mlp_count(d) + d;
    case HeadKind::Flatten:
      return mlp_count(seq * d);
    case HeadKind::FeaturewiseProjection:
      return mlp_count(d) + (per_feature ? seq * d : seq);
    case HeadKind::FeaturewiseEmbedding:
      return mlp_count(d) + (per_feature ? seq * d + d : seq + 1);
  }
  return 0;
}

std::size_t count(const ClassificationHead<double>& h) {
  nn::ParameterList<double> list;
  h.collect("h", list);
  return list.count();
}

}  // namespace

TEST(Heads, ParameterCountsPerKind) {
  for (auto kind : kAllHeads)
    for (bool per_feature : {false, true})
      for (std::size_t w : {1u, 4u, 9u}) {
        nn::Rng rng(1);
        const std::size_t seq = sequence_length(kind, w), d = 12;
        HeadSpec spec{kind, {128}, per_feature};
        ClassificationHead<double> h(spec, seq, d, rng);
        EXPECT_EQ(count(h), expected(kind, seq, d, per_feature)) << to_string(kind) << " W=" << w;
        EXPECT_EQ(h.mlp_parameter_count(), mlp_count(reduced_width(kind, seq, d)));
      }
}

TEST(Heads, WindowScaling) {
  // only Flatten grows with the window in its MLP; featurewise grows by T
  for (auto kind : kAllHeads) {
    nn::Rng rng(2);
    const auto at = [&](std::size_t w) {
      return count(ClassificationHead<double>({kind}, sequence_length(kind, w), 8, rng));
    };
    const std::size_t step = at(5) - at(4);
    EXPECT_EQ(at(9) - at(8), step) << to_string(kind);
    const std::size_t want = kind == HeadKind::Flatten ? 8u * 128u : is_featurewise(kind) ? 1u : 0u;
    EXPECT_EQ(step, want) << to_string(kind);
  }
}

TEST(Heads, CustomMlpShape) {
  nn::Rng rng(3);
  ClassificationHead<double> h({HeadKind::LastToken, {7, 5}}, 4, 6, rng);
  EXPECT_EQ(count(h), (6u * 7 + 7) + (7u * 5 + 5) + (5u + 1));
  EXPECT_THROW(ClassificationHead<double>({HeadKind::LastToken, {0}}, 4, 6, rng), ValidationError);
}

TEST(Heads, ReductionOracles) {
  std::mt19937_64 gen(4);
  const std::size_t B = 3, T = 5, D = 4;
  const auto x = random_tensor({B, T, D}, gen, -1, 1, false);
  auto at = [&](std::size_t b, std::size_t t, std::size_t c) { return x.data()[(b * T + t) * D + c]; };
  for (auto kind : kAllHeads)
    for (bool per_feature : {false, true}) {
      nn::Rng rng(5);
      ClassificationHead<double> h({kind, {128}, per_feature}, T, D, rng);
      nn::ParameterList<double> list;
      h.collect("h", list);
      const nn::Tensor<double>* w = nullptr;
      const nn::Tensor<double>* bias = nullptr;
      for (const auto& p : list) {
        if (p.name == "h.featurewise.w") w = &p.tensor;
        if (p.name == "h.featurewise.b") bias = &p.tensor;
      }
      const auto r = h.reduce(x);
      ASSERT_EQ(r.shape(), (nn::Shape{B, reduced_width(kind, T, D)}));
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < D; ++c) {
          double want = 0;
          switch (kind) {
            case HeadKind::LastToken:
            case HeadKind::ClsToken:
              want = at(b, T - 1, c);
              break;
            case HeadKind::GlobalAveragePooling:
              for (std::size_t t = 0; t < T; ++t) want += at(b, t, c) / double(T);
              break;
            case HeadKind::Flatten:
              for (std::size_t t = 0; t < T; ++t) EXPECT_EQ(r.data()[b * T * D + t * D + c], at(b, t, c));
              continue;
            case HeadKind::FeaturewiseEmbedding:
            case HeadKind::FeaturewiseProjection:
              for (std::size_t t = 0; t < T; ++t) want += w->data()[per_feature ? t * D + c : t] * at(b, t, c);
              if (bias) want = std::max(0.0, want + bias->data()[per_feature ? c : 0]);
              break;
          }
          EXPECT_NEAR(r.data()[b * D + c], want, 1e-12) << to_string(kind);
        }
      EXPECT_EQ(h.forward(x).shape(), (nn::Shape{B}));
    }
}

TEST(Heads, ClsTokenIsAppendedLast) {
  nn::Rng rng(6);
  ClassificationHead<double> h({HeadKind::ClsToken}, 4, 3, rng);
  std::mt19937_64 gen(7);
  const auto x = random_tensor({2, 3, 3}, gen, -1, 1, false);
  const auto y = h.prepare(x);
  ASSERT_EQ(y.shape(), (nn::Shape{2, 4, 3}));
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t c = 0; c < 3; ++c) {
      EXPECT_EQ(y.data()[(b * 4 + 3) * 3 + c], h.cls_token().data()[c]);
      EXPECT_EQ(y.data()[(b * 4 + 0) * 3 + c], x.data()[(b * 3) * 3 + c]);
    }
  for (auto kind : kAllHeads)
    if (kind != HeadKind::ClsToken) {
      ClassificationHead<double> other({kind}, 3, 3, rng);
      EXPECT_EQ(other.prepare(x).node(), x.node());
    }
}

TEST(Heads, GradientsMatchFiniteDifferences) {
  for (auto kind : kAllHeads)
    for (bool per_feature : {false, true}) {
      nn::Rng rng(8);
      ClassificationHead<double> h({kind, {5}, per_feature}, 3, 4, rng);
      nn::ParameterList<double> list;
      h.collect("h", list);
      std::mt19937_64 gen(9);
      // zero biases would park ReLU pre-activations on the kink for all-zero rows
      for (auto& layer : h.mlp())
        for (auto& b : layer.bias().data()) b = std::uniform_real_distribution<double>(0.1, 0.3)(gen);
      std::vector<nn::Tensor<double>> in{random_tensor({2, 3, 4}, gen)};
      for (auto& p : list) in.push_back(p.tensor);
      const auto res = testing_support::grad_check(
          [&](std::vector<nn::Tensor<double>>& v) { return h.forward(v[0]); }, in, 10);
      EXPECT_LT(res.max_rel_error, 1e-5) << to_string(kind) << per_feature;
    }
}

#include <gtest/gtest.h>

#include <map>

#include "support.hpp"

using namespace flowformer;

namespace {

FlowTable random_table(std::mt19937_64& gen, std::size_t rows, std::size_t n_cat, std::size_t n_num,
                       std::size_t n_levels) {
  FlowTable t;
  for (std::size_t c = 0; c < n_cat; ++c) t.spec.categorical_features.push_back("c" + std::to_string(c));
  for (std::size_t c = 0; c < n_num; ++c) t.spec.numerical_features.push_back("n" + std::to_string(c));
  t.spec.class_column = "Label";
  t.spec.benign_label = "Benign";
  t.categorical.assign(n_cat, {});
  t.numerical.assign(n_num, {});
  std::uniform_real_distribution<double> u(-5.0, 1e5);
  for (std::size_t r = 0; r < rows; ++r) {
    for (auto& col : t.categorical) {
      const auto k = gen() % n_levels;
      col.push_back(gen() % 20 == 0 ? kMissingLevel : "v" + std::to_string(k * k % n_levels));
    }
    for (auto& col : t.numerical) col.push_back(gen() % 10 == 0 ? 0.0 : u(gen));
    t.classes.push_back("Benign");
  }
  return t;
}

}  // namespace

TEST(Preprocess, NumericalScalingIsLogMinMax) {
  NumericalParams p{"x", std::log1p(1.0), std::log1p(99.0)};
  EXPECT_DOUBLE_EQ(p.scale(1.0), 0.0);
  EXPECT_DOUBLE_EQ(p.scale(99.0), 1.0);
  EXPECT_NEAR(p.scale(9.0), (std::log(10.0) - std::log(2.0)) / (std::log(100.0) - std::log(2.0)), 1e-15);
  EXPECT_EQ(p.scale(1e9), 1.0);
  EXPECT_EQ(p.scale(-4.0), 0.0);
  NumericalParams flat{"y", 2.0, 2.0};
  EXPECT_EQ(flat.scale(123.0), 0.0);
}

TEST(Preprocess, LevelsRankedByFrequencyThenFirstSeen) {
  FlowTable t;
  t.spec.categorical_features = {"c"};
  t.spec.class_column = "Label";
  t.categorical = {{"b", "a", "c", "a", "c", kMissingLevel, kMissingLevel, kMissingLevel, "d", "b"}};
  t.classes.assign(10, "Benign");
  const auto s = fit(t, 3, CategoricalFormat::OneHot);
  EXPECT_EQ(s.categorical[0].levels, (std::vector<std::string>{"b", "a", "c"}));
  EXPECT_EQ(s.categorical[0].index_of("b"), 1u);
  EXPECT_EQ(s.categorical[0].index_of("d"), 0u);
  EXPECT_EQ(s.output_width(), 4u);
  EXPECT_THROW(fit(t, 0, CategoricalFormat::OneHot), ValidationError);
}

TEST(Preprocess, MatchesBruteForceOracle) {
  std::mt19937_64 gen(17);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n_levels = 3 + gen() % 40, budget = 1 + gen() % 20;
    auto train = random_table(gen, 100, 3, 4, n_levels);
    auto test = random_table(gen, 50, 3, 4, n_levels + 5);  // includes unseen levels
    for (auto fmt : {CategoricalFormat::OneHot, CategoricalFormat::IntegerIndex}) {
      const auto state = fit(train, budget, fmt);
      const auto m = transform(test, state);

      // oracle: recompute everything from the raw columns
      std::vector<std::size_t> widths;
      std::vector<std::map<std::string, std::size_t>> index(3);
      for (std::size_t c = 0; c < 3; ++c) {
        std::map<std::string, std::pair<long, long>> stats;  // level -> (-count, first row)
        for (std::size_t r = 0; r < 100; ++r) {
          const auto& v = train.categorical[c][r];
          if (v == kMissingLevel) continue;
          auto [it, fresh] = stats.try_emplace(v, 0, long(r));
          --it->second.first;
        }
        std::vector<std::pair<std::pair<long, long>, std::string>> order;
        for (const auto& [lvl, st] : stats) order.push_back({st, lvl});
        std::sort(order.begin(), order.end());
        for (std::size_t i = 0; i < order.size() && i < budget; ++i) index[c][order[i].second] = i + 1;
        widths.push_back(fmt == CategoricalFormat::OneHot ? index[c].size() + 1 : 1);
      }
      std::size_t width = 4;
      for (auto w : widths) width += w;
      ASSERT_EQ(m.width, width);

      for (std::size_t r = 0; r < 50; ++r) {
        for (std::size_t c = 0; c < 4; ++c) {
          double lo = INFINITY, hi = -INFINITY;
          for (double x : train.numerical[c]) {
            lo = std::min(lo, std::log1p(std::max(x, 0.0)));
            hi = std::max(hi, std::log1p(std::max(x, 0.0)));
          }
          double expect = (std::log1p(std::max(test.numerical[c][r], 0.0)) - lo) / (hi - lo);
          expect = std::min(1.0, std::max(0.0, expect));
          EXPECT_NEAR(m.at(r, c), expect, 1e-6);
        }
        std::size_t off = 4;
        for (std::size_t c = 0; c < 3; ++c) {
          auto it = index[c].find(test.categorical[c][r]);
          const std::size_t idx = it == index[c].end() ? 0 : it->second;
          if (fmt == CategoricalFormat::IntegerIndex) {
            EXPECT_EQ(m.at(r, off), float(idx));
          } else {
            for (std::size_t k = 0; k < widths[c]; ++k) EXPECT_EQ(m.at(r, off + k), k == idx ? 1.0f : 0.0f);
          }
          off += widths[c];
        }
      }
    }
  }
}

TEST(Preprocess, TransformIsPureAndDeterministic) {
  std::mt19937_64 gen(2);
  const auto t = random_table(gen, 80, 2, 2, 10);
  const auto s = fit(t, 5, CategoricalFormat::OneHot);
  EXPECT_EQ(transform(t, s).values, transform(t, s).values);
  EXPECT_EQ(fit(t, 5, CategoricalFormat::OneHot), s);
}

TEST(Preprocess, StateRoundTripsThroughJson) {
  std::mt19937_64 gen(4);
  const auto t = random_table(gen, 60, 2, 3, 12);
  const auto s = fit(t, 4, CategoricalFormat::IntegerIndex);
  const auto dir = testing_support::scratch_dir("pre");
  save_preprocessor(s, dir + "/p.json");
  EXPECT_EQ(load_preprocessor(dir + "/p.json"), s);
  testing_support::write_file(dir + "/bad.json", R"({"version": 9})");
  EXPECT_THROW(load_preprocessor(dir + "/bad.json"), ParseError);
}

TEST(Preprocess, RejectsMismatchedTables) {
  std::mt19937_64 gen(5);
  const auto a = random_table(gen, 30, 2, 2, 5);
  const auto b = random_table(gen, 30, 1, 2, 5);
  EXPECT_THROW(transform(b, fit(a, 4, CategoricalFormat::OneHot)), ValidationError);
}

TEST(Preprocess, LayoutPutsNumericalFirst) {
  std::mt19937_64 gen(6);
  const auto t = random_table(gen, 50, 2, 3, 6);
  const auto s = fit(t, 3, CategoricalFormat::OneHot);
  const auto lay = s.layout();
  ASSERT_EQ(lay.size(), 5u);
  EXPECT_EQ(lay[2].offset, 2u);
  EXPECT_EQ(lay[3].kind, FeatureKind::Categorical);
  EXPECT_EQ(lay[3].offset, 3u);
  EXPECT_EQ(lay[3].width, 4u);
  EXPECT_EQ(lay[4].offset, 7u);
}

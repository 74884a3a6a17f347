#pragma once

// Fit-on-train feature preparation. Categorical columns keep their N most
// frequent training levels (indices 1..N, everything else 0); numerical
// columns are log1p-transformed then min-max scaled into [0, 1].
//
// Transformed column order: numerical features in spec order, then one block
// per categorical feature in spec order (a single index column, or a
// levels+1 wide one-hot block whose slot 0 is the out-of-vocabulary level).

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "flowformer/error.hpp"
#include "flowformer/ingest.hpp"

namespace flowformer {

enum class CategoricalFormat { IntegerIndex, OneHot };

inline constexpr std::size_t kDefaultLevels = 32;
inline constexpr int kPreprocessorVersion = 1;

struct CategoricalMap {
  std::string feature;
  std::size_t budget = kDefaultLevels;
  std::vector<std::string> levels;  ///< levels[i] has index i + 1

  std::unordered_map<std::string, std::size_t> lookup() const {
    std::unordered_map<std::string, std::size_t> out;
    for (std::size_t i = 0; i < levels.size(); ++i) out.emplace(levels[i], i + 1);
    return out;
  }
  std::size_t index_of(const std::string& level) const {
    auto it = std::find(levels.begin(), levels.end(), level);
    return it == levels.end() ? 0 : static_cast<std::size_t>(it - levels.begin()) + 1;
  }
  std::size_t fitted_levels() const { return levels.size(); }

  bool operator==(const CategoricalMap&) const = default;
};

struct NumericalParams {
  std::string feature;
  double min_log = 0.0;
  double max_log = 0.0;

  /// Constant training columns map everything to 0.
  double scale(double x) const {
    const double l = std::log1p(std::max(x, 0.0));
    if (!(max_log > min_log)) return 0.0;
    return std::clamp((l - min_log) / (max_log - min_log), 0.0, 1.0);
  }
  bool operator==(const NumericalParams&) const = default;
};

/// One contiguous block of transformed columns.
struct ColumnBlock {
  std::string feature;
  FeatureKind kind;
  std::size_t offset;
  std::size_t width;
  bool operator==(const ColumnBlock&) const = default;
};

struct PreprocessorState {
  CategoricalFormat format = CategoricalFormat::OneHot;
  std::vector<NumericalParams> numerical;
  std::vector<CategoricalMap> categorical;

  std::size_t output_width() const {
    std::size_t w = numerical.size();
    for (const auto& c : categorical)
      w += format == CategoricalFormat::IntegerIndex ? 1 : c.fitted_levels() + 1;
    return w;
  }

  std::vector<ColumnBlock> layout() const {
    std::vector<ColumnBlock> out;
    std::size_t off = 0;
    for (const auto& n : numerical) out.push_back({n.feature, FeatureKind::Numerical, off++, 1});
    for (const auto& c : categorical) {
      const std::size_t w = format == CategoricalFormat::IntegerIndex ? 1 : c.fitted_levels() + 1;
      out.push_back({c.feature, FeatureKind::Categorical, off, w});
      off += w;
    }
    return out;
  }

  bool operator==(const PreprocessorState&) const = default;
};

inline std::size_t output_width(const PreprocessorState& state) { return state.output_width(); }

inline PreprocessorState fit(const FlowTable& train, std::size_t levels_budget,
                             CategoricalFormat format) {
  if (levels_budget == 0) throw ValidationError("level budget N must be positive");
  if (train.row_count() == 0) throw ValidationError("cannot fit on an empty table");
  PreprocessorState state;
  state.format = format;
  const auto& spec = train.spec;

  for (std::size_t c = 0; c < spec.numerical_features.size(); ++c) {
    NumericalParams p{spec.numerical_features[c], 0.0, 0.0};
    bool first = true;
    for (double x : train.numerical[c]) {
      const double l = std::log1p(std::max(x, 0.0));
      if (first) {
        p.min_log = p.max_log = l;
        first = false;
      } else {
        p.min_log = std::min(p.min_log, l);
        p.max_log = std::max(p.max_log, l);
      }
    }
    state.numerical.push_back(p);
  }

  for (std::size_t c = 0; c < spec.categorical_features.size(); ++c) {
    struct Tally {
      std::size_t count = 0;
      std::size_t first_seen = 0;
    };
    std::unordered_map<std::string, Tally> tally;
    const auto& col = train.categorical[c];
    for (std::size_t r = 0; r < col.size(); ++r) {
      if (col[r] == kMissingLevel) continue;
      auto [it, inserted] = tally.try_emplace(col[r], Tally{0, r});
      ++it->second.count;
    }
    std::vector<std::pair<std::string, Tally>> ranked(tally.begin(), tally.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      if (a.second.count != b.second.count) return a.second.count > b.second.count;
      return a.second.first_seen < b.second.first_seen;
    });
    CategoricalMap m;
    m.feature = spec.categorical_features[c];
    m.budget = levels_budget;
    for (std::size_t i = 0; i < ranked.size() && i < levels_budget; ++i)
      m.levels.push_back(ranked[i].first);
    state.categorical.push_back(std::move(m));
  }
  return state;
}

/// Pure function of (table, state).
inline FeatureMatrix transform(const FlowTable& table, const PreprocessorState& state) {
  const auto& spec = table.spec;
  if (spec.numerical_features.size() != state.numerical.size() ||
      spec.categorical_features.size() != state.categorical.size())
    throw ValidationError("table features do not match the fitted preprocessor");
  for (std::size_t c = 0; c < state.numerical.size(); ++c)
    if (state.numerical[c].feature != spec.numerical_features[c])
      throw ValidationError("no fitted state for numerical feature '" +
                            spec.numerical_features[c] + "'");
  for (std::size_t c = 0; c < state.categorical.size(); ++c)
    if (state.categorical[c].feature != spec.categorical_features[c])
      throw ValidationError("no fitted state for categorical feature '" +
                            spec.categorical_features[c] + "'");

  FeatureMatrix m;
  m.rows = table.row_count();
  m.width = state.output_width();
  m.values.assign(m.rows * m.width, 0.0f);
  const auto blocks = state.layout();
  const std::size_t n_num = state.numerical.size();
  std::vector<std::unordered_map<std::string, std::size_t>> lookups;
  for (const auto& c : state.categorical) lookups.push_back(c.lookup());
  for (std::size_t r = 0; r < m.rows; ++r) {
    float* row = m.values.data() + r * m.width;
    for (std::size_t c = 0; c < n_num; ++c)
      row[c] = static_cast<float>(state.numerical[c].scale(table.numerical[c][r]));
    for (std::size_t c = 0; c < state.categorical.size(); ++c) {
      const auto it = lookups[c].find(table.categorical[c][r]);
      const std::size_t idx = it == lookups[c].end() ? 0 : it->second;
      const auto& blk = blocks[n_num + c];
      if (state.format == CategoricalFormat::IntegerIndex)
        row[blk.offset] = static_cast<float>(idx);
      else
        row[blk.offset + idx] = 1.0f;
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Persistence (JSON, versioned)

inline nlohmann::json to_json(const PreprocessorState& s) {
  nlohmann::json j;
  j["version"] = kPreprocessorVersion;
  j["format"] = s.format == CategoricalFormat::OneHot ? "onehot" : "integer";
  j["numerical"] = nlohmann::json::array();
  for (const auto& n : s.numerical)
    j["numerical"].push_back({{"feature", n.feature}, {"min_log", n.min_log}, {"max_log", n.max_log}});
  j["categorical"] = nlohmann::json::array();
  for (const auto& c : s.categorical)
    j["categorical"].push_back({{"feature", c.feature}, {"budget", c.budget}, {"levels", c.levels}});
  return j;
}

inline PreprocessorState preprocessor_from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() != kPreprocessorVersion)
      throw ParseError("unsupported preprocessor state version");
    PreprocessorState s;
    const auto fmt = j.at("format").get<std::string>();
    if (fmt == "onehot")
      s.format = CategoricalFormat::OneHot;
    else if (fmt == "integer")
      s.format = CategoricalFormat::IntegerIndex;
    else
      throw ParseError("unknown categorical format '" + fmt + "'");
    for (const auto& n : j.at("numerical"))
      s.numerical.push_back({n.at("feature"), n.at("min_log"), n.at("max_log")});
    for (const auto& c : j.at("categorical")) {
      CategoricalMap m;
      m.feature = c.at("feature");
      m.budget = c.at("budget");
      m.levels = c.at("levels").get<std::vector<std::string>>();
      s.categorical.push_back(std::move(m));
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad preprocessor state: ") + e.what());
  }
}

inline void save_preprocessor(const PreprocessorState& s, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << to_json(s).dump(2) << '\n';
}

inline PreprocessorState load_preprocessor(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad preprocessor state: ") + e.what());
  }
  return preprocessor_from_json(j);
}

}  // namespace flowformer

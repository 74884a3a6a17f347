#pragma once

// Flow table ingestion, cleaning, train/eval splitting and fixed-length
// window materialization.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include "flowformer/csv.hpp"
#include "flowformer/error.hpp"
#include "flowformer/schema.hpp"

namespace flowformer {

inline const std::string kMissingLevel = "__missing__";

struct CleaningReport {
  /// Per numerical column: values replaced by 0.0 (empty, unparseable, NaN, +-inf).
  std::map<std::string, std::size_t> numerical_replaced;
  /// Per categorical column: empty cells mapped to the missing level.
  std::map<std::string, std::size_t> categorical_missing;

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& [_, c] : numerical_replaced) n += c;
    for (const auto& [_, c] : categorical_missing) n += c;
    return n;
  }
};

/// Columnar flow data. Numerical and categorical columns follow the spec's
/// declared order. `source_rows` holds each row's index in the file it was
/// loaded from, so split parts can be traced back.
struct FlowTable {
  DatasetSpec spec;
  std::vector<std::vector<double>> numerical;
  std::vector<std::vector<std::string>> categorical;
  std::vector<std::string> classes;
  std::vector<std::size_t> source_rows;
  CleaningReport cleaning;

  std::size_t row_count() const { return classes.size(); }

  bool is_malicious(std::size_t row) const { return classes[row] != spec.benign_label; }

  std::size_t malicious_count() const {
    std::size_t n = 0;
    for (std::size_t r = 0; r < row_count(); ++r) n += is_malicious(r);
    return n;
  }

  using ColumnView = std::variant<const std::vector<double>*, const std::vector<std::string>*>;

  ColumnView column(const std::string& name) const {
    for (std::size_t i = 0; i < spec.numerical_features.size(); ++i)
      if (spec.numerical_features[i] == name) return &numerical[i];
    for (std::size_t i = 0; i < spec.categorical_features.size(); ++i)
      if (spec.categorical_features[i] == name) return &categorical[i];
    if (name == spec.class_column) return &classes;
    throw ValidationError("no column named '" + name + "'");
  }

  /// New table holding `rows` (in the given order); cleaning stats are not copied.
  FlowTable subset(std::span<const std::size_t> rows) const {
    FlowTable out;
    out.spec = spec;
    out.numerical.resize(numerical.size());
    out.categorical.resize(categorical.size());
    for (std::size_t c = 0; c < numerical.size(); ++c) {
      out.numerical[c].reserve(rows.size());
      for (auto r : rows) out.numerical[c].push_back(numerical[c][r]);
    }
    for (std::size_t c = 0; c < categorical.size(); ++c) {
      out.categorical[c].reserve(rows.size());
      for (auto r : rows) out.categorical[c].push_back(categorical[c][r]);
    }
    out.classes.reserve(rows.size());
    out.source_rows.reserve(rows.size());
    for (auto r : rows) {
      out.classes.push_back(classes[r]);
      out.source_rows.push_back(source_rows[r]);
    }
    return out;
  }

  bool same_contents(const FlowTable& o) const {
    return numerical == o.numerical && categorical == o.categorical && classes == o.classes;
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

inline double parse_number(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || p != s.data() + s.size())
    return std::numeric_limits<double>::quiet_NaN();
  return v;
}

inline std::string format_number(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

}  // namespace detail

/// Replaces non-finite numericals with 0.0 and empty categoricals with the
/// missing level, accumulating counts into table.cleaning. Idempotent.
inline void clean_table(FlowTable& table) {
  for (std::size_t c = 0; c < table.numerical.size(); ++c) {
    auto& n = table.cleaning.numerical_replaced[table.spec.numerical_features[c]];
    for (auto& v : table.numerical[c])
      if (!std::isfinite(v)) {
        v = 0.0;
        ++n;
      }
  }
  for (std::size_t c = 0; c < table.categorical.size(); ++c) {
    auto& n = table.cleaning.categorical_missing[table.spec.categorical_features[c]];
    for (auto& v : table.categorical[c])
      if (detail::trim(v).empty()) {
        v = kMissingLevel;
        ++n;
      }
  }
}

inline FlowTable load_table(const std::string& path, const DatasetSpec& spec, char delim = ',') {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open data file '" + path + "'");
  std::vector<std::string> header;
  if (!csv::read_record(in, delim, header)) throw IoError("data file '" + path + "' is empty");
  for (auto& h : header) h = std::string(detail::trim(h));
  validate_against_header(spec, header);

  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < header.size(); ++i) index.emplace(header[i], i);
  std::vector<std::size_t> num_idx, cat_idx;
  for (const auto& c : spec.numerical_features) num_idx.push_back(index.at(c));
  for (const auto& c : spec.categorical_features) cat_idx.push_back(index.at(c));
  const std::size_t class_idx = index.at(spec.class_column);

  FlowTable table;
  table.spec = spec;
  table.numerical.resize(num_idx.size());
  table.categorical.resize(cat_idx.size());
  std::vector<std::string> fields;
  static const std::string empty;
  std::size_t row = 0;
  while (csv::read_record(in, delim, fields)) {
    if (fields.size() == 1 && detail::trim(fields[0]).empty()) continue;
    auto field = [&](std::size_t i) -> const std::string& {
      return i < fields.size() ? fields[i] : empty;
    };
    for (std::size_t c = 0; c < num_idx.size(); ++c)
      table.numerical[c].push_back(detail::parse_number(field(num_idx[c])));
    for (std::size_t c = 0; c < cat_idx.size(); ++c)
      table.categorical[c].push_back(std::string(detail::trim(field(cat_idx[c]))));
    table.classes.push_back(std::string(detail::trim(field(class_idx))));
    table.source_rows.push_back(row++);
  }
  if (row == 0) throw ValidationError("data file '" + path + "' has no data rows");
  clean_table(table);
  return table;
}

/// Writes the spec's declared columns (categorical, numerical, class).
inline void write_table(const FlowTable& table, const std::string& path, char delim = ',') {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write data file '" + path + "'");
  const auto cols = table.spec.declared_columns();
  for (std::size_t i = 0; i < cols.size(); ++i)
    out << (i ? std::string(1, delim) : "") << csv::escape(cols[i], delim);
  out << '\n';
  for (std::size_t r = 0; r < table.row_count(); ++r) {
    for (std::size_t c = 0; c < table.categorical.size(); ++c)
      out << csv::escape(table.categorical[c][r], delim) << delim;
    for (std::size_t c = 0; c < table.numerical.size(); ++c)
      out << detail::format_number(table.numerical[c][r]) << delim;
    out << csv::escape(table.classes[r], delim) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Splitting

enum class SplitMode { TailEval, HeadEval, Stratified };

struct SplitConfig {
  SplitMode mode = SplitMode::TailEval;
  double eval_fraction = 0.10;
};

struct SplitResult {
  FlowTable train;
  FlowTable eval;
};

/// Row indices (train, eval) for a split; both ascending.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    const FlowTable& table, const SplitConfig& cfg) {
  if (!(cfg.eval_fraction > 0.0 && cfg.eval_fraction < 1.0))
    throw ValidationError("eval_fraction must lie in (0, 1)");
  const std::size_t n = table.row_count();
  if (n < 10) throw ValidationError("split needs at least 10 rows");
  const auto n_eval = static_cast<std::size_t>(std::llround(cfg.eval_fraction * double(n)));

  std::vector<std::size_t> train, eval;
  switch (cfg.mode) {
    case SplitMode::TailEval:
      for (std::size_t r = 0; r < n; ++r) (r < n - n_eval ? train : eval).push_back(r);
      break;
    case SplitMode::HeadEval:
      for (std::size_t r = 0; r < n; ++r) (r < n_eval ? eval : train).push_back(r);
      break;
    case SplitMode::Stratified: {
      // Holds out the most recent rows of each class in proportion.
      const std::size_t mal = table.malicious_count();
      const std::size_t ben = n - mal;
      auto mal_eval = static_cast<std::size_t>(std::llround(cfg.eval_fraction * double(mal)));
      mal_eval = std::min({mal_eval, mal, n_eval});
      std::size_t ben_eval = n_eval - mal_eval;
      if (ben_eval > ben) {
        mal_eval += ben_eval - ben;
        ben_eval = ben;
      }
      std::vector<bool> in_eval(n, false);
      std::size_t need_mal = mal_eval, need_ben = ben_eval;
      for (std::size_t r = n; r-- > 0;) {
        auto& need = table.is_malicious(r) ? need_mal : need_ben;
        if (need > 0) {
          in_eval[r] = true;
          --need;
        }
      }
      for (std::size_t r = 0; r < n; ++r) (in_eval[r] ? eval : train).push_back(r);
      break;
    }
  }
  return {std::move(train), std::move(eval)};
}

inline SplitResult split(const FlowTable& table, const SplitConfig& cfg) {
  auto [train, eval] = split_indices(table, cfg);
  return {table.subset(train), table.subset(eval)};
}

// ---------------------------------------------------------------------------
// Windows

/// Dense row-major [rows, width] matrix of preprocessed features.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t width = 0;
  std::vector<float> values;

  std::span<const float> row(std::size_t r) const { return {values.data() + r * width, width}; }
  float at(std::size_t r, std::size_t c) const { return values[r * width + c]; }
};

/// Per-row binary labels: 1 iff the row's class differs from the benign label.
inline std::vector<std::uint8_t> row_labels(const FlowTable& table) {
  std::vector<std::uint8_t> out(table.row_count());
  for (std::size_t r = 0; r < out.size(); ++r) out[r] = table.is_malicious(r) ? 1 : 0;
  return out;
}

inline std::size_t window_count(std::size_t rows, std::size_t window, std::size_t stride) {
  if (window == 0 || stride == 0) throw ValidationError("window and stride must be positive");
  if (window > rows)
    throw ValidationError("window length " + std::to_string(window) + " exceeds " +
                          std::to_string(rows) + " rows");
  return (rows - window) / stride + 1;
}

/// First row of every window, ascending.
inline std::vector<std::size_t> window_starts(std::size_t rows, std::size_t window,
                                              std::size_t stride = 1) {
  std::vector<std::size_t> out(window_count(rows, window, stride));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = i * stride;
  return out;
}

/// A batch of windows, features laid out [batch, window, width].
struct WindowBatch {
  std::size_t batch = 0;
  std::size_t window = 0;
  std::size_t width = 0;
  std::vector<float> features;
  std::vector<std::uint8_t> labels;   ///< label of each window's final row
  std::vector<std::size_t> end_rows;  ///< table row of each window's final flow
};

/// The windows of one table part. Windows are contiguous runs of `window`
/// rows taken from a single part, so none crosses a split boundary.
class WindowSet {
 public:
  WindowSet() = default;
  WindowSet(FeatureMatrix matrix, std::vector<std::uint8_t> labels, std::size_t window,
            std::size_t stride = 1)
      : matrix_(std::move(matrix)), labels_(std::move(labels)), window_(window) {
    if (labels_.size() != matrix_.rows) throw ShapeError("labels/matrix row count mismatch");
    starts_ = window_starts(matrix_.rows, window, stride);
  }

  std::size_t size() const { return starts_.size(); }
  std::size_t window() const { return window_; }
  std::size_t width() const { return matrix_.width; }
  const FeatureMatrix& matrix() const { return matrix_; }
  std::span<const std::size_t> starts() const { return starts_; }

  std::uint8_t label(std::size_t i) const { return labels_[starts_[i] + window_ - 1]; }

  WindowBatch gather(std::span<const std::size_t> window_ids) const {
    WindowBatch b;
    b.batch = window_ids.size();
    b.window = window_;
    b.width = matrix_.width;
    b.features.resize(b.batch * window_ * b.width);
    float* dst = b.features.data();
    for (auto id : window_ids) {
      const std::size_t start = starts_[id];
      const float* src = matrix_.values.data() + start * b.width;
      dst = std::copy(src, src + window_ * b.width, dst);
      b.labels.push_back(labels_[start + window_ - 1]);
      b.end_rows.push_back(start + window_ - 1);
    }
    return b;
  }

  /// Sequential batches in window order (or the given permutation).
  std::vector<WindowBatch> batches(std::size_t batch_size,
                                   std::span<const std::size_t> order = {}) const {
    std::vector<std::size_t> ids;
    if (order.empty()) {
      ids.resize(size());
      std::iota(ids.begin(), ids.end(), std::size_t{0});
      order = ids;
    }
    std::vector<WindowBatch> out;
    for (std::size_t i = 0; i < order.size(); i += batch_size)
      out.push_back(gather(order.subspan(i, std::min(batch_size, order.size() - i))));
    return out;
  }

 private:
  FeatureMatrix matrix_;
  std::vector<std::uint8_t> labels_;
  std::size_t window_ = 1;
  std::vector<std::size_t> starts_;
};

}  // namespace flowformer

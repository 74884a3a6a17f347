#pragma once

// Grid search over model configurations, with repeats, a resumable results
// store and tabular export.
//
// A store is a directory holding runs.jsonl: one JSON record per completed
// (configuration, repeat), appended and flushed as each run finishes. A
// restart skips every pair already recorded, so an interrupted grid
// completes without duplicates. export_store() writes results.csv (one row
// per run) and summary.csv (best run per encoding and head).

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"

#include "flowformer/config.hpp"
#include "flowformer/error.hpp"
#include "flowformer/ingest.hpp"
#include "flowformer/metrics.hpp"
#include "flowformer/model.hpp"
#include "flowformer/preprocess.hpp"
#include "flowformer/schema.hpp"
#include "flowformer/trainer.hpp"

namespace flowformer {

enum class SearchMode { Full, PerAxis };

/// Axes default to the standard comparison grid. The
/// remaining model settings come from `base`.
struct SearchSpace {
  std::vector<BlockKind> blocks{BlockKind::Encoder, BlockKind::Decoder};
  std::vector<std::size_t> layers{2, 4, 6, 8};
  std::vector<std::size_t> ff_dims{128, 256, 512};
  std::vector<std::size_t> heads{2, 4, 6, 8, 12};
  std::vector<double> learning_rates{0.01, 0.001, 0.0005, 0.0001, 0.00001};
  std::vector<EncodingKind> encodings{EncodingKind::RecordProjection};
  std::vector<HeadKind> head_kinds{HeadKind::LastToken};
  ModelConfig base;
  SearchMode mode = SearchMode::Full;

  /// A space containing exactly `cfg`.
  static SearchSpace single(const ModelConfig& cfg) {
    SearchSpace s;
    s.base = cfg;
    s.blocks = {cfg.transformer.block};
    s.layers = {cfg.transformer.layers};
    s.ff_dims = {cfg.transformer.ff_dim};
    s.heads = {cfg.transformer.heads};
    s.learning_rates = {cfg.learning_rate};
    s.encodings = {cfg.encoder.kind};
    s.head_kinds = {cfg.head.kind};
    return s;
  }
};

struct Expansion {
  std::vector<ModelConfig> configs;
  std::vector<std::string> filtered;  ///< one line per dropped combination
  std::size_t before_filtering = 0;
};

/// Resolved transformer width of a config, or 0 when not yet known.
using WidthResolver = std::function<std::size_t(const ModelConfig&)>;

/// Width known without data: record-level kinds or an explicit d_model.
inline std::size_t static_width(const ModelConfig& c) {
  if (c.transformer.d_model) return c.transformer.d_model;
  if (is_record_level(c.encoder.kind)) return c.encoder.d_model ? c.encoder.d_model : kDefaultRecordDim;
  return 0;
}

/// Configurations in lexicographic order over the axes as declared (block
/// varies slowest, head kind fastest). Combinations whose width is not
/// divisible by the head count are dropped and described in `filtered`.
inline Expansion expand(const SearchSpace& s, const WidthResolver& width = static_width) {
  if (s.blocks.empty() || s.layers.empty() || s.ff_dims.empty() || s.heads.empty() ||
      s.learning_rates.empty() || s.encodings.empty() || s.head_kinds.empty())
    throw ValidationError("every search axis needs at least one value");

  auto make = [&](std::size_t b, std::size_t l, std::size_t f, std::size_t h, std::size_t r, std::size_t e,
                  std::size_t k) {
    ModelConfig c = s.base;
    c.transformer.block = s.blocks[b];
    c.transformer.layers = s.layers[l];
    c.transformer.ff_dim = s.ff_dims[f];
    c.transformer.heads = s.heads[h];
    c.learning_rate = s.learning_rates[r];
    c.encoder.kind = s.encodings[e];
    c.head.kind = s.head_kinds[k];
    return c;
  };

  std::vector<ModelConfig> all;
  if (s.mode == SearchMode::Full) {
    for (std::size_t b = 0; b < s.blocks.size(); ++b)
      for (std::size_t l = 0; l < s.layers.size(); ++l)
        for (std::size_t f = 0; f < s.ff_dims.size(); ++f)
          for (std::size_t h = 0; h < s.heads.size(); ++h)
            for (std::size_t r = 0; r < s.learning_rates.size(); ++r)
              for (std::size_t e = 0; e < s.encodings.size(); ++e)
                for (std::size_t k = 0; k < s.head_kinds.size(); ++k) all.push_back(make(b, l, f, h, r, e, k));
  } else {
    // Each axis swept alone; the others stay at their first value.
    const std::array<std::size_t, 7> sizes{s.blocks.size(),         s.layers.size(),    s.ff_dims.size(),
                                           s.heads.size(),          s.learning_rates.size(),
                                           s.encodings.size(),      s.head_kinds.size()};
    std::set<std::string> seen;
    for (std::size_t axis = 0; axis < sizes.size(); ++axis)
      for (std::size_t v = 0; v < sizes[axis]; ++v) {
        std::array<std::size_t, 7> at{};
        at[axis] = v;
        auto c = make(at[0], at[1], at[2], at[3], at[4], at[5], at[6]);
        if (seen.insert(config_key(c)).second) all.push_back(c);
      }
  }

  Expansion out;
  out.before_filtering = all.size();
  for (auto& c : all) {
    const std::size_t d = width(c);
    if (d != 0 && c.transformer.heads != 0 && d % c.transformer.heads != 0) {
      out.filtered.push_back("skipped " + config_key(c) + ": d_model " + std::to_string(d) +
                             " is not divisible by " + std::to_string(c.transformer.heads) + " heads");
      continue;
    }
    out.configs.push_back(std::move(c));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Experiment documents

struct TimingSettings {
  bool enabled = true;
  std::size_t inference_batches = 50;
  std::size_t inference_batch_size = 128;
};

/// Everything a grid (or single run) needs besides the data.
struct Experiment {
  SearchSpace space;
  std::size_t repeats = 3;
  std::uint64_t seed = 0;
  std::size_t levels = kDefaultLevels;
  SplitConfig split;
  TrainProtocol protocol;
  TimingSettings timing;
};

namespace detail {

template <class E>
std::vector<E> parse_enum_list(const nlohmann::json& j, E (*parse)(const std::string&), const char* key) {
  if (!j.is_array()) throw ValidationError(std::string("axis '") + key + "' must be a list");
  std::vector<E> out;
  for (const auto& v : j) out.push_back(parse(v.get<std::string>()));
  return out;
}

inline void apply_common(const nlohmann::json& j, Experiment& e) {
  read_if(j, "repeats", e.repeats, "experiment");
  read_if(j, "seed", e.seed, "experiment");
  read_if(j, "levels", e.levels, "experiment");
  if (j.contains("split")) e.split = split_from_json(j.at("split"));
  if (j.contains("protocol")) e.protocol = protocol_from_json(j.at("protocol"));
  if (j.contains("timing")) {
    const auto& t = j.at("timing");
    reject_unknown_keys(t, {"enabled", "inference_batches", "inference_batch_size"}, "timing");
    read_if(t, "enabled", e.timing.enabled, "timing");
    read_if(t, "inference_batches", e.timing.inference_batches, "timing");
    read_if(t, "inference_batch_size", e.timing.inference_batch_size, "timing");
  }
  if (e.repeats == 0) throw ValidationError("repeats must be positive");
}

}  // namespace detail

/// A single-configuration experiment: {"model": {...}, "seed", "repeats",
/// "levels", "split", "protocol", "timing"}. Repeats default to 1.
inline Experiment run_experiment_from_json(const nlohmann::json& j) {
  detail::reject_unknown_keys(j, {"model", "repeats", "seed", "levels", "split", "protocol", "timing"},
                              "experiment");
  Experiment e;
  e.repeats = 1;
  ModelConfig m;
  if (j.contains("model")) m = model_config_from_json(j.at("model"));
  detail::apply_common(j, e);
  e.space = SearchSpace::single(m);
  return e;
}

/// A grid document: run settings plus {"base": {...}, "axes": {...},
/// "mode": "full" | "per-axis"}. Absent axes keep the default grid.
inline Experiment grid_experiment_from_json(const nlohmann::json& j) {
  detail::reject_unknown_keys(
      j, {"base", "axes", "mode", "repeats", "seed", "levels", "split", "protocol", "timing"}, "grid");
  Experiment e;
  if (j.contains("base")) e.space.base = model_config_from_json(j.at("base"));
  if (j.contains("mode")) {
    const auto m = j.at("mode").get<std::string>();
    if (m == "full") e.space.mode = SearchMode::Full;
    else if (m == "per-axis") e.space.mode = SearchMode::PerAxis;
    else throw ValidationError("unknown grid mode '" + m + "' (expected full or per-axis)");
  }
  if (j.contains("axes")) {
    const auto& a = j.at("axes");
    detail::reject_unknown_keys(a, {"block", "layers", "ff_dim", "heads", "learning_rate", "encoding", "head"},
                                "axes");
    if (a.contains("block")) e.space.blocks = detail::parse_enum_list(a.at("block"), parse_block, "block");
    if (a.contains("encoding"))
      e.space.encodings = detail::parse_enum_list(a.at("encoding"), parse_encoding, "encoding");
    if (a.contains("head")) e.space.head_kinds = detail::parse_enum_list(a.at("head"), parse_head, "head");
    detail::read_if(a, "layers", e.space.layers, "axes");
    detail::read_if(a, "ff_dim", e.space.ff_dims, "axes");
    detail::read_if(a, "heads", e.space.heads, "axes");
    detail::read_if(a, "learning_rate", e.space.learning_rates, "axes");
  }
  detail::apply_common(j, e);
  return e;
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Run records

struct RunRecord {
  std::size_t config_index = 0;
  std::size_t repeat = 0;
  std::uint64_t seed = 0;
  ModelConfig config;  ///< as resolved for the run
  std::string key;     ///< config_key of the configuration as expanded
  RunStatus status = RunStatus::Ok;
  std::string failure;
  std::size_t parameter_count = 0;
  Metrics metrics;
  double train_flows_per_sec = 0;
  double infer_flows_per_sec = 0;
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  std::vector<double> train_loss;
  std::vector<double> monitor_loss;
};

inline nlohmann::json to_json(const RunRecord& r) {
  return {{"config_index", r.config_index},
          {"repeat", r.repeat},
          {"seed", r.seed},
          {"key", r.key},
          {"config", to_json(r.config)},
          {"status", to_string(r.status)},
          {"failure", r.failure},
          {"parameter_count", r.parameter_count},
          {"tp", r.metrics.tp},
          {"tn", r.metrics.tn},
          {"fp", r.metrics.fp},
          {"fn", r.metrics.fn},
          {"train_flows_per_sec", r.train_flows_per_sec},
          {"infer_flows_per_sec", r.infer_flows_per_sec},
          {"epochs_run", r.epochs_run},
          {"best_epoch", r.best_epoch},
          {"train_loss", r.train_loss},
          {"monitor_loss", r.monitor_loss}};
}

inline RunRecord run_record_from_json(const nlohmann::json& j) {
  RunRecord r;
  r.config_index = j.at("config_index").get<std::size_t>();
  r.repeat = j.at("repeat").get<std::size_t>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.key = j.at("key").get<std::string>();
  r.config = model_config_from_json(j.at("config"));
  r.config.seed = r.seed;
  r.status = j.at("status").get<std::string>() == "ok" ? RunStatus::Ok : RunStatus::Diverged;
  r.failure = j.at("failure").get<std::string>();
  r.parameter_count = j.at("parameter_count").get<std::size_t>();
  r.metrics.tp = j.at("tp").get<std::uint64_t>();
  r.metrics.tn = j.at("tn").get<std::uint64_t>();
  r.metrics.fp = j.at("fp").get<std::uint64_t>();
  r.metrics.fn = j.at("fn").get<std::uint64_t>();
  r.train_flows_per_sec = j.at("train_flows_per_sec").get<double>();
  r.infer_flows_per_sec = j.at("infer_flows_per_sec").get<double>();
  r.epochs_run = j.at("epochs_run").get<std::size_t>();
  r.best_epoch = j.at("best_epoch").get<std::size_t>();
  r.train_loss = j.at("train_loss").get<std::vector<double>>();
  r.monitor_loss = j.at("monitor_loss").get<std::vector<double>>();
  return r;
}

inline const std::string kRunsFile = "runs.jsonl";

/// Reads every complete record. A final line cut short by an interrupted
/// write is discarded and truncated away so later appends stay well formed.
inline std::vector<RunRecord> read_store(const std::string& dir) {
  const auto path = std::filesystem::path(dir) / kRunsFile;
  std::vector<RunRecord> out;
  if (!std::filesystem::exists(path)) return out;
  std::ifstream in(path, std::ios::binary);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();

  std::size_t pos = 0, good_end = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    ++line_no;
    if (nl == std::string::npos) break;  // unterminated tail: an interrupted append
    const auto line = std::string_view(text).substr(pos, nl - pos);
    if (!line.empty()) {
      try {
        out.push_back(run_record_from_json(nlohmann::json::parse(line)));
      } catch (const std::exception& e) {
        throw ParseError(path.string() + ": corrupt record: " + e.what(), int(line_no));
      }
    }
    pos = nl + 1;
    good_end = pos;
  }
  if (good_end < text.size()) std::filesystem::resize_file(path, good_end);
  return out;
}

inline void append_record(const std::string& dir, const RunRecord& r) {
  std::filesystem::create_directories(dir);
  std::ofstream out(std::filesystem::path(dir) / kRunsFile, std::ios::binary | std::ios::app);
  if (!out) throw IoError("cannot append to store '" + dir + "'");
  out << to_json(r).dump() << '\n';
  out.flush();
  if (!out) throw IoError("write failed for store '" + dir + "'");
}

// ---------------------------------------------------------------------------
// Best-of selection

/// F1 ranking key: an absent F1 ranks below every defined one.
inline double f1_rank(const RunRecord& r) { return r.metrics.f1().value_or(-1.0); }

struct BestOf {
  std::string key;
  std::size_t config_index = 0;
  const RunRecord* best = nullptr;  ///< highest-F1 ok repeat, or a diverged one if none is ok
  std::size_t repeats = 0;
  std::size_t ok_repeats = 0;

  RunStatus status() const { return ok_repeats ? RunStatus::Ok : RunStatus::Diverged; }
};

/// One entry per configuration, ordered by config index. Ties keep the
/// lowest repeat index.
inline std::vector<BestOf> best_of(const std::vector<RunRecord>& records) {
  std::map<std::pair<std::size_t, std::string>, BestOf> by;
  for (const auto& r : records) {
    auto& b = by[{r.config_index, r.key}];
    b.key = r.key;
    b.config_index = r.config_index;
    ++b.repeats;
    if (r.status != RunStatus::Ok) {
      if (!b.best) b.best = &r;
      continue;
    }
    ++b.ok_repeats;
    if (!b.best || b.best->status != RunStatus::Ok || f1_rank(r) > f1_rank(*b.best) ||
        (f1_rank(r) == f1_rank(*b.best) && r.repeat < b.best->repeat))
      b.best = &r;
  }
  std::vector<BestOf> out;
  for (auto& [k, b] : by) out.push_back(b);
  return out;
}

// ---------------------------------------------------------------------------
// Running

struct GridOptions {
  /// Stop after this many newly completed runs (0: no limit).
  std::size_t max_new_runs = 0;
  std::ostream* log = nullptr;
};

struct GridOutcome {
  std::vector<RunRecord> records;  ///< whole store, in store order
  std::size_t new_runs = 0;
  std::size_t skipped = 0;
  Expansion expansion;

  bool all_diverged() const {
    return !records.empty() && std::all_of(records.begin(), records.end(),
                                           [](const RunRecord& r) { return r.status != RunStatus::Ok; });
  }
};

/// Data prepared once per categorical format.
struct PreparedData {
  PreprocessorState state;
  FeatureMatrix train;
  FeatureMatrix eval;
};

/// Trains, evaluates and times one configuration on prepared data.
inline RunRecord execute_run(const ModelConfig& cfg, const PreparedData& data,
                             const std::vector<std::uint8_t>& train_labels,
                             const std::vector<std::uint8_t>& eval_labels, const Experiment& exp) {
  RunRecord r;
  r.seed = cfg.seed;
  Model<float> model(cfg, data.state);
  r.config = model.config();
  r.parameter_count = model.parameter_count();

  const WindowSet train_w(data.train, train_labels, cfg.window);
  const WindowSet eval_w(data.eval, eval_labels, cfg.window);
  auto hist = train(model, train_w, exp.protocol);
  r.status = hist.status;
  r.failure = hist.failure;
  r.epochs_run = hist.epochs_run();
  r.best_epoch = hist.best_epoch;
  r.train_loss = hist.train_loss;
  r.monitor_loss = hist.monitor_loss;
  if (hist.status != RunStatus::Ok) return r;

  r.metrics = evaluate(model, eval_w);
  if (exp.timing.enabled) {
    if (hist.batch_seconds.size() >= 2) r.train_flows_per_sec = training_throughput(hist);
    const std::size_t bs = std::min(exp.timing.inference_batch_size, eval_w.size());
    r.infer_flows_per_sec =
        measure_inference_throughput(model, eval_w, bs, nn::derive_seed(cfg.seed, {3}),
                                     exp.timing.inference_batches)
            .flows_per_sec;
  }
  return r;
}

/// Runs every (configuration, repeat) of `exp` not already in the store.
/// Run seeds derive from the experiment seed, the configuration index and
/// the repeat index.
inline GridOutcome run_grid(const Experiment& exp, const FlowTable& table, const std::string& store_dir,
                            const GridOptions& opt = {}) {
  const auto parts = split(table, exp.split);
  const auto train_labels = row_labels(parts.train);
  const auto eval_labels = row_labels(parts.eval);

  std::map<CategoricalFormat, PreparedData> prepared;
  auto data_for = [&](EncodingKind kind) -> const PreparedData& {
    const auto fmt = required_format(kind);
    auto it = prepared.find(fmt);
    if (it == prepared.end()) {
      PreparedData d;
      d.state = fit(parts.train, exp.levels, fmt);
      d.train = transform(parts.train, d.state);
      d.eval = transform(parts.eval, d.state);
      it = prepared.emplace(fmt, std::move(d)).first;
    }
    return it->second;
  };

  GridOutcome out;
  out.expansion = expand(exp.space, [&](const ModelConfig& c) -> std::size_t {
    try {
      return transformer_width(c, data_for(c.encoder.kind).state);
    } catch (const ValidationError&) {
      return std::size_t{0};  // width mismatch; reported when the run is built
    }
  });
  if (opt.log)
    for (const auto& line : out.expansion.filtered) *opt.log << line << '\n';

  out.records = read_store(store_dir);
  std::set<std::pair<std::string, std::size_t>> done;
  for (const auto& r : out.records) done.insert({r.key, r.repeat});

  const auto& configs = out.expansion.configs;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    const auto key = config_key(configs[i]);
    for (std::size_t rep = 0; rep < exp.repeats; ++rep) {
      if (done.count({key, rep})) {
        ++out.skipped;
        continue;
      }
      if (opt.max_new_runs && out.new_runs >= opt.max_new_runs) return out;
      ModelConfig cfg = configs[i];
      cfg.seed = nn::derive_seed(exp.seed, {i, rep});
      auto rec = execute_run(cfg, data_for(cfg.encoder.kind), train_labels, eval_labels, exp);
      rec.config_index = i;
      rec.repeat = rep;
      rec.key = key;
      append_record(store_dir, rec);
      if (opt.log) {
        *opt.log << "config " << i << " repeat " << rep << ": " << to_string(rec.status);
        if (auto f1 = rec.metrics.f1(); f1 && rec.status == RunStatus::Ok) *opt.log << " f1=" << *f1;
        *opt.log << " epochs=" << rec.epochs_run << '\n';
      }
      out.records.push_back(std::move(rec));
      ++out.new_runs;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Export

namespace detail {

inline std::string num(double v) { return format_number(v); }
inline std::string num(const std::optional<double>& v) { return v ? format_number(*v) : ""; }

inline std::string join(const std::vector<std::string>& cells) {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? "," : "") + csv::escape(cells[i], ',');
  return out + "\n";
}

}  // namespace detail

inline const std::vector<std::string> kResultColumns{
    "config_index",      "repeat",          "seed",          "encoding",          "head",
    "block",             "layers",          "d_model",       "heads",             "ff_dim",
    "dropout",           "positional",      "window",        "learning_rate",     "batch_size",
    "parameter_count",   "tp",              "tn",            "fp",                "fn",
    "f1",                "detection_rate",  "false_alarm_rate", "train_flows_per_sec",
    "infer_flows_per_sec", "epochs_run",    "best_epoch",    "status"};

inline const std::vector<std::string> kTimingColumns{"train_flows_per_sec", "infer_flows_per_sec"};

inline std::vector<std::string> result_row(const RunRecord& r) {
  const auto& c = r.config;
  const bool ok = r.status == RunStatus::Ok;
  return {std::to_string(r.config_index),
          std::to_string(r.repeat),
          std::to_string(r.seed),
          to_string(c.encoder.kind),
          to_string(c.head.kind),
          to_string(c.transformer.block),
          std::to_string(c.transformer.layers),
          std::to_string(c.transformer.d_model),
          std::to_string(c.transformer.heads),
          std::to_string(c.transformer.ff_dim),
          detail::num(c.transformer.dropout),
          to_string(c.transformer.positional),
          std::to_string(c.window),
          detail::num(c.learning_rate),
          std::to_string(c.batch_size),
          std::to_string(r.parameter_count),
          ok ? std::to_string(r.metrics.tp) : "",
          ok ? std::to_string(r.metrics.tn) : "",
          ok ? std::to_string(r.metrics.fp) : "",
          ok ? std::to_string(r.metrics.fn) : "",
          ok ? detail::num(r.metrics.f1()) : "",
          ok ? detail::num(r.metrics.detection_rate()) : "",
          ok ? detail::num(r.metrics.false_alarm_rate()) : "",
          ok ? detail::num(r.train_flows_per_sec) : "",
          ok ? detail::num(r.infer_flows_per_sec) : "",
          std::to_string(r.epochs_run),
          std::to_string(r.best_epoch),
          to_string(r.status)};
}

inline const std::vector<std::string> kSummaryColumns{
    "encoding", "head", "parameter_count", "f1", "false_alarm_rate", "detection_rate",
    "train_flows_per_sec", "infer_flows_per_sec", "configs", "best_config_index", "status"};

/// Best configuration per (encoding, head) pair present in the store,
/// ordered by encoding then head.
inline std::vector<std::vector<std::string>> summary_rows(const std::vector<RunRecord>& records) {
  std::map<std::pair<EncodingKind, HeadKind>, std::vector<BestOf>> groups;
  for (const auto& b : best_of(records))
    groups[{b.best->config.encoder.kind, b.best->config.head.kind}].push_back(b);

  std::vector<std::vector<std::string>> rows;
  for (const auto& [group, entries] : groups) {
    const BestOf* top = nullptr;
    for (const auto& b : entries) {
      if (!top) { top = &b; continue; }
      const bool b_ok = b.status() == RunStatus::Ok, t_ok = top->status() == RunStatus::Ok;
      if ((b_ok && !t_ok) || (b_ok == t_ok && f1_rank(*b.best) > f1_rank(*top->best))) top = &b;
    }
    const auto& r = *top->best;
    const bool ok = top->status() == RunStatus::Ok;
    rows.push_back({to_string(group.first), to_string(group.second), std::to_string(r.parameter_count),
                    ok ? detail::num(r.metrics.f1()) : "", ok ? detail::num(r.metrics.false_alarm_rate()) : "",
                    ok ? detail::num(r.metrics.detection_rate()) : "",
                    ok ? detail::num(r.train_flows_per_sec) : "", ok ? detail::num(r.infer_flows_per_sec) : "",
                    std::to_string(entries.size()), std::to_string(top->config_index),
                    to_string(top->status())});
  }
  return rows;
}

struct ExportPaths {
  std::string results;
  std::string summary;
};

/// Writes results.csv (runs sorted by config index, then repeat) and
/// summary.csv into the store directory.
inline ExportPaths export_store(const std::string& dir) {
  auto records = read_store(dir);
  if (records.empty()) throw ValidationError("store '" + dir + "' holds no runs");
  std::sort(records.begin(), records.end(), [](const RunRecord& a, const RunRecord& b) {
    return std::tie(a.config_index, a.repeat) < std::tie(b.config_index, b.repeat);
  });

  ExportPaths paths{(std::filesystem::path(dir) / "results.csv").string(),
                    (std::filesystem::path(dir) / "summary.csv").string()};
  {
    std::ofstream out(paths.results, std::ios::binary);
    out << detail::join(kResultColumns);
    for (const auto& r : records) out << detail::join(result_row(r));
    if (!out) throw IoError("cannot write '" + paths.results + "'");
  }
  {
    std::ofstream out(paths.summary, std::ios::binary);
    out << detail::join(kSummaryColumns);
    for (const auto& row : summary_rows(records)) out << detail::join(row);
    if (!out) throw IoError("cannot write '" + paths.summary + "'");
  }
  return paths;
}

}  // namespace flowformer

#pragma once

// Seeded synthetic flow datasets with known ground truth.
//
// Every dataset shares a NetFlow-like layout: 8 categorical fields with
// long-tailed level frequencies (more than 32 levels each) and 30 integer
// counters. Tasks differ only in how the class column is derived:
//
//   LastFlowSeparable  malicious flows carry IN_BYTES far above any benign flow
//   MarkerAtLag(d)     row i is malicious iff TCP_FLAGS of row i - d is the
//                      marker level; markers are drawn independently, so every
//                      other marker occurrence is a distractor and a single
//                      flow carries no information about its own label
//   Noise              labels are independent of all features

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "flowformer/error.hpp"
#include "flowformer/ingest.hpp"
#include "flowformer/nn/random.hpp"
#include "flowformer/schema.hpp"

namespace flowformer::synth {

enum class Task { LastFlowSeparable, MarkerAtLag, Noise };

inline const std::string kMarkerField = "TCP_FLAGS";
inline const std::string kMarkerLevel = "MARK";
inline const std::string kSeparableField = "IN_BYTES";

struct Options {
  Task task = Task::LastFlowSeparable;
  std::size_t rows = 10000;
  std::uint64_t seed = 0;
  std::size_t lag = 4;            ///< MarkerAtLag only
  double positive_rate = 0.3;     ///< malicious prior (marker rate for MarkerAtLag)
  std::size_t min_window = 8;     ///< rows must be at least 10x this
};

inline DatasetSpec netflow_spec() {
  DatasetSpec s;
  s.name = "synthetic-netflow";
  s.categorical_features = {"PROTOCOL",         "L7_PROTO",    "TCP_FLAGS",   "CLIENT_TCP_FLAGS",
                            "SERVER_TCP_FLAGS", "L4_SRC_PORT", "L4_DST_PORT", "ICMP_TYPE"};
  s.numerical_features = {
      "IN_BYTES",                  "OUT_BYTES",
      "IN_PKTS",                   "OUT_PKTS",
      "FLOW_DURATION_MILLISECONDS", "DURATION_IN",
      "DURATION_OUT",              "MIN_TTL",
      "MAX_TTL",                   "LONGEST_FLOW_PKT",
      "SHORTEST_FLOW_PKT",         "MIN_IP_PKT_LEN",
      "MAX_IP_PKT_LEN",            "SRC_TO_DST_SECOND_BYTES",
      "DST_TO_SRC_SECOND_BYTES",   "RETRANSMITTED_IN_BYTES",
      "RETRANSMITTED_IN_PKTS",     "RETRANSMITTED_OUT_BYTES",
      "RETRANSMITTED_OUT_PKTS",    "SRC_TO_DST_AVG_THROUGHPUT",
      "DST_TO_SRC_AVG_THROUGHPUT", "NUM_PKTS_UP_TO_128_BYTES",
      "NUM_PKTS_128_TO_256_BYTES", "NUM_PKTS_256_TO_512_BYTES",
      "NUM_PKTS_512_TO_1024_BYTES", "NUM_PKTS_1024_TO_1514_BYTES",
      "TCP_WIN_MAX_IN",            "TCP_WIN_MAX_OUT",
      "DNS_QUERY_ID",              "FTP_COMMAND_RET_CODE"};
  s.class_column = "Label";
  s.benign_label = "Benign";
  return s;
}

inline const std::string kMaliciousLabel = "Attack";

struct Dataset {
  DatasetSpec spec;
  FlowTable table;
};

namespace detail {

inline constexpr std::size_t kLevelsPerField = 48;

/// Zipf(1) draw over `n` levels by inverse CDF.
inline std::size_t zipf(nn::Rng& rng, std::size_t n) {
  double h = 0;
  for (std::size_t k = 1; k <= n; ++k) h += 1.0 / double(k);
  double u = rng.uniform() * h;
  for (std::size_t k = 1; k <= n; ++k) {
    u -= 1.0 / double(k);
    if (u <= 0) return k - 1;
  }
  return n - 1;
}

inline std::string level_name(const std::string& field, std::size_t k) {
  return field + "_" + std::to_string(k);
}

}  // namespace detail

inline Dataset generate(const Options& opt) {
  if (opt.min_window == 0 || opt.rows < opt.min_window * 10)
    throw ValidationError("synthetic dataset needs at least " + std::to_string(opt.min_window * 10) +
                          " rows");
  if (!(opt.positive_rate > 0.0 && opt.positive_rate < 1.0))
    throw ValidationError("positive_rate must lie in (0, 1)");
  if (opt.task == Task::MarkerAtLag && (opt.lag == 0 || opt.lag >= opt.rows))
    throw ValidationError("marker lag must be positive and below the row count");

  Dataset ds;
  ds.spec = netflow_spec();
  auto& t = ds.table;
  t.spec = ds.spec;
  const std::size_t n = opt.rows;
  t.categorical.assign(ds.spec.categorical_features.size(), std::vector<std::string>(n));
  t.numerical.assign(ds.spec.numerical_features.size(), std::vector<double>(n));
  t.classes.assign(n, ds.spec.benign_label);
  t.source_rows.resize(n);

  nn::Rng rng(opt.seed);
  std::size_t marker_col = 0, bytes_col = 0;
  for (std::size_t c = 0; c < ds.spec.categorical_features.size(); ++c)
    if (ds.spec.categorical_features[c] == kMarkerField) marker_col = c;
  for (std::size_t c = 0; c < ds.spec.numerical_features.size(); ++c)
    if (ds.spec.numerical_features[c] == kSeparableField) bytes_col = c;

  std::vector<bool> marker(n, false);
  for (std::size_t r = 0; r < n; ++r) {
    t.source_rows[r] = r;
    if (opt.task == Task::MarkerAtLag) marker[r] = rng.bernoulli(opt.positive_rate);
    bool malicious = false;
    if (opt.task == Task::MarkerAtLag) malicious = r >= opt.lag && marker[r - opt.lag];
    else malicious = rng.bernoulli(opt.positive_rate);
    if (malicious) t.classes[r] = kMaliciousLabel;

    for (std::size_t c = 0; c < t.categorical.size(); ++c) {
      const auto& field = ds.spec.categorical_features[c];
      t.categorical[c][r] = (c == marker_col && marker[r])
                                ? kMarkerLevel
                                : detail::level_name(field, detail::zipf(rng, detail::kLevelsPerField));
    }
    for (std::size_t c = 0; c < t.numerical.size(); ++c) {
      // log-uniform integer counters over [1, 1e4]
      t.numerical[c][r] = std::floor(std::exp(rng.uniform(0.0, std::log(1e4))));
    }
    if (opt.task == Task::LastFlowSeparable && malicious)
      t.numerical[bytes_col][r] = std::floor(std::exp(rng.uniform(std::log(1e5), std::log(1e6))));
  }
  return ds;
}

/// Writes `spec.yaml` and `data.csv` into `dir`; returns their paths.
inline std::pair<std::string, std::string> write_dataset(const Dataset& ds, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const auto spec_path = (std::filesystem::path(dir) / "spec.yaml").string();
  const auto data_path = (std::filesystem::path(dir) / "data.csv").string();
  save_spec(ds.spec, spec_path);
  write_table(ds.table, data_path);
  return {spec_path, data_path};
}

inline Task parse_task(const std::string& name) {
  if (name == "last-flow-separable") return Task::LastFlowSeparable;
  if (name == "marker-at-lag") return Task::MarkerAtLag;
  if (name == "noise") return Task::Noise;
  throw ValidationError("unknown synthetic task '" + name +
                        "' (expected last-flow-separable, marker-at-lag or noise)");
}

}  // namespace flowformer::synth

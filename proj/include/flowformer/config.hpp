#pragma once

// Text names for the configuration enums and JSON (de)serialization of
// model, protocol and split settings. Parsing is strict: unknown keys and
// unknown names are validation errors; absent keys keep their defaults.

#include <array>
#include <set>
#include <string>
#include <utility>

#include "json.hpp"

#include "flowformer/error.hpp"
#include "flowformer/ingest.hpp"
#include "flowformer/model.hpp"
#include "flowformer/trainer.hpp"

namespace flowformer {

namespace detail {

template <class E, std::size_t N>
using NameTable = std::array<std::pair<E, const char*>, N>;

inline constexpr NameTable<EncodingKind, 6> kEncodingNames{{
    {EncodingKind::CategoricalLookup, "categorical-lookup"},
    {EncodingKind::CategoricalDense, "categorical-dense"},
    {EncodingKind::CategoricalProjection, "categorical-projection"},
    {EncodingKind::RecordDense, "record-dense"},
    {EncodingKind::RecordProjection, "record-projection"},
    {EncodingKind::NoEncoding, "none"},
}};

inline constexpr NameTable<HeadKind, 6> kHeadNames{{
    {HeadKind::LastToken, "last-token"},
    {HeadKind::Flatten, "flatten"},
    {HeadKind::GlobalAveragePooling, "global-average-pooling"},
    {HeadKind::FeaturewiseEmbedding, "featurewise-embedding"},
    {HeadKind::FeaturewiseProjection, "featurewise-projection"},
    {HeadKind::ClsToken, "cls-token"},
}};

inline constexpr NameTable<BlockKind, 2> kBlockNames{{
    {BlockKind::Encoder, "encoder"},
    {BlockKind::Decoder, "decoder"},
}};

inline constexpr NameTable<PositionalMode, 3> kPositionalNames{{
    {PositionalMode::Learned, "learned"},
    {PositionalMode::Sinusoidal, "sinusoidal"},
    {PositionalMode::None, "none"},
}};

inline constexpr NameTable<SplitMode, 3> kSplitNames{{
    {SplitMode::TailEval, "tail"},
    {SplitMode::HeadEval, "head"},
    {SplitMode::Stratified, "stratified"},
}};

template <class E, std::size_t N>
const char* name_of(const NameTable<E, N>& table, E value) {
  for (const auto& [e, n] : table)
    if (e == value) return n;
  throw ValidationError("unnamed enum value");
}

template <class E, std::size_t N>
E value_of(const NameTable<E, N>& table, const std::string& name, const char* what) {
  for (const auto& [e, n] : table)
    if (name == n) return e;
  std::string known;
  for (const auto& [e, n] : table) known += (known.empty() ? "" : ", ") + std::string(n);
  throw ValidationError("unknown " + std::string(what) + " '" + name + "' (expected one of: " + known + ")");
}

inline void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                                const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + " must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items())
    if (!ok.count(k)) throw ValidationError("unknown key '" + k + "' in " + where);
}

template <class V>
void read_if(const nlohmann::json& j, const char* key, V& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError("bad value for '" + std::string(key) + "' in " + where);
  }
}

}  // namespace detail

inline const char* to_string(EncodingKind k) { return detail::name_of(detail::kEncodingNames, k); }
inline const char* to_string(HeadKind k) { return detail::name_of(detail::kHeadNames, k); }
inline const char* to_string(BlockKind k) { return detail::name_of(detail::kBlockNames, k); }
inline const char* to_string(PositionalMode k) { return detail::name_of(detail::kPositionalNames, k); }
inline const char* to_string(SplitMode k) { return detail::name_of(detail::kSplitNames, k); }

inline EncodingKind parse_encoding(const std::string& s) {
  return detail::value_of(detail::kEncodingNames, s, "encoding");
}
inline HeadKind parse_head(const std::string& s) { return detail::value_of(detail::kHeadNames, s, "head"); }
inline BlockKind parse_block(const std::string& s) { return detail::value_of(detail::kBlockNames, s, "block"); }
inline PositionalMode parse_positional(const std::string& s) {
  return detail::value_of(detail::kPositionalNames, s, "positional mode");
}
inline SplitMode parse_split_mode(const std::string& s) {
  return detail::value_of(detail::kSplitNames, s, "split mode");
}

/// Seed excluded: runs of one configuration differ only by seed.
inline nlohmann::json to_json(const ModelConfig& c) {
  return {
      {"encoding", to_string(c.encoder.kind)},
      {"per_categorical_dim", c.encoder.per_categorical_dim},
      {"encoder_d_model", c.encoder.d_model},
      {"block", to_string(c.transformer.block)},
      {"layers", c.transformer.layers},
      {"d_model", c.transformer.d_model},
      {"heads", c.transformer.heads},
      {"ff_dim", c.transformer.ff_dim},
      {"dropout", c.transformer.dropout},
      {"positional", to_string(c.transformer.positional)},
      {"head", to_string(c.head.kind)},
      {"mlp_hidden", c.head.mlp_hidden},
      {"featurewise_per_feature", c.head.featurewise_per_feature},
      {"window", c.window},
      {"learning_rate", c.learning_rate},
      {"batch_size", c.batch_size},
  };
}

/// Reads keys present in `j` over `base`.
inline ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig c = {}) {
  const std::string where = "model";
  detail::reject_unknown_keys(j,
                              {"encoding", "per_categorical_dim", "encoder_d_model", "block", "layers",
                               "d_model", "heads", "ff_dim", "dropout", "positional", "head", "mlp_hidden",
                               "featurewise_per_feature", "window", "learning_rate", "batch_size", "preset"},
                              where);
  if (j.contains("preset")) {
    const auto p = j.at("preset").get<std::string>();
    if (p == "basic-encoder") c.transformer = presets::basic_encoder();
    else if (p == "basic-decoder") c.transformer = presets::basic_decoder();
    else if (p == "gpt") c.transformer = presets::gpt_shaped();
    else if (p == "bert") c.transformer = presets::bert_shaped();
    else throw ValidationError("unknown preset '" + p + "' (expected basic-encoder, basic-decoder, gpt, bert)");
  }
  if (j.contains("encoding")) c.encoder.kind = parse_encoding(j.at("encoding").get<std::string>());
  if (j.contains("block")) c.transformer.block = parse_block(j.at("block").get<std::string>());
  if (j.contains("positional")) c.transformer.positional = parse_positional(j.at("positional").get<std::string>());
  if (j.contains("head")) c.head.kind = parse_head(j.at("head").get<std::string>());
  detail::read_if(j, "per_categorical_dim", c.encoder.per_categorical_dim, where);
  detail::read_if(j, "encoder_d_model", c.encoder.d_model, where);
  detail::read_if(j, "layers", c.transformer.layers, where);
  detail::read_if(j, "d_model", c.transformer.d_model, where);
  detail::read_if(j, "heads", c.transformer.heads, where);
  detail::read_if(j, "ff_dim", c.transformer.ff_dim, where);
  detail::read_if(j, "dropout", c.transformer.dropout, where);
  detail::read_if(j, "mlp_hidden", c.head.mlp_hidden, where);
  detail::read_if(j, "featurewise_per_feature", c.head.featurewise_per_feature, where);
  detail::read_if(j, "window", c.window, where);
  detail::read_if(j, "learning_rate", c.learning_rate, where);
  detail::read_if(j, "batch_size", c.batch_size, where);
  return c;
}

inline nlohmann::json to_json(const TrainProtocol& p) {
  return {{"max_epochs", p.max_epochs},
          {"patience", p.patience},
          {"monitor_fraction", p.monitor_fraction},
          {"restore_best", p.restore_best}};
}

inline TrainProtocol protocol_from_json(const nlohmann::json& j) {
  TrainProtocol p;
  detail::reject_unknown_keys(j, {"max_epochs", "patience", "monitor_fraction", "restore_best"}, "protocol");
  detail::read_if(j, "max_epochs", p.max_epochs, "protocol");
  detail::read_if(j, "patience", p.patience, "protocol");
  detail::read_if(j, "monitor_fraction", p.monitor_fraction, "protocol");
  detail::read_if(j, "restore_best", p.restore_best, "protocol");
  return p;
}

inline nlohmann::json to_json(const SplitConfig& s) {
  return {{"mode", to_string(s.mode)}, {"eval_fraction", s.eval_fraction}};
}

inline SplitConfig split_from_json(const nlohmann::json& j) {
  SplitConfig s;
  detail::reject_unknown_keys(j, {"mode", "eval_fraction"}, "split");
  if (j.contains("mode")) s.mode = parse_split_mode(j.at("mode").get<std::string>());
  detail::read_if(j, "eval_fraction", s.eval_fraction, "split");
  return s;
}

/// Canonical text of a configuration; equal configurations (ignoring
/// seed) have equal keys.
inline std::string config_key(const ModelConfig& c) { return to_json(c).dump(); }

}  // namespace flowformer

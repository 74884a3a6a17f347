#pragma once

// Dataset spec: which columns of a tabular flow export are
// categorical, which are numerical, where the class lives and what the
// benign class is called.
//
// On-disk format (version 1), a YAML subset:
//
//   version: 1
//   name: nf-example
//   class_column: Label
//   benign_label: Benign
//   categorical_features: [PROTOCOL, L4_DST_PORT]
//   numerical_features:
//     - IN_BYTES
//     - OUT_BYTES
//
// Lists may be written inline or as block sequences. The class column is
// compared to benign_label as exact, case-sensitive text.

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "flowformer/error.hpp"

namespace flowformer {

enum class FeatureKind { Categorical, Numerical };

struct DatasetSpec {
  std::string name;
  std::vector<std::string> categorical_features;
  std::vector<std::string> numerical_features;
  std::string class_column;
  std::string benign_label;

  std::size_t feature_count() const {
    return categorical_features.size() + numerical_features.size();
  }

  /// Every column the spec requires from a data file, class column last.
  std::vector<std::string> declared_columns() const {
    std::vector<std::string> out = categorical_features;
    out.insert(out.end(), numerical_features.begin(), numerical_features.end());
    out.push_back(class_column);
    return out;
  }

  bool operator==(const DatasetSpec&) const = default;
};

inline constexpr int kSpecVersion = 1;

/// Throws ValidationError naming the first offending column.
inline void validate(const DatasetSpec& spec) {
  if (spec.class_column.empty()) throw ValidationError("class_column is empty");
  if (spec.categorical_features.empty() && spec.numerical_features.empty())
    throw ValidationError("spec declares no features");
  std::set<std::string> seen;
  auto check_list = [&](const std::vector<std::string>& list, const char* what) {
    for (const auto& col : list) {
      if (col.empty()) throw ValidationError(std::string("empty column name in ") + what);
      if (col == spec.class_column)
        throw ValidationError("class column '" + col + "' also listed in " + what);
      if (!seen.insert(col).second)
        throw ValidationError("column '" + col + "' declared more than once");
    }
  };
  check_list(spec.categorical_features, "categorical_features");
  check_list(spec.numerical_features, "numerical_features");
}

namespace detail {

inline int yaml_line(const YAML::Node& node) { return node.Mark().line + 1; }

inline std::vector<std::string> read_list(const YAML::Node& node, const std::string& key) {
  std::vector<std::string> out;
  if (node.IsNull()) return out;
  if (!node.IsSequence())
    throw ParseError("'" + key + "' must be a list", yaml_line(node));
  for (const auto& item : node) {
    if (!item.IsScalar())
      throw ParseError("'" + key + "' entries must be plain column names", yaml_line(item));
    out.push_back(item.as<std::string>());
  }
  return out;
}

}  // namespace detail

inline DatasetSpec parse_spec(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ParseError(e.msg, e.mark.line + 1);
  }
  if (!root.IsMap()) throw ParseError("spec document must be a key/value mapping", 1);

  DatasetSpec spec;
  bool have_version = false;
  std::unordered_set<std::string> have;
  for (const auto& kv : root) {
    const auto key = kv.first.as<std::string>();
    const auto& value = kv.second;
    const int line = detail::yaml_line(kv.first);
    if (!have.insert(key).second) throw ParseError("duplicate key '" + key + "'", line);
    auto scalar = [&]() {
      if (!value.IsScalar()) throw ParseError("'" + key + "' must be a single value", line);
      return value.as<std::string>();
    };
    if (key == "version") {
      if (scalar() != std::to_string(kSpecVersion))
        throw ParseError("unsupported spec version '" + value.as<std::string>() + "'", line);
      have_version = true;
    } else if (key == "name") {
      spec.name = scalar();
    } else if (key == "class_column") {
      spec.class_column = scalar();
    } else if (key == "benign_label") {
      spec.benign_label = scalar();
    } else if (key == "categorical_features") {
      spec.categorical_features = detail::read_list(value, key);
    } else if (key == "numerical_features") {
      spec.numerical_features = detail::read_list(value, key);
    } else {
      throw ParseError("unknown key '" + key + "'", line);
    }
  }
  if (!have_version) throw ParseError("missing 'version' field");
  for (const char* required : {"class_column", "benign_label"})
    if (!have.count(required)) throw ParseError(std::string("missing '") + required + "' field");
  validate(spec);
  return spec;
}

inline DatasetSpec load_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open spec file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_spec(ss.str());
}

inline std::string format_spec(const DatasetSpec& spec) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "version" << YAML::Value << kSpecVersion;
  out << YAML::Key << "name" << YAML::Value << spec.name;
  out << YAML::Key << "class_column" << YAML::Value << spec.class_column;
  out << YAML::Key << "benign_label" << YAML::Value << spec.benign_label;
  out << YAML::Key << "categorical_features" << YAML::Value << YAML::BeginSeq;
  for (const auto& c : spec.categorical_features) out << c;
  out << YAML::EndSeq;
  out << YAML::Key << "numerical_features" << YAML::Value << YAML::BeginSeq;
  for (const auto& c : spec.numerical_features) out << c;
  out << YAML::EndSeq;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

inline void save_spec(const DatasetSpec& spec, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write spec file '" + path + "'");
  out << format_spec(spec);
}

/// Succeeds iff every declared column is present in `header`. Extra header
/// columns are ignored; header order does not matter.
inline void validate_against_header(const DatasetSpec& spec,
                                    const std::vector<std::string>& header) {
  const std::unordered_set<std::string> present(header.begin(), header.end());
  std::vector<std::string> missing;
  for (const auto& col : spec.declared_columns())
    if (!present.count(col)) missing.push_back(col);
  if (missing.empty()) return;
  std::string msg = "data file is missing declared column(s): ";
  for (std::size_t i = 0; i < missing.size(); ++i) msg += (i ? ", " : "") + missing[i];
  throw ValidationError(msg);
}

}  // namespace flowformer

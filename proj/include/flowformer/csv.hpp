#pragma once

// Minimal delimiter-separated reader: first row is the header, double quotes
// enclose fields that contain the delimiter, "" is an escaped quote.

#include <istream>
#include <string>
#include <vector>

namespace flowformer::csv {

/// Splits one record. Returns false at end of input.
inline bool read_record(std::istream& in, char delim, std::vector<std::string>& fields) {
  fields.clear();
  std::string line;
  if (!std::getline(in, line)) return false;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0;; ++i) {
    if (i == line.size()) {
      if (quoted && std::getline(in, line)) {  // newline inside quotes
        field += '\n';
        i = static_cast<std::size_t>(-1);
        continue;
      }
      break;
    }
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delim) {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  fields.push_back(std::move(field));
  return true;
}

inline std::string escape(const std::string& field, char delim) {
  if (field.find_first_of(std::string{delim, '"', '\n'}) == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace flowformer::csv

#pragma once

// Binary detection metrics; malicious is the positive class. A rate whose
// denominator is zero is absent rather than 0 or NaN.

#include <cstdint>
#include <optional>
#include <span>

#include "flowformer/error.hpp"

namespace flowformer {

struct Metrics {
  std::uint64_t tp = 0, tn = 0, fp = 0, fn = 0;

  std::uint64_t total() const { return tp + tn + fp + fn; }

  std::optional<double> f1() const {
    const auto den = 2 * tp + fp + fn;
    if (den == 0) return std::nullopt;
    return 2.0 * double(tp) / double(den);
  }
  std::optional<double> detection_rate() const {
    if (tp + fn == 0) return std::nullopt;
    return double(tp) / double(tp + fn);
  }
  std::optional<double> false_alarm_rate() const {
    if (fp + tn == 0) return std::nullopt;
    return double(fp) / double(fp + tn);
  }

  void add(bool predicted, bool actual) {
    if (predicted) (actual ? tp : fp) += 1;
    else (actual ? fn : tn) += 1;
  }

  bool operator==(const Metrics&) const = default;
};

inline Metrics confusion(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> actual) {
  if (predicted.size() != actual.size())
    throw ShapeError("confusion: prediction/label count mismatch");
  Metrics m;
  for (std::size_t i = 0; i < predicted.size(); ++i) m.add(predicted[i] != 0, actual[i] != 0);
  return m;
}

}  // namespace flowformer

#pragma once

// Accuracy and macro-F1 over the three sentiment classes, computed from a
// confusion matrix so the two always agree with each other.

#include <array>
#include <cstdint>

#include "seqcsg/common.hpp"
#include "seqcsg/corpus.hpp"

namespace seqcsg {

struct MetricsReport {
  // confusion[gold][predicted]
  std::array<std::array<std::int64_t, kLabelCount>, kLabelCount> confusion{};

  void add(int gold, int predicted) {
    if (gold < 0 || gold >= kLabelCount || predicted < 0 ||
        predicted >= kLabelCount)
      throw ContractViolation("label outside the 3-class set");
    ++confusion[gold][predicted];
  }

  // Merging is associative and order-independent, so evaluation may be
  // sharded and reduced.
  MetricsReport& merge(const MetricsReport& other) {
    for (int g = 0; g < kLabelCount; ++g)
      for (int p = 0; p < kLabelCount; ++p)
        confusion[g][p] += other.confusion[g][p];
    return *this;
  }

  std::int64_t total() const {
    std::int64_t t = 0;
    for (const auto& row : confusion)
      for (auto v : row) t += v;
    return t;
  }

  double accuracy() const {
    std::int64_t t = total();
    if (t == 0) return 0.0;
    std::int64_t correct = 0;
    for (int c = 0; c < kLabelCount; ++c) correct += confusion[c][c];
    return static_cast<double>(correct) / static_cast<double>(t);
  }

  double precision(int c) const {
    std::int64_t predicted = 0;
    for (int g = 0; g < kLabelCount; ++g) predicted += confusion[g][c];
    if (predicted == 0) return 0.0;
    return static_cast<double>(confusion[c][c]) / static_cast<double>(predicted);
  }

  double recall(int c) const {
    std::int64_t gold = 0;
    for (int p = 0; p < kLabelCount; ++p) gold += confusion[c][p];
    if (gold == 0) return 0.0;
    return static_cast<double>(confusion[c][c]) / static_cast<double>(gold);
  }

  // Zero-denominator cases (no gold and no predicted instances) yield 0.
  // Expressed over raw counts (2tp / (2tp + fp + fn)), which equals the
  // harmonic mean of precision and recall but rounds only once.
  double f1(int c) const {
    std::int64_t tp = confusion[c][c];
    std::int64_t fp = 0, fn = 0;
    for (int o = 0; o < kLabelCount; ++o) {
      if (o == c) continue;
      fp += confusion[o][c];
      fn += confusion[c][o];
    }
    std::int64_t denom = 2 * tp + fp + fn;
    if (denom == 0) return 0.0;
    return 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
  }

  double macro_f1() const {
    double sum = 0.0;
    for (int c = 0; c < kLabelCount; ++c) sum += f1(c);
    return sum / kLabelCount;
  }
};

}  // namespace seqcsg

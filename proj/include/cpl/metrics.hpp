// Evaluation quantities: accuracy, label-estimation accuracy, set sizes,
// class frequency and confusion counts.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cpl/core.hpp"

namespace cpl {

/// C×C counts, rows = true class, columns = predicted class.
struct ConfusionMatrix {
  std::size_t c = 0;
  std::vector<std::uint64_t> counts;

  std::uint64_t operator()(std::size_t truth, std::size_t pred) const { return counts[truth * c + pred]; }
  bool operator==(const ConfusionMatrix&) const = default;
};

inline double top1_accuracy(std::span<const std::size_t> preds, std::span<const int> labels) {
  if (preds.empty()) throw ConfigError("top1_accuracy on empty input");
  if (preds.size() != labels.size()) throw ConfigError("prediction and label counts differ");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i)
    if (labels[i] >= 0 && preds[i] == static_cast<std::size_t>(labels[i])) ++hits;
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

struct LabelEstimation {
  double nonempty = 0.0;  // over instances with a nonempty set (primary)
  double all = 0.0;       // empty sets count as misses
};

/// Rate at which the true label lies in the candidate set. Instances without
/// ground truth are skipped.
inline LabelEstimation label_estimation_accuracy(const CandidateAssignment& assign,
                                                 std::span<const int> labels) {
  if (labels.size() != assign.n()) throw ConfigError("label count does not match assignment");
  std::size_t evaluated = 0, nonempty = 0, hits = 0;
  for (std::size_t i = 0; i < assign.n(); ++i) {
    if (labels[i] == kUnlabeled) continue;
    ++evaluated;
    const auto& s = assign.sets[i];
    if (s.empty()) continue;
    ++nonempty;
    if (std::binary_search(s.begin(), s.end(), static_cast<std::size_t>(labels[i]))) ++hits;
  }
  if (evaluated == 0) throw ConfigError("label_estimation_accuracy needs ground-truth labels");
  LabelEstimation out;
  out.nonempty = nonempty ? static_cast<double>(hits) / static_cast<double>(nonempty) : 0.0;
  out.all = static_cast<double>(hits) / static_cast<double>(evaluated);
  return out;
}

/// Mean |S_i| over nonempty sets.
inline double avg_candidate_size(const CandidateAssignment& assign) {
  std::size_t total = 0, nonempty = 0;
  for (const auto& s : assign.sets) {
    if (s.empty()) continue;
    total += s.size();
    ++nonempty;
  }
  if (nonempty == 0) throw Error("avg_candidate_size: every candidate set is empty");
  return static_cast<double>(total) / static_cast<double>(nonempty);
}

inline std::vector<std::uint64_t> class_frequency(const CandidateAssignment& assign) {
  std::vector<std::uint64_t> freq(assign.c, 0);
  for (const auto& s : assign.sets)
    for (auto c : s) ++freq[c];
  return freq;
}

/// max/min of a frequency vector; infinity when some class never appears.
inline double frequency_ratio(std::span<const std::uint64_t> freq) {
  if (freq.empty()) return 1.0;
  auto [lo, hi] = std::minmax_element(freq.begin(), freq.end());
  if (*lo == 0) return std::numeric_limits<double>::infinity();
  return static_cast<double>(*hi) / static_cast<double>(*lo);
}

inline ConfusionMatrix confusion(std::span<const std::size_t> preds, std::span<const int> labels,
                                 std::size_t classes) {
  if (preds.size() != labels.size()) throw ConfigError("prediction and label counts differ");
  ConfusionMatrix m{classes, std::vector<std::uint64_t>(classes * classes, 0)};
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes || preds[i] >= classes)
      throw ConfigError("confusion: label or prediction out of range");
    ++m.counts[static_cast<std::size_t>(labels[i]) * classes + preds[i]];
  }
  return m;
}

/// Accuracy per true class; classes with no instances report 0.
inline std::vector<double> per_class_accuracy(const ConfusionMatrix& m) {
  std::vector<double> acc(m.c, 0.0);
  for (std::size_t t = 0; t < m.c; ++t) {
    std::uint64_t row = 0;
    for (std::size_t p = 0; p < m.c; ++p) row += m(t, p);
    if (row) acc[t] = static_cast<double>(m(t, t)) / static_cast<double>(row);
  }
  return acc;
}

/// Accuracy over the instances whose true class is in `classes`.
inline double accuracy_on_classes(const ConfusionMatrix& m, std::span<const std::size_t> classes) {
  std::uint64_t hits = 0, total = 0;
  for (auto t : classes)
    for (std::size_t p = 0; p < m.c; ++p) {
      total += m(t, p);
      if (p == t) hits += m(t, p);
    }
  return total ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
}

/// Argmax class per row.
inline std::vector<std::size_t> argmax_rows(const Matrix& scores) {
  std::vector<std::size_t> out(scores.rows());
  for (std::size_t i = 0; i < scores.rows(); ++i) out[i] = argmax(scores.row(i));
  return out;
}

}  // namespace cpl

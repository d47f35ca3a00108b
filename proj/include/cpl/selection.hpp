// Candidate pseudolabel generation and class-wise top-K curriculum selection.
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "cpl/core.hpp"

namespace cpl {

/// Per-class inter-instance thresholds.
struct ClassThresholds {
  std::vector<double> values;
};

/// Nearest-rank position used by every quantile in this module:
/// min(floor(ratio * n), n - 1) on the ascending sort.
inline std::size_t quantile_index(double ratio, std::size_t n) {
  if (n == 0) throw ConfigError("quantile of empty vector");
  auto idx = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n)));
  return std::min(idx, n - 1);
}

inline double quantile(std::vector<double> values, double ratio) {
  auto k = quantile_index(ratio, values.size());
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k), values.end());
  return values[k];
}

/// Confidence threshold tau: the alpha-quantile of the row maxima.
inline double adaptive_threshold(const ConfidenceMatrix& conf, double alpha) {
  if (conf.n() == 0) throw ConfigError("adaptive_threshold on empty confidence matrix");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must be in [0,1]");
  return quantile(conf.row_max(), alpha);
}

/// Class indices ordered by descending confidence, ties to the lower index.
inline std::vector<std::size_t> descending_order(std::span<const double> row) {
  std::vector<std::size_t> order(row.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
  return order;
}

/// Smallest descending-confidence prefix whose mass reaches tau, returned
/// sorted by class index. Falls back to every class if rounding keeps the
/// running sum below tau.
inline std::vector<std::size_t> intra_select(std::span<const double> row, double tau) {
  auto order = descending_order(row);
  double mass = 0.0;
  std::size_t take = order.size();
  for (std::size_t k = 0; k < order.size(); ++k) {
    mass += row[order[k]];
    if (mass >= tau) {
      take = k + 1;
      break;
    }
  }
  std::vector<std::size_t> out(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take));
  std::sort(out.begin(), out.end());
  return out;
}

inline ClassThresholds inter_thresholds(const ConfidenceMatrix& conf, double beta) {
  if (conf.n() == 0) throw ConfigError("inter_thresholds on empty confidence matrix");
  if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("beta must be in [0,1]");
  ClassThresholds th;
  th.values.resize(conf.c());
  for (std::size_t c = 0; c < conf.c(); ++c) th.values[c] = quantile(conf.column(c), beta);
  return th;
}

/// Classes whose confidence for this instance is strictly above the class threshold.
inline std::vector<std::size_t> inter_select(std::size_t row_index, const ConfidenceMatrix& conf,
                                             const ClassThresholds& th) {
  std::vector<std::size_t> out;
  auto row = conf.row(row_index);
  for (std::size_t c = 0; c < row.size(); ++c)
    if (row[c] > th.values[c]) out.push_back(c);
  return out;
}

inline std::vector<std::size_t> intersect_sorted(std::span<const std::size_t> a,
                                                 std::span<const std::size_t> b) {
  std::vector<std::size_t> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

struct CandidateResult {
  double tau = 0.0;
  std::optional<ClassThresholds> thresholds;
  CandidateAssignment assignment;
};

/// Intra-instance sets, optional inter-instance sets, and their intersection.
inline CandidateResult generate_candidates_detailed(const ConfidenceMatrix& conf,
                                                    const SelectionParams& params) {
  params.validate();
  CandidateResult res;
  res.tau = adaptive_threshold(conf, params.alpha);
  if (params.beta) res.thresholds = inter_thresholds(conf, *params.beta);

  auto& a = res.assignment;
  a.c = conf.c();
  a.sets.resize(conf.n());
  a.intra_sets.resize(conf.n());
  if (params.beta) a.inter_sets.resize(conf.n());

  parallel_for(conf.n(), [&](std::size_t i) {
    a.intra_sets[i] = intra_select(conf.row(i), res.tau);
    if (res.thresholds) {
      a.inter_sets[i] = inter_select(i, conf, *res.thresholds);
      a.sets[i] = intersect_sorted(a.intra_sets[i], a.inter_sets[i]);
    } else {
      a.sets[i] = a.intra_sets[i];
    }
  });
  return res;
}

inline CandidateAssignment generate_candidates(const ConfidenceMatrix& conf,
                                               const SelectionParams& params) {
  return generate_candidates_detailed(conf, params).assignment;
}

/// Drops instances whose candidate set is empty.
inline TrainingSet filter_nonempty(const CandidateAssignment& assign) {
  TrainingSet ts;
  for (std::size_t i = 0; i < assign.n(); ++i) {
    if (assign.sets[i].empty()) continue;
    ts.indices.push_back(i);
    ts.targets.push_back(assign.target(i));
    ts.selected_by.push_back(assign.sets[i].front());
  }
  if (ts.m() == 0) throw RuntimeAbort("no trainable instances");
  return ts;
}

/// Class-wise top-K selection restricted to candidate labels.
///
/// Classes are visited in ascending order. For class c, the still-unselected
/// instances with c in their set are ranked by p_ic (descending, ties to the
/// lower instance index) and the best K_t are admitted. An admitted instance
/// leaves the pool and keeps its full candidate set.
inline TrainingSet topk_curriculum_select(const CandidateAssignment& assign,
                                          const ConfidenceMatrix& conf,
                                          const CurriculumState& state) {
  if (state.k_t < 1) throw ConfigError("K_t must be >= 1");
  if (conf.n() != assign.n()) throw ConfigError("assignment and confidence sizes differ");

  std::vector<bool> available(assign.n(), false);
  for (std::size_t i = 0; i < assign.n(); ++i) available[i] = !assign.sets[i].empty();

  std::vector<std::vector<std::size_t>> holders(assign.c);
  for (std::size_t i = 0; i < assign.n(); ++i)
    for (auto c : assign.sets[i]) holders[c].push_back(i);

  TrainingSet ts;
  for (std::size_t c = 0; c < assign.c; ++c) {
    std::vector<std::size_t> ranked;
    for (auto i : holders[c])
      if (available[i]) ranked.push_back(i);
    std::stable_sort(ranked.begin(), ranked.end(),
                     [&](std::size_t a, std::size_t b) { return conf(a, c) > conf(b, c); });
    std::size_t take = std::min(state.k_t, ranked.size());
    for (std::size_t k = 0; k < take; ++k) {
      auto i = ranked[k];
      available[i] = false;
      ts.indices.push_back(i);
      ts.targets.push_back(assign.target(i));
      ts.selected_by.push_back(c);
    }
  }
  return ts;
}

}  // namespace cpl

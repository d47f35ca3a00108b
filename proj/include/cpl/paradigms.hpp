// Dataset splits for SSL / UL / TRZSL and imbalanced variants.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "cpl/core.hpp"

namespace cpl {

struct SplitResult {
  std::vector<std::size_t> labeled_indices;
  std::vector<std::size_t> unlabeled_indices;
  std::vector<std::size_t> seen_classes;
  std::vector<std::size_t> unseen_classes;
};

namespace detail {

inline void require_full_labels(const DataContainer& data, const char* what) {
  if (!data.has_labels()) throw ConfigError(std::string(what) + " requires labels");
  for (int y : data.labels)
    if (y == kUnlabeled) throw ConfigError(std::string(what) + " requires every instance labeled");
}

inline std::vector<std::vector<std::size_t>> members_by_class(const DataContainer& data) {
  std::vector<std::vector<std::size_t>> by(data.c);
  for (std::size_t i = 0; i < data.n(); ++i)
    if (data.is_labeled(i)) by[static_cast<std::size_t>(data.labels[i])].push_back(i);
  return by;
}

}  // namespace detail

/// labeled_per_class labeled instances from every class; the rest are unlabeled.
inline SplitResult split_ssl(const DataContainer& data, std::size_t labeled_per_class,
                             std::uint64_t seed) {
  detail::require_full_labels(data, "split_ssl");
  if (labeled_per_class < 1) throw ConfigError("labeled_per_class must be >= 1");
  std::mt19937_64 rng(seed);
  SplitResult out;
  auto by = detail::members_by_class(data);
  for (std::size_t c = 0; c < data.c; ++c) {
    if (by[c].size() < labeled_per_class)
      throw ConfigError("class " + std::to_string(c) + " has " + std::to_string(by[c].size()) +
                        " instances, fewer than labeled_per_class=" +
                        std::to_string(labeled_per_class));
    std::shuffle(by[c].begin(), by[c].end(), rng);
    out.labeled_indices.insert(out.labeled_indices.end(), by[c].begin(),
                               by[c].begin() + static_cast<std::ptrdiff_t>(labeled_per_class));
    out.unlabeled_indices.insert(out.unlabeled_indices.end(),
                                 by[c].begin() + static_cast<std::ptrdiff_t>(labeled_per_class),
                                 by[c].end());
  }
  std::sort(out.labeled_indices.begin(), out.labeled_indices.end());
  std::sort(out.unlabeled_indices.begin(), out.unlabeled_indices.end());
  return out;
}

/// round(seen_fraction * C) seen classes chosen by a seeded shuffle. Seen
/// instances are labeled; unseen instances form the unlabeled pool.
inline SplitResult split_trzsl(const DataContainer& data, double seen_fraction,
                               std::uint64_t seed) {
  detail::require_full_labels(data, "split_trzsl");
  if (data.c < 2) throw ConfigError("split_trzsl needs at least 2 classes");
  auto seen_count = static_cast<std::size_t>(std::lround(seen_fraction * static_cast<double>(data.c)));
  if (seen_count == 0 || seen_count >= data.c)
    throw ConfigError("seen_fraction leaves zero seen or zero unseen classes");
  std::vector<std::size_t> classes(data.c);
  std::iota(classes.begin(), classes.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(classes.begin(), classes.end(), rng);

  SplitResult out;
  out.seen_classes.assign(classes.begin(), classes.begin() + static_cast<std::ptrdiff_t>(seen_count));
  out.unseen_classes.assign(classes.begin() + static_cast<std::ptrdiff_t>(seen_count), classes.end());
  std::sort(out.seen_classes.begin(), out.seen_classes.end());
  std::sort(out.unseen_classes.begin(), out.unseen_classes.end());
  std::vector<bool> seen(data.c, false);
  for (auto c : out.seen_classes) seen[c] = true;
  for (std::size_t i = 0; i < data.n(); ++i) {
    if (seen[static_cast<std::size_t>(data.labels[i])])
      out.labeled_indices.push_back(i);
    else
      out.unlabeled_indices.push_back(i);
  }
  return out;
}

/// Per-class counts n_r = round(n_max * delta^(-r/(C-1))) for rank r in a
/// seeded class order. Index r of the result is the r-th class in that order.
inline std::vector<std::size_t> imbalance_profile(std::size_t n_max, std::size_t classes,
                                                  double delta) {
  std::vector<std::size_t> counts(classes, n_max);
  if (classes < 2) return counts;
  for (std::size_t r = 0; r < classes; ++r) {
    double e = -static_cast<double>(r) / static_cast<double>(classes - 1);
    auto n = static_cast<std::size_t>(std::lround(static_cast<double>(n_max) * std::pow(delta, e)));
    if (n == 0) {
      warn("imbalance profile rounds class rank " + std::to_string(r) + " to 0; keeping 1");
      n = 1;
    }
    counts[r] = n;
  }
  return counts;
}

/// Long-tailed subset: the class at rank r of a seeded class order keeps
/// n_max * delta^(-r/(C-1)) instances, chosen by a seeded shuffle.
inline DataContainer make_imbalanced(const DataContainer& data, double delta, std::uint64_t seed) {
  if (!(delta >= 1.0)) throw ConfigError("imbalance ratio must be >= 1");
  detail::require_full_labels(data, "make_imbalanced");
  auto by = detail::members_by_class(data);
  std::size_t n_max = 0;
  for (const auto& m : by) n_max = std::max(n_max, m.size());
  std::vector<std::size_t> order(data.c);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  auto counts = imbalance_profile(n_max, data.c, delta);

  std::vector<std::size_t> keep;
  for (std::size_t r = 0; r < order.size(); ++r) {
    auto& members = by[order[r]];
    if (counts[r] < members.size()) {
      std::shuffle(members.begin(), members.end(), rng);
      members.resize(counts[r]);
    }
    keep.insert(keep.end(), members.begin(), members.end());
  }
  std::sort(keep.begin(), keep.end());
  return data.subset(keep);
}

inline double harmonic_mean(double acc_seen, double acc_unseen) {
  double s = acc_seen + acc_unseen;
  if (s == 0.0) return 0.0;
  return 2.0 * acc_seen * acc_unseen / s;
}

/// Up to q instances per true class among `pool`, sampled uniformly. Returned
/// indices are sorted.
inline std::vector<std::size_t> fewshot_indices(const DataContainer& data,
                                                std::span<const std::size_t> pool, std::size_t q,
                                                std::uint64_t seed) {
  if (q < 1) throw ConfigError("q must be >= 1");
  if (!data.has_labels()) throw ConfigError("few-shot subsampling requires ground-truth labels");
  std::vector<std::vector<std::size_t>> by(data.c);
  for (auto i : pool)
    if (data.is_labeled(i)) by[static_cast<std::size_t>(data.labels[i])].push_back(i);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < data.c; ++c) {
    if (by[c].empty()) {
      warn("few-shot subsample: class " + std::to_string(c) + " has no instances");
      continue;
    }
    std::shuffle(by[c].begin(), by[c].end(), rng);
    auto take = std::min(q, by[c].size());
    out.insert(out.end(), by[c].begin(), by[c].begin() + static_cast<std::ptrdiff_t>(take));
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Few-shot unlabeled scenario: at most q instances per true class, labels
/// masked afterwards.
inline DataContainer fewshot_unlabeled_subsample(const DataContainer& data, std::size_t q,
                                                 std::uint64_t seed) {
  std::vector<std::size_t> all(data.n());
  std::iota(all.begin(), all.end(), 0);
  auto out = data.subset(fewshot_indices(data, all, q, seed));
  std::fill(out.labels.begin(), out.labels.end(), kUnlabeled);
  return out;
}

}  // namespace cpl

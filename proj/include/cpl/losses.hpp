// Objectives for learning with candidate label sets.
//
// Every loss takes the logits of one example and returns its value together
// with the gradient with respect to those logits. Weights derived from
// "detached" probabilities are constants for differentiation.
#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cpl/core.hpp"

namespace cpl {

enum class LossKind { cc, rc, cav, lw, soft_ce };

struct LossConfig {
  LossKind kind = LossKind::cc;
  double lw_leverage = 1.0;
};

struct LossResult {
  double value = 0.0;
  std::vector<double> grad;
};

/// Normalized soft target supported on a candidate set.
struct SoftTarget {
  std::vector<double> y;
};

inline std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::cc: return "cc";
    case LossKind::rc: return "rc";
    case LossKind::cav: return "cav";
    case LossKind::lw: return "lw";
    case LossKind::soft_ce: return "softce";
  }
  return "?";
}

inline LossKind parse_loss(const std::string& s) {
  if (s == "cc") return LossKind::cc;
  if (s == "rc") return LossKind::rc;
  if (s == "cav") return LossKind::cav;
  if (s == "lw") return LossKind::lw;
  if (s == "softce" || s == "soft_ce") return LossKind::soft_ce;
  throw ConfigError("unknown loss '" + s + "'");
}

namespace detail {

inline void require_nonempty(std::span<const std::uint8_t> s) {
  for (auto v : s)
    if (v) return;
  throw Error("empty candidate target");
}

inline void require_size(std::span<const double> logits, std::size_t n) {
  if (logits.size() != n) throw ConfigError("logits and target lengths differ");
}

// Weights p_c / sum_{k in mask} p_k over the entries where mask == want.
// Zero mass falls back to uniform weights.
inline std::vector<double> normalized_weights(std::span<const double> probs,
                                              std::span<const std::uint8_t> s, bool want) {
  std::vector<double> w(s.size(), 0.0);
  double mass = 0.0;
  std::size_t count = 0;
  for (std::size_t c = 0; c < s.size(); ++c) {
    if (static_cast<bool>(s[c]) != want) continue;
    mass += probs[c];
    ++count;
  }
  if (count == 0) return w;
  if (mass > 0.0) {
    for (std::size_t c = 0; c < s.size(); ++c)
      if (static_cast<bool>(s[c]) == want) w[c] = probs[c] / mass;
  } else {
    warn("zero detached mass on candidate set; using uniform weights");
    for (std::size_t c = 0; c < s.size(); ++c)
      if (static_cast<bool>(s[c]) == want) w[c] = 1.0 / static_cast<double>(count);
  }
  return w;
}

}  // namespace detail

/// Cross-entropy toward a single class.
inline LossResult supervised_ce(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) throw ConfigError("label out of range");
  LossResult r;
  r.grad = softmax_row(logits);
  r.value = log_sum_exp(logits) - logits[label];
  r.grad[label] -= 1.0;
  return r;
}

/// Classifier-consistent loss: -log of the probability mass on the candidate set.
inline LossResult loss_cc(std::span<const double> logits, std::span<const std::uint8_t> s) {
  detail::require_size(logits, s.size());
  detail::require_nonempty(s);
  std::vector<double> in_set;
  for (std::size_t c = 0; c < s.size(); ++c)
    if (s[c]) in_set.push_back(logits[c]);
  LossResult r;
  r.value = log_sum_exp(logits) - log_sum_exp(in_set);
  r.grad = softmax_row(logits);
  double mass = 0.0;
  for (std::size_t c = 0; c < s.size(); ++c)
    if (s[c]) mass += r.grad[c];
  auto p = r.grad;
  for (std::size_t c = 0; c < s.size(); ++c)
    if (s[c]) r.grad[c] = p[c] - p[c] / mass;
  return r;
}

/// Risk-consistent loss: candidate-set cross-entropy weighted by detached
/// probabilities renormalized over the set.
inline LossResult loss_rc(std::span<const double> logits, std::span<const std::uint8_t> s,
                          std::span<const double> detached_probs) {
  detail::require_size(logits, s.size());
  detail::require_size(detached_probs, s.size());
  detail::require_nonempty(s);
  auto w = detail::normalized_weights(detached_probs, s, true);
  double lse = log_sum_exp(logits);
  LossResult r;
  r.grad = softmax_row(logits);
  for (std::size_t c = 0; c < s.size(); ++c) {
    if (w[c] == 0.0) continue;
    r.value += w[c] * (lse - logits[c]);
    r.grad[c] -= w[c];
  }
  return r;
}

/// Class-activation loss: cross-entropy toward the highest-logit candidate.
inline LossResult loss_cav(std::span<const double> logits, std::span<const std::uint8_t> s) {
  detail::require_size(logits, s.size());
  detail::require_nonempty(s);
  std::size_t best = s.size();
  for (std::size_t c = 0; c < s.size(); ++c)
    if (s[c] && (best == s.size() || logits[c] > logits[best])) best = c;
  return supervised_ce(logits, best);
}

/// Leveraged weighted loss with the logistic surrogate on the one-vs-rest margin
/// m_c = z_c - logsumexp(z_{-c}). Since sigmoid(m_c) = softmax_c, the candidate
/// term is -log p_c and the non-candidate term is -log(1 - p_c). Candidate and
/// non-candidate weights are the detached probabilities renormalized over S and
/// over its complement respectively.
inline LossResult loss_lw(std::span<const double> logits, std::span<const std::uint8_t> s,
                          double leverage, std::span<const double> detached_probs) {
  detail::require_size(logits, s.size());
  detail::require_size(detached_probs, s.size());
  detail::require_nonempty(s);
  if (!(leverage >= 0.0)) throw ConfigError("lw leverage must be >= 0");
  const std::size_t n = s.size();
  auto w_in = detail::normalized_weights(detached_probs, s, true);
  auto w_out = detail::normalized_weights(detached_probs, s, false);
  auto p = softmax_row(logits);
  double lse = log_sum_exp(logits);

  LossResult r;
  r.grad.assign(n, 0.0);
  std::vector<double> rest;
  rest.reserve(n);
  for (std::size_t c = 0; c < n; ++c) {
    double w = s[c] ? w_in[c] : leverage * w_out[c];
    if (w == 0.0) continue;
    if (s[c]) {
      // -log p_c
      r.value += w * (lse - logits[c]);
      for (std::size_t j = 0; j < n; ++j) r.grad[j] += w * p[j];
      r.grad[c] -= w;
    } else {
      // -log(1 - p_c) = lse(z) - lse(z_{-c}); gradient p_j - q_j with q the
      // softmax over the other classes (q_c = 0).
      rest.clear();
      for (std::size_t j = 0; j < n; ++j)
        if (j != c) rest.push_back(logits[j]);
      double lse_rest = log_sum_exp(rest);
      r.value += w * (lse - lse_rest);
      for (std::size_t j = 0; j < n; ++j) {
        double q = j == c ? 0.0 : std::exp(logits[j] - lse_rest);
        r.grad[j] += w * (p[j] - q);
      }
    }
  }
  return r;
}

/// y_c = p_c / sum_{k in S} p_k on S, zero elsewhere.
inline SoftTarget make_soft_target(std::span<const double> detached_probs,
                                   std::span<const std::uint8_t> s) {
  detail::require_size(detached_probs, s.size());
  detail::require_nonempty(s);
  return SoftTarget{detail::normalized_weights(detached_probs, s, true)};
}

inline LossResult loss_soft_ce(std::span<const double> logits, const SoftTarget& target) {
  detail::require_size(logits, target.y.size());
  LossResult r;
  double lse = log_sum_exp(logits);
  r.grad = softmax_row(logits);
  for (std::size_t c = 0; c < target.y.size(); ++c) {
    if (target.y[c] == 0.0) continue;
    r.value += target.y[c] * (lse - logits[c]);
    r.grad[c] -= target.y[c];
  }
  return r;
}

/// Labeled rows for the supervised term.
struct LabeledBatch {
  Matrix logits;
  std::vector<std::size_t> labels;
};

/// Candidate-labeled rows for the partial-label term. detached_probs is read by
/// RC and LW; soft_targets by Soft-CE.
struct UnlabeledBatch {
  Matrix logits;
  std::vector<std::vector<std::uint8_t>> targets;
  Matrix detached_probs;
  std::vector<SoftTarget> soft_targets;
};

struct BatchLoss {
  double value = 0.0;
  Matrix labeled_grad;    // d value / d labeled logits
  Matrix unlabeled_grad;  // d value / d unlabeled logits
};

/// Partial-label loss of one example under the configured kind.
inline LossResult partial_label_loss(const LossConfig& cfg, std::span<const double> logits,
                                     std::span<const std::uint8_t> s,
                                     std::span<const double> detached,
                                     const SoftTarget* soft) {
  switch (cfg.kind) {
    case LossKind::cc: return loss_cc(logits, s);
    case LossKind::rc: return loss_rc(logits, s, detached);
    case LossKind::cav: return loss_cav(logits, s);
    case LossKind::lw: return loss_lw(logits, s, cfg.lw_leverage, detached);
    case LossKind::soft_ce:
      if (!soft) throw ConfigError("soft_ce requires soft targets");
      return loss_soft_ce(logits, *soft);
  }
  throw ConfigError("unknown loss kind");
}

/// mean CE over the labeled batch + lambda * mean partial-label loss over the
/// unlabeled batch. With an empty labeled batch only the second term remains
/// and lambda is ignored.
inline BatchLoss combined_batch_loss(const LabeledBatch& labeled, const UnlabeledBatch& unlabeled,
                                     double lambda, const LossConfig& cfg) {
  const std::size_t b1 = labeled.logits.rows();
  const std::size_t b2 = unlabeled.logits.rows();
  if (b1 == 0 && b2 == 0) throw Error("both batches are empty");
  BatchLoss out;
  out.labeled_grad = Matrix(b1, labeled.logits.cols());
  out.unlabeled_grad = Matrix(b2, unlabeled.logits.cols());
  const double unl_weight = b1 == 0 ? 1.0 : lambda;

  std::vector<double> lab_values(b1), unl_values(b2);
  parallel_for(b1, [&](std::size_t i) {
    auto r = supervised_ce(labeled.logits.row(i), labeled.labels[i]);
    lab_values[i] = r.value;
    auto g = out.labeled_grad.row(i);
    for (std::size_t c = 0; c < g.size(); ++c) g[c] = r.grad[c] / static_cast<double>(b1);
  });
  parallel_for(b2, [&](std::size_t i) {
    std::span<const double> detached;
    if (!unlabeled.detached_probs.empty()) detached = unlabeled.detached_probs.row(i);
    const SoftTarget* soft = unlabeled.soft_targets.empty() ? nullptr : &unlabeled.soft_targets[i];
    auto r = partial_label_loss(cfg, unlabeled.logits.row(i), unlabeled.targets[i], detached, soft);
    unl_values[i] = r.value;
    auto g = out.unlabeled_grad.row(i);
    for (std::size_t c = 0; c < g.size(); ++c)
      g[c] = unl_weight * r.grad[c] / static_cast<double>(b2);
  });

  // fixed-order reductions
  double lab_sum = 0.0, unl_sum = 0.0;
  for (double v : lab_values) lab_sum += v;
  for (double v : unl_values) unl_sum += v;
  if (b1 > 0) out.value += lab_sum / static_cast<double>(b1);
  if (b2 > 0) out.value += unl_weight * unl_sum / static_cast<double>(b2);
  return out;
}

}  // namespace cpl

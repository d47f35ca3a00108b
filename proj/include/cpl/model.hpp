// Linear softmax head, SGD with momentum and weight decay, warmup + cosine schedule.
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>

#include "cpl/core.hpp"

namespace cpl {

struct OptimizerState {
  Matrix weight_velocity;
  std::vector<double> bias_velocity;
  std::size_t step = 0;
  std::size_t epoch = 0;

  static OptimizerState zeros_like(const LinearModel& m) {
    OptimizerState s;
    s.weight_velocity = Matrix(m.classes(), m.dim());
    s.bias_velocity.assign(m.classes(), 0.0);
    return s;
  }
};

/// Gradient of a loss with respect to the head parameters.
struct ModelGrad {
  Matrix weights;
  std::vector<double> bias;

  static ModelGrad zeros_like(const LinearModel& m) {
    return ModelGrad{Matrix(m.classes(), m.dim()), std::vector<double>(m.classes(), 0.0)};
  }
};

inline void check_shape(const LinearModel& model, std::size_t dim) {
  if (model.dim() != dim)
    throw ConfigError("feature dimension " + std::to_string(dim) + " does not match model dimension " +
                      std::to_string(model.dim()));
}

/// Logits for every row of a feature matrix.
inline Matrix predict_logits(const LinearModel& model, const Matrix& features) {
  check_shape(model, features.cols());
  Matrix out(features.rows(), model.classes());
  parallel_for(features.rows(), [&](std::size_t i) { model.logits(features.row(i), out.row(i)); });
  return out;
}

inline ConfidenceMatrix predict_proba(const LinearModel& model, const Matrix& features) {
  return ConfidenceMatrix::from_logits(predict_logits(model, features));
}

/// Accumulates d loss / d theta from per-row logit gradients, in row order.
inline void backprop_linear(const Matrix& features, std::span<const std::size_t> rows,
                            const Matrix& logit_grad, ModelGrad& grad) {
  for (std::size_t k = 0; k < rows.size(); ++k) {
    auto x = features.row(rows[k]);
    auto g = logit_grad.row(k);
    for (std::size_t c = 0; c < g.size(); ++c) {
      if (g[c] == 0.0) continue;
      auto w = grad.weights.row(c);
      for (std::size_t j = 0; j < x.size(); ++j) w[j] += g[c] * x[j];
      grad.bias[c] += g[c];
    }
  }
}

/// Classic coupled SGD: v = momentum*v + g + wd*theta; theta -= lr*v.
/// Weight decay applies to the bias too.
inline void sgd_step(LinearModel& model, const ModelGrad& grad, OptimizerState& state, double lr,
                     const OptimConfig& cfg) {
  auto update = [&](double& theta, double& v, double g) {
    if (!std::isfinite(g)) throw RuntimeAbort("diverged");
    v = cfg.momentum * v + g + cfg.weight_decay * theta;
    theta -= lr * v;
    if (!std::isfinite(theta)) throw RuntimeAbort("diverged");
  };
  auto& w = model.weights.data();
  auto& vw = state.weight_velocity.data();
  const auto& gw = grad.weights.data();
  for (std::size_t k = 0; k < w.size(); ++k) update(w[k], vw[k], gw[k]);
  for (std::size_t c = 0; c < model.bias.size(); ++c)
    update(model.bias[c], state.bias_velocity[c], grad.bias[c]);
  ++state.step;
}

/// Constant warmup_lr for the first warmup_epochs, then per-epoch cosine
/// annealing from lr toward zero.
inline double lr_at(std::size_t epoch, const OptimConfig& cfg) {
  if (epoch < cfg.warmup_epochs) return cfg.warmup_lr;
  double progress = static_cast<double>(epoch - cfg.warmup_epochs) /
                    static_cast<double>(cfg.epochs - cfg.warmup_epochs);
  return cfg.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

/// Independent seed for sub-stream `stream` of a run seeded with `seed`.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

/// Fresh parameters: W ~ U(-1/sqrt(D), 1/sqrt(D)), b = 0.
inline LinearModel reinit(std::size_t classes, std::size_t dim, std::uint64_t seed) {
  LinearModel m(classes, dim);
  std::mt19937_64 rng(seed);
  double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(dim, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& w : m.weights.data()) w = dist(rng);
  return m;
}

inline LinearModel reinit(const LinearModel& like, std::uint64_t seed) {
  return reinit(like.classes(), like.dim(), seed);
}

}  // namespace cpl

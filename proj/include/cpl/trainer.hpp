// The iterative candidate-pseudolabel training loop.
#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "cpl/core.hpp"
#include "cpl/losses.hpp"
#include "cpl/metrics.hpp"
#include "cpl/model.hpp"
#include "cpl/paradigms.hpp"
#include "cpl/selection.hpp"

namespace cpl {

struct RunConfig {
  ParadigmSpec paradigm;
  SelectionParams selection;
  LossConfig loss;
  OptimConfig optim;
  std::size_t big_t = 10;
  std::uint64_t seed = 0;

  void validate() const {
    paradigm.validate();
    selection.validate();
    optim.validate();
    if (big_t < 1) throw ConfigError("iters must be >= 1");
    if (!(loss.lw_leverage >= 0.0)) throw ConfigError("lw leverage must be >= 0");
  }
};

struct IterationRecord {
  std::size_t t = 0;
  double tau = 0.0;
  std::size_t k_t = 0;
  std::size_t m = 0;
  std::size_t b1 = 0;
  std::size_t epochs = 0;
  double avg_candidate_size = 0.0;
  std::optional<LabelEstimation> label_estimation;        // over the whole pool
  std::optional<double> train_set_label_accuracy;          // over D_T only
  std::vector<double> train_loss;                          // mean batch loss per epoch
  std::optional<double> test_top1;
  std::vector<double> per_class_accuracy;
  std::vector<std::uint64_t> class_frequency;
  std::optional<double> harmonic_mean;
};

struct FinalSummary {
  std::optional<double> test_top1;
  std::optional<double> harmonic_mean;
  std::optional<double> acc_seen;
  std::optional<double> acc_unseen;
  std::optional<ConfusionMatrix> confusion;
};

struct RunReport {
  RunConfig config;
  std::size_t labeled_size = 0;
  std::size_t pool_size = 0;
  std::size_t delta = 0;
  std::vector<std::size_t> seen_classes;
  std::vector<std::size_t> unseen_classes;
  std::vector<IterationRecord> iterations;
  FinalSummary final;
  LinearModel model;
};

/// Labeled batch size keeping labeled and candidate-labeled passes in step:
/// max(1, round(labeled_size / training_set_size * b2)).
inline std::size_t compute_b1(std::size_t labeled_size, std::size_t training_set_size,
                              std::size_t b2) {
  if (training_set_size < 1 || b2 < 1) throw ConfigError("compute_b1 needs M >= 1 and b2 >= 1");
  double b1 = std::round(static_cast<double>(labeled_size) / static_cast<double>(training_set_size) *
                         static_cast<double>(b2));
  return std::max<std::size_t>(1, static_cast<std::size_t>(b1));
}

/// Epochs per curriculum iteration (total budget split evenly) with the
/// warmup shortened if an iteration is too short to hold it.
inline OptimConfig per_iteration_optim(const OptimConfig& cfg, std::size_t big_t) {
  OptimConfig out = cfg;
  out.epochs = std::max<std::size_t>(1, cfg.epochs / big_t);
  out.warmup_epochs = std::min(cfg.warmup_epochs, out.epochs - 1);
  return out;
}

/// Labeled / unlabeled membership for the configured paradigm.
inline SplitResult make_split(const ParadigmSpec& spec, const DataContainer& data,
                              std::uint64_t seed) {
  SplitResult split;
  switch (spec.paradigm) {
    case Paradigm::ul:
      split.unlabeled_indices.resize(data.n());
      std::iota(split.unlabeled_indices.begin(), split.unlabeled_indices.end(), 0);
      return split;
    case Paradigm::ssl: {
      bool complete = data.has_labels() &&
                      std::none_of(data.labels.begin(), data.labels.end(),
                                   [](int y) { return y == kUnlabeled; });
      if (complete) return split_ssl(data, spec.labeled_per_class, seed);
      // partially labeled input: the given labels are the labeled set
      for (std::size_t i = 0; i < data.n(); ++i)
        (data.is_labeled(i) ? split.labeled_indices : split.unlabeled_indices).push_back(i);
      return split;
    }
    case Paradigm::trzsl:
      return split_trzsl(data, spec.seen_fraction, seed);
  }
  throw ConfigError("unknown paradigm");
}

namespace detail {

// Sub-stream identifiers for derive_seed.
enum SeedStream : std::uint64_t {
  kSplitStream = 1,
  kFewshotStream = 2,
  kColdStartStream = 3,
  kInitStream = 100,
  kShuffleStream = 100000,
};

struct EvalResult {
  double top1 = 0.0;
  ConfusionMatrix confusion;
};

inline std::optional<EvalResult> evaluate(const LinearModel& model, const DataContainer& test) {
  if (test.n() == 0 || !test.has_labels()) return std::nullopt;
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < test.n(); ++i)
    if (test.is_labeled(i)) idx.push_back(i);
  if (idx.empty()) return std::nullopt;
  auto sub = test.subset(idx);
  auto preds = argmax_rows(predict_logits(model, sub.rows));
  return EvalResult{top1_accuracy(preds, sub.labels), confusion(preds, sub.labels, model.classes())};
}

}  // namespace detail

/// Trains the head for `cfg.epochs` epochs on the selected instances.
///
/// Each step pairs b2 candidate-labeled rows with b1 labeled rows; the labeled
/// set is reshuffled and reused whenever it runs out. Returns the mean batch
/// loss per epoch.
inline std::vector<double> train_iteration(LinearModel& model, const Matrix& features,
                                           std::span<const std::size_t> pool_rows,
                                           const TrainingSet& ts, const ConfidenceMatrix& conf,
                                           std::span<const std::size_t> labeled_rows,
                                           std::span<const int> labels, std::size_t b1,
                                           double lambda, const LossConfig& loss,
                                           const OptimConfig& cfg, std::uint64_t shuffle_seed) {
  const std::size_t m = ts.m();
  const std::size_t b2 = cfg.batch_unlabeled;
  const std::size_t classes = model.classes();
  std::mt19937_64 rng(shuffle_seed);
  OptimizerState opt = OptimizerState::zeros_like(model);

  std::vector<SoftTarget> soft;
  if (loss.kind == LossKind::soft_ce) {
    soft.reserve(m);
    for (std::size_t k = 0; k < m; ++k) soft.push_back(make_soft_target(conf.row(ts.indices[k]), ts.targets[k]));
  }

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::size_t> lab_order(labeled_rows.begin(), labeled_rows.end());
  std::size_t lab_cursor = lab_order.size();

  std::vector<double> curve;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double lr = lr_at(epoch, cfg);
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < m; start += b2) {
      std::size_t end = std::min(m, start + b2);

      std::vector<std::size_t> unl_rows;
      UnlabeledBatch ub;
      ub.logits = Matrix(end - start, classes);
      for (std::size_t k = start; k < end; ++k) {
        auto entry = order[k];
        unl_rows.push_back(pool_rows[ts.indices[entry]]);
        ub.targets.push_back(ts.targets[entry]);
        if (!soft.empty()) ub.soft_targets.push_back(soft[entry]);
      }
      for (std::size_t r = 0; r < unl_rows.size(); ++r)
        model.logits(features.row(unl_rows[r]), ub.logits.row(r));
      if (loss.kind == LossKind::rc || loss.kind == LossKind::lw)
        ub.detached_probs = ConfidenceMatrix::from_logits(ub.logits).matrix();

      std::vector<std::size_t> lab_rows;
      LabeledBatch lb;
      if (!lab_order.empty()) {
        for (std::size_t k = 0; k < b1; ++k) {
          if (lab_cursor >= lab_order.size()) {
            std::shuffle(lab_order.begin(), lab_order.end(), rng);
            lab_cursor = 0;
          }
          lab_rows.push_back(lab_order[lab_cursor++]);
        }
        lb.logits = Matrix(lab_rows.size(), classes);
        for (std::size_t r = 0; r < lab_rows.size(); ++r) {
          model.logits(features.row(lab_rows[r]), lb.logits.row(r));
          lb.labels.push_back(static_cast<std::size_t>(labels[lab_rows[r]]));
        }
      }

      auto bl = combined_batch_loss(lb, ub, lambda, loss);
      auto grad = ModelGrad::zeros_like(model);
      backprop_linear(features, lab_rows, bl.labeled_grad, grad);
      backprop_linear(features, unl_rows, bl.unlabeled_grad, grad);
      sgd_step(model, grad, opt, lr, cfg);
      if (!std::isfinite(bl.value)) throw RuntimeAbort("diverged: non-finite loss");
      epoch_loss += bl.value;
      ++steps;
    }
    ++opt.epoch;
    curve.push_back(steps ? epoch_loss / static_cast<double>(steps) : 0.0);
  }
  return curve;
}

/// Full candidate-pseudolabel run.
///
/// `initial_logits`, when given, supplies the first-iteration confidences
/// (rows aligned with `data`); otherwise a freshly initialized head does.
/// Ground-truth labels of unlabeled instances are read only for metrics.
inline RunReport run_cpl(const RunConfig& config, const DataContainer& data,
                         const DataContainer& test, const DataContainer* initial_logits = nullptr) {
  config.validate();
  data.validate();
  if (data.kind != DataKind::features) throw ConfigError("training data must be a features container");
  if (data.c < 2) throw ConfigError("need at least 2 classes");
  if (test.n() > 0) {
    test.validate();
    if (test.d() != data.d() || test.c != data.c)
      throw ConfigError("test container shape does not match training data");
  }
  if (initial_logits) {
    initial_logits->validate();
    if (initial_logits->n() != data.n() || initial_logits->c != data.c)
      throw ConfigError("logits container does not match training data (n or c differ)");
  }

  const std::size_t classes = data.c;
  const std::uint64_t seed = config.seed;
  RunReport report;
  report.config = config;

  auto split = make_split(config.paradigm, data, derive_seed(seed, detail::kSplitStream));
  std::vector<std::size_t> pool = split.unlabeled_indices;
  if (config.paradigm.q_fewshot)
    pool = fewshot_indices(data, pool, *config.paradigm.q_fewshot,
                           derive_seed(seed, detail::kFewshotStream));
  if (pool.empty()) throw RuntimeAbort("unlabeled pool is empty");
  const bool use_labeled = config.paradigm.paradigm != Paradigm::ul;
  std::vector<std::size_t> labeled = use_labeled ? split.labeled_indices : std::vector<std::size_t>{};
  if (use_labeled && labeled.empty()) throw RuntimeAbort("paradigm needs labeled data but none is present");

  report.labeled_size = labeled.size();
  report.pool_size = pool.size();
  report.seen_classes = split.seen_classes;
  report.unseen_classes = split.unseen_classes;

  std::vector<int> pool_truth(pool.size(), kUnlabeled);
  bool have_truth = false;
  if (data.has_labels()) {
    for (std::size_t k = 0; k < pool.size(); ++k) {
      pool_truth[k] = data.labels[pool[k]];
      have_truth = have_truth || pool_truth[k] != kUnlabeled;
    }
  }

  const Matrix pool_features = data.subset(pool).rows;
  // Training view: pool rows first, then labeled rows.
  Matrix joint(pool.size() + labeled.size(), data.d());
  std::vector<int> joint_labels(joint.rows(), kUnlabeled);
  std::vector<std::size_t> pool_rows(pool.size());
  std::vector<std::size_t> labeled_rows(labeled.size());
  std::copy(pool_features.data().begin(), pool_features.data().end(), joint.data().begin());
  std::iota(pool_rows.begin(), pool_rows.end(), 0);
  for (std::size_t k = 0; k < labeled.size(); ++k) {
    auto r = data.rows.row(labeled[k]);
    std::copy(r.begin(), r.end(), joint.row(pool.size() + k).begin());
    labeled_rows[k] = pool.size() + k;
    joint_labels[pool.size() + k] = data.labels[labeled[k]];
  }
  auto state = CurriculumState::start(pool.size(), config.big_t, classes);
  report.delta = state.delta;
  auto iter_cfg = per_iteration_optim(config.optim, config.big_t);

  LinearModel model = reinit(classes, data.d(), derive_seed(seed, detail::kColdStartStream));

  for (std::size_t t = 1; t <= config.big_t; ++t) {
    IterationRecord rec;
    rec.t = t;
    rec.k_t = state.k_t;
    rec.epochs = iter_cfg.epochs;

    ConfidenceMatrix conf = (t == 1 && initial_logits)
                                ? ConfidenceMatrix::from_logits(initial_logits->subset(pool).rows)
                                : predict_proba(model, pool_features);
    auto cand = generate_candidates_detailed(conf, config.selection);
    const auto& assign = cand.assignment;
    rec.tau = cand.tau;
    rec.class_frequency = class_frequency(assign);
    bool any = std::any_of(assign.sets.begin(), assign.sets.end(), [](const auto& s) { return !s.empty(); });
    if (!any) throw RuntimeAbort("no trainable instances at iteration " + std::to_string(t));
    rec.avg_candidate_size = avg_candidate_size(assign);
    if (have_truth) rec.label_estimation = label_estimation_accuracy(assign, pool_truth);

    auto ts = topk_curriculum_select(assign, conf, state);
    if (ts.m() == 0) throw RuntimeAbort("no trainable instances at iteration " + std::to_string(t));
    rec.m = ts.m();
    if (have_truth) {
      std::size_t hits = 0, known = 0;
      for (std::size_t k = 0; k < ts.m(); ++k) {
        int y = pool_truth[ts.indices[k]];
        if (y == kUnlabeled) continue;
        ++known;
        if (ts.targets[k][static_cast<std::size_t>(y)]) ++hits;
      }
      if (known) rec.train_set_label_accuracy = static_cast<double>(hits) / static_cast<double>(known);
    }

    rec.b1 = use_labeled ? compute_b1(labeled.size(), ts.m(), iter_cfg.batch_unlabeled) : 0;

    model = reinit(classes, data.d(), derive_seed(seed, detail::kInitStream + t));
    rec.train_loss = train_iteration(model, joint, pool_rows, ts, conf, labeled_rows, joint_labels,
                                     rec.b1, config.paradigm.lambda, config.loss, iter_cfg,
                                     derive_seed(seed, detail::kShuffleStream + t));

    if (auto ev = detail::evaluate(model, test)) {
      rec.test_top1 = ev->top1;
      rec.per_class_accuracy = per_class_accuracy(ev->confusion);
      if (config.paradigm.paradigm == Paradigm::trzsl)
        rec.harmonic_mean = harmonic_mean(accuracy_on_classes(ev->confusion, split.seen_classes),
                                          accuracy_on_classes(ev->confusion, split.unseen_classes));
    }
    report.iterations.push_back(std::move(rec));
    state.advance();
  }

  if (auto ev = detail::evaluate(model, test)) {
    report.final.test_top1 = ev->top1;
    if (config.paradigm.paradigm == Paradigm::trzsl) {
      report.final.acc_seen = accuracy_on_classes(ev->confusion, split.seen_classes);
      report.final.acc_unseen = accuracy_on_classes(ev->confusion, split.unseen_classes);
      report.final.harmonic_mean = harmonic_mean(*report.final.acc_seen, *report.final.acc_unseen);
    }
    report.final.confusion = ev->confusion;
  }
  report.model = std::move(model);
  return report;
}

}  // namespace cpl

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "cpl/losses.hpp"
#include "oracle.hpp"

using namespace cpl;
using Target = std::vector<std::uint8_t>;

namespace {

struct Case {
  std::vector<double> logits;
  Target s;
  std::vector<double> detached;
};

Case random_case(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> c_dist(2, 10);
  std::normal_distribution<double> g(0.0, 2.0);
  std::bernoulli_distribution keep(0.4);
  Case k;
  std::size_t c = c_dist(rng);
  k.logits.resize(c);
  for (double& v : k.logits) v = g(rng);
  k.s.assign(c, 0);
  for (auto& v : k.s) v = keep(rng);
  k.s[std::uniform_int_distribution<std::size_t>(0, c - 1)(rng)] = 1;
  std::vector<double> z(c);
  for (double& v : z) v = g(rng);
  k.detached = softmax_row(z);
  return k;
}

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

}  // namespace

TEST(SupervisedCE, Values) {
  std::vector<double> z{0, 0};
  EXPECT_NEAR(supervised_ce(z, 0).value, std::log(2.0), 1e-15);
  std::vector<double> peaked{50, 0, 0};
  EXPECT_LT(supervised_ce(peaked, 0).value, 1e-20);
  EXPECT_THROW(supervised_ce(z, 2), ConfigError);
}

TEST(SupervisedCE, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    auto k = random_case(rng);
    std::size_t y = trial % k.logits.size();
    auto r = supervised_ce(k.logits, y);
    auto fd = oracle::fd_gradient([&](std::span<const double> z) { return supervised_ce(z, y).value; }, k.logits);
    EXPECT_LE(oracle::relative_error(r.grad, fd), 1e-8);
  }
}

TEST(LossCC, Examples) {
  std::vector<double> z{0, 0, 0};
  EXPECT_NEAR(loss_cc(z, Target{1, 1, 0}).value, -std::log(2.0 / 3.0), 1e-12);
  auto full = loss_cc(z, Target{1, 1, 1});
  EXPECT_EQ(full.value, 0.0);
  for (double g : full.grad) EXPECT_NEAR(g, 0.0, 1e-9);
  EXPECT_THROW(loss_cc(z, Target{0, 0, 0}), Error);
}

TEST(LossRC, UniformDetachedWeights) {
  std::vector<double> z{0, 0, 0}, p{1.0 / 3, 1.0 / 3, 1.0 / 3};
  EXPECT_NEAR(loss_rc(z, Target{1, 1, 0}, p).value, std::log(3.0), 1e-12);
}

TEST(LossRC, ZeroMassFallsBackToUniform) {
  std::vector<double> z{0.3, -0.2, 1.0}, p{0.0, 0.0, 1.0};
  std::size_t warnings = 0;
  auto saved = warning_sink();
  warning_sink() = [&](const std::string&) { ++warnings; };
  auto r = loss_rc(z, Target{1, 1, 0}, p);
  warning_sink() = saved;
  EXPECT_EQ(warnings, 1u);
  auto lse = log_sum_exp(z);
  EXPECT_NEAR(r.value, 0.5 * (lse - z[0]) + 0.5 * (lse - z[1]), 1e-12);
}

TEST(LossCAV, PicksHighestCandidateLogit) {
  std::vector<double> z{2, 1, 0};
  auto r = loss_cav(z, Target{0, 1, 1});
  auto ce = supervised_ce(z, 1);
  EXPECT_EQ(r.value, ce.value);
  EXPECT_EQ(r.grad, ce.grad);
  std::vector<double> tie{1, 1, 0};
  EXPECT_EQ(loss_cav(tie, Target{1, 1, 0}).value, supervised_ce(tie, 0).value);
}

TEST(SoftTarget, NormalizesOverCandidates) {
  std::vector<double> p{0.5, 0.3, 0.2};
  auto y = make_soft_target(p, Target{1, 1, 0}).y;
  EXPECT_NEAR(y[0], 0.625, 1e-15);
  EXPECT_NEAR(y[1], 0.375, 1e-15);
  EXPECT_EQ(y[2], 0.0);
  EXPECT_EQ(make_soft_target(p, Target{0, 1, 0}).y, (std::vector<double>{0, 1, 0}));
  auto full = make_soft_target(p, Target{1, 1, 1}).y;
  for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(full[c], p[c], 1e-15);
}

TEST(SoftTarget, ValidProbabilityWithSupportInSet) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    auto k = random_case(rng);
    auto y = make_soft_target(k.detached, k.s).y;
    EXPECT_NEAR(sum(y), 1.0, 1e-12);
    for (std::size_t c = 0; c < y.size(); ++c) {
      EXPECT_GE(y[c], 0.0);
      if (!k.s[c]) {
        EXPECT_EQ(y[c], 0.0);
      }
    }
  }
}

TEST(LossSoftCE, UniformTargetGivesLogC) {
  std::vector<double> z(7, 0.0);
  SoftTarget y{std::vector<double>(7, 1.0 / 7)};
  EXPECT_NEAR(loss_soft_ce(z, y).value, std::log(7.0), 1e-12);
}

TEST(LossLW, NonCandidateTermVanishesOnFullSet) {
  std::vector<double> z{0.4, -1.0, 2.0}, p{0.2, 0.3, 0.5};
  auto lw = loss_lw(z, Target{1, 1, 1}, 0.0, p);
  auto rc = loss_rc(z, Target{1, 1, 1}, p);
  EXPECT_NEAR(lw.value, rc.value, 1e-12);
  auto lw_lev = loss_lw(z, Target{1, 1, 1}, 5.0, p);
  EXPECT_NEAR(lw_lev.value, lw.value, 1e-12);
}

// With weights equal to the renormalized own probabilities the slope in a
// candidate logit is p_c - w_c <= 0; the tolerance covers the O(h^2) term.
TEST(LossLW, CandidateTermNonIncreasingInCandidateLogit) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    auto k = random_case(rng);
    auto p = softmax_row(k.logits);  // the model's own detached probabilities
    auto before = loss_lw(k.logits, k.s, 0.0, p).value;
    for (std::size_t c = 0; c < k.s.size(); ++c) {
      if (!k.s[c]) continue;
      auto z = k.logits;
      z[c] += 1e-4;
      EXPECT_LE(loss_lw(z, k.s, 0.0, p).value, before + 1e-8);
    }
  }
}

TEST(LossLW, Errors) {
  std::vector<double> z{0, 0}, p{0.5, 0.5};
  EXPECT_THROW(loss_lw(z, Target{1, 0}, -1.0, p), ConfigError);
  EXPECT_THROW(loss_lw(z, Target{0, 0}, 1.0, p), Error);
}

// Every partial-label loss: finite-difference gradient agreement, zero-sum
// gradients, and reduction to cross-entropy on singleton sets.
TEST(PartialLabelLosses, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 100; ++trial) {
    auto k = random_case(rng);
    auto y = make_soft_target(k.detached, k.s);
    std::vector<std::pair<const char*, std::function<LossResult(std::span<const double>)>>> losses{
        {"cc", [&](std::span<const double> z) { return loss_cc(z, k.s); }},
        {"rc", [&](std::span<const double> z) { return loss_rc(z, k.s, k.detached); }},
        {"cav", [&](std::span<const double> z) { return loss_cav(z, k.s); }},
        {"lw", [&](std::span<const double> z) { return loss_lw(z, k.s, 1.0, k.detached); }},
        {"softce", [&](std::span<const double> z) { return loss_soft_ce(z, y); }},
    };
    for (auto& [name, fn] : losses) {
      auto r = fn(k.logits);
      auto fd = oracle::fd_gradient([&](std::span<const double> z) { return fn(z).value; }, k.logits);
      EXPECT_LE(oracle::relative_error(r.grad, fd), 1e-5) << name << " trial " << trial;
      EXPECT_TRUE(std::isfinite(r.value)) << name;
      EXPECT_GE(r.value, 0.0) << name;
      EXPECT_NEAR(sum(r.grad), 0.0, 1e-9) << name;
    }
  }
}

TEST(PartialLabelLosses, SingletonSetReducesToCrossEntropy) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    auto k = random_case(rng);
    std::size_t y = trial % k.logits.size();
    Target s(k.logits.size(), 0);
    s[y] = 1;
    auto ce = supervised_ce(k.logits, y);
    auto soft = make_soft_target(k.detached, s);
    for (const auto& r : {loss_cc(k.logits, s), loss_rc(k.logits, s, k.detached), loss_cav(k.logits, s),
                          loss_soft_ce(k.logits, soft)}) {
      EXPECT_NEAR(r.value, ce.value, 1e-12);
      for (std::size_t c = 0; c < s.size(); ++c) EXPECT_NEAR(r.grad[c], ce.grad[c], 1e-12);
    }
  }
}

TEST(CombinedBatchLoss, LambdaMixing) {
  LabeledBatch lb{Matrix(2, 3, {0, 0, 0, 1, 0, 0}), {0, 1}};
  UnlabeledBatch ub;
  ub.logits = Matrix(1, 3, {0.5, 0.1, -0.3});
  ub.targets = {{1, 1, 0}};
  LossConfig cc{LossKind::cc, 1.0};

  double sup = 0.5 * (supervised_ce(lb.logits.row(0), 0).value + supervised_ce(lb.logits.row(1), 1).value);
  double part = loss_cc(ub.logits.row(0), ub.targets[0]).value;

  auto none = combined_batch_loss(lb, ub, 0.0, cc);
  EXPECT_NEAR(none.value, sup, 1e-15);
  for (double g : none.unlabeled_grad.data()) EXPECT_EQ(g, 0.0);

  auto mixed = combined_batch_loss(lb, ub, 1.0, cc);
  EXPECT_NEAR(mixed.value, sup + part, 1e-15);
  auto g = supervised_ce(lb.logits.row(1), 1).grad;
  for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(mixed.labeled_grad(1, c), 0.5 * g[c], 1e-15);

  auto ul = combined_batch_loss(LabeledBatch{}, ub, 7.0, cc);
  EXPECT_NEAR(ul.value, part, 1e-15);

  EXPECT_THROW(combined_batch_loss(LabeledBatch{}, UnlabeledBatch{}, 1.0, cc), Error);
}

TEST(CombinedBatchLoss, SoftCERequiresTargets) {
  UnlabeledBatch ub;
  ub.logits = Matrix(1, 2, {0, 0});
  ub.targets = {{1, 1}};
  EXPECT_THROW(combined_batch_loss(LabeledBatch{}, ub, 1.0, LossConfig{LossKind::soft_ce, 1.0}), ConfigError);
}

TEST(ParseLoss, NamesRoundTrip) {
  for (auto k : {LossKind::cc, LossKind::rc, LossKind::cav, LossKind::lw, LossKind::soft_ce})
    EXPECT_EQ(parse_loss(to_string(k)), k);
  EXPECT_THROW(parse_loss("hinge"), ConfigError);
}

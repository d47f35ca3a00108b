#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cpl/core.hpp"

using namespace cpl;

TEST(Softmax, UniformForEqualLogits) {
  std::vector<double> z{0, 0, 0};
  auto p = softmax_row(z);
  for (double v : p) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Softmax, LogTwoGivesTwoThirds) {
  std::vector<double> z{std::log(2.0), 0.0};
  auto p = softmax_row(z);
  EXPECT_NEAR(p[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(p[1], 1.0 / 3.0, 1e-15);
}

TEST(Softmax, LargeLogitsDoNotOverflow) {
  std::vector<double> z{1000, 0};
  auto p = softmax_row(z);
  EXPECT_TRUE(std::isfinite(p[0]) && std::isfinite(p[1]));
  EXPECT_NEAR(p[0], 1.0, 1e-15);
  EXPECT_NEAR(p[1], 0.0, 1e-15);
}

TEST(Softmax, RejectsNonFinite) {
  std::vector<double> z{0, std::nan("")};
  EXPECT_THROW(softmax_row(z), Error);
  std::vector<double> inf{0, INFINITY};
  EXPECT_THROW(softmax_row(inf), Error);
}

TEST(Softmax, ShiftInvariance) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0, 3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> z(2 + trial % 9);
    for (double& v : z) v = g(rng);
    auto shifted = z;
    for (double& v : shifted) v += 1e3;
    auto a = softmax_row(z), b = softmax_row(shifted);
    double sum = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) {
      EXPECT_NEAR(a[k], b[k], 1e-9);
      EXPECT_GT(a[k], 0.0);
      sum += a[k];
    }
    EXPECT_NEAR(sum, 1.0, 1e-9);
    EXPECT_EQ(argmax(a), argmax(b));
  }
}

TEST(ConfidenceMatrix, RejectsNonStochasticRows) {
  EXPECT_THROW(ConfidenceMatrix(Matrix(1, 2, {0.5, 0.6})), ConfigError);
  EXPECT_THROW(ConfidenceMatrix(Matrix(1, 2, {1.2, -0.2})), ConfigError);
  EXPECT_NO_THROW(ConfidenceMatrix(Matrix(1, 2, {0.25, 0.75})));
}

TEST(ConfidenceMatrix, DerivedViews) {
  ConfidenceMatrix m(Matrix(2, 3, {0.2, 0.5, 0.3, 0.6, 0.1, 0.3}));
  EXPECT_EQ(m.column(1), (std::vector<double>{0.5, 0.1}));
  EXPECT_EQ(m.row_max(), (std::vector<double>{0.5, 0.6}));
}

TEST(CandidateAssignment, TargetsRoundTrip) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t c = 1 + trial % 12;
    std::vector<std::size_t> set;
    std::bernoulli_distribution keep(0.4);
    for (std::size_t k = 0; k < c; ++k)
      if (keep(rng)) set.push_back(k);
    auto s = CandidateAssignment::set_to_target(set, c);
    EXPECT_EQ(CandidateAssignment::target_to_set(s), set);
  }
}

TEST(DataContainer, ValidateCatchesBadLabelsAndShapes) {
  DataContainer d;
  d.c = 2;
  d.rows = Matrix(2, 3);
  d.labels = {0, 2};
  EXPECT_THROW(d.validate(), ConfigError);
  d.labels = {0, kUnlabeled};
  EXPECT_NO_THROW(d.validate());
  d.kind = DataKind::logits;
  EXPECT_THROW(d.validate(), ConfigError);
}

TEST(CurriculumState, DeltaSplitsPoolAcrossIterationsAndClasses) {
  auto s = CurriculumState::start(2000, 5, 10);
  EXPECT_EQ(s.delta, 40u);
  EXPECT_EQ(s.k_t, 40u);
  auto tiny = CurriculumState::start(3, 10, 10);
  EXPECT_EQ(tiny.delta, 1u);
  EXPECT_EQ(tiny.k_t, 1u);
}

TEST(ParallelFor, ResultsIndependentOfThreadCount) {
  std::vector<double> a(5000), b(5000);
  setenv("CPL_THREADS", "1", 1);
  parallel_for(a.size(), [&](std::size_t i) { a[i] = std::sin(static_cast<double>(i)); });
  setenv("CPL_THREADS", "4", 1);
  parallel_for(b.size(), [&](std::size_t i) { b[i] = std::sin(static_cast<double>(i)); }, 16);
  unsetenv("CPL_THREADS");
  EXPECT_EQ(a, b);
}

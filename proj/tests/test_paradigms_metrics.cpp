#include <gtest/gtest.h>

#include <random>
#include <set>

#include "cpl/metrics.hpp"
#include "cpl/paradigms.hpp"
#include "cpl/selection.hpp"
#include "oracle.hpp"

using namespace cpl;

namespace {

DataContainer labeled_data(std::size_t classes, std::size_t per_class) {
  DataContainer d;
  d.c = classes;
  d.rows = Matrix(classes * per_class, 2);
  for (std::size_t i = 0; i < d.n(); ++i) {
    d.labels.push_back(static_cast<int>(i % classes));
    d.rows(i, 0) = static_cast<double>(i);
  }
  return d;
}

std::vector<std::size_t> histogram(const DataContainer& d, std::span<const std::size_t> idx) {
  std::vector<std::size_t> h(d.c, 0);
  for (auto i : idx) ++h[static_cast<std::size_t>(d.labels[i])];
  return h;
}

}  // namespace

TEST(SplitSsl, ExactlyKPerClassAndDisjoint) {
  auto d = labeled_data(5, 12);
  auto s = split_ssl(d, 2, 7);
  EXPECT_EQ(histogram(d, s.labeled_indices), std::vector<std::size_t>(5, 2));
  EXPECT_EQ(s.labeled_indices.size() + s.unlabeled_indices.size(), d.n());
  std::set<std::size_t> all(s.labeled_indices.begin(), s.labeled_indices.end());
  for (auto i : s.unlabeled_indices) EXPECT_FALSE(all.count(i));
  auto again = split_ssl(d, 2, 7);
  EXPECT_EQ(again.labeled_indices, s.labeled_indices);
  EXPECT_NE(split_ssl(d, 2, 8).labeled_indices, s.labeled_indices);
}

TEST(SplitSsl, BoundaryAndErrors) {
  auto d = labeled_data(3, 4);
  EXPECT_TRUE(split_ssl(d, 4, 1).unlabeled_indices.empty());
  try {
    split_ssl(d, 5, 1);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("class 0"), std::string::npos);
  }
}

TEST(SplitTrzsl, SixtyTwoThirtyEight) {
  auto d = labeled_data(100, 3);
  auto s = split_trzsl(d, 0.62, 4);
  EXPECT_EQ(s.seen_classes.size(), 62u);
  EXPECT_EQ(s.unseen_classes.size(), 38u);
  std::set<std::size_t> seen(s.seen_classes.begin(), s.seen_classes.end());
  for (auto i : s.unlabeled_indices) EXPECT_FALSE(seen.count(static_cast<std::size_t>(d.labels[i])));
  for (auto i : s.labeled_indices) EXPECT_TRUE(seen.count(static_cast<std::size_t>(d.labels[i])));
  EXPECT_EQ(split_trzsl(d, 0.62, 4).seen_classes, s.seen_classes);
}

TEST(SplitTrzsl, TwoClassesAndErrors) {
  auto d = labeled_data(2, 3);
  auto s = split_trzsl(d, 0.5, 0);
  EXPECT_EQ(s.seen_classes.size(), 1u);
  EXPECT_EQ(s.unseen_classes.size(), 1u);
  EXPECT_THROW(split_trzsl(labeled_data(1, 3), 0.5, 0), ConfigError);
  EXPECT_THROW(split_trzsl(d, 0.1, 0), ConfigError);
}

TEST(Imbalance, ExponentialProfile) {
  auto counts = imbalance_profile(500, 10, 100.0);
  EXPECT_EQ(counts.front(), 500u);
  EXPECT_EQ(counts.back(), 5u);
  for (std::size_t r = 1; r < counts.size(); ++r) EXPECT_LE(counts[r], counts[r - 1]);
  EXPECT_EQ(imbalance_profile(500, 10, 1.0), std::vector<std::size_t>(10, 500));
}

TEST(Imbalance, SubsetFollowsProfile) {
  auto d = labeled_data(10, 100);
  for (double delta : {50.0, 100.0}) {
    auto imb = make_imbalanced(d, delta, 3);
    auto h = histogram(imb, std::vector<std::size_t>([&] {
      std::vector<std::size_t> all(imb.n());
      std::iota(all.begin(), all.end(), 0);
      return all;
    }()));
    auto [lo, hi] = std::minmax_element(h.begin(), h.end());
    EXPECT_EQ(*hi, 100u);
    EXPECT_EQ(*lo, static_cast<std::size_t>(std::lround(100.0 / delta)));
    auto sorted = h;
    std::sort(sorted.rbegin(), sorted.rend());
    EXPECT_EQ(sorted, imbalance_profile(100, 10, delta));
  }
  EXPECT_EQ(make_imbalanced(d, 1.0, 3).n(), d.n());
  EXPECT_THROW(make_imbalanced(d, 0.5, 3), ConfigError);
}

TEST(Imbalance, ZeroCountClampsToOne) {
  std::size_t warnings = 0;
  auto saved = warning_sink();
  warning_sink() = [&](const std::string&) { ++warnings; };
  auto counts = imbalance_profile(10, 2, 1000.0);  // 10 * 1000^-1 rounds to 0
  warning_sink() = saved;
  EXPECT_EQ(counts.back(), 1u);
  EXPECT_EQ(warnings, 1u);
}

TEST(HarmonicMean, Formula) {
  EXPECT_NEAR(harmonic_mean(0.8, 0.4), 0.5333333333333333, 1e-9);
  EXPECT_DOUBLE_EQ(harmonic_mean(0.3, 0.3), 0.3);
  EXPECT_EQ(harmonic_mean(0.7, 0.0), 0.0);
  EXPECT_EQ(harmonic_mean(0.0, 0.0), 0.0);
}

TEST(FewShot, CapsPerClassAndMasksLabels) {
  auto d = labeled_data(4, 30);
  auto sub = fewshot_unlabeled_subsample(d, 16, 5);
  EXPECT_EQ(sub.n(), 64u);
  for (int y : sub.labels) EXPECT_EQ(y, kUnlabeled);
  std::vector<std::size_t> all(d.n());
  std::iota(all.begin(), all.end(), 0);
  auto idx = fewshot_indices(d, all, 16, 5);
  EXPECT_EQ(histogram(d, idx), std::vector<std::size_t>(4, 16));
  EXPECT_EQ(fewshot_indices(d, all, 16, 5), idx);
  EXPECT_EQ(fewshot_indices(d, all, 1000, 5), all);
}

TEST(FewShot, EmptyClassIsSkippedWithWarning) {
  auto d = labeled_data(3, 5);
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < d.n(); ++i)
    if (d.labels[i] != 2) pool.push_back(i);
  std::size_t warnings = 0;
  auto saved = warning_sink();
  warning_sink() = [&](const std::string&) { ++warnings; };
  auto idx = fewshot_indices(d, pool, 2, 0);
  warning_sink() = saved;
  EXPECT_EQ(idx.size(), 4u);
  EXPECT_EQ(warnings, 1u);
}

TEST(Metrics, Top1) {
  std::vector<std::size_t> p{0, 1, 2, 1};
  EXPECT_EQ(top1_accuracy(p, std::vector<int>{0, 1, 2, 1}), 1.0);
  EXPECT_EQ(top1_accuracy(p, std::vector<int>{1, 0, 0, 0}), 0.0);
  EXPECT_EQ(top1_accuracy(p, std::vector<int>{0, 1, 2, 2}), 0.75);
  EXPECT_THROW(top1_accuracy(std::vector<std::size_t>{}, std::vector<int>{}), ConfigError);
}

TEST(Metrics, LabelEstimation) {
  CandidateAssignment a;
  a.c = 3;
  a.sets = {{0}, {1}};
  auto le = label_estimation_accuracy(a, std::vector<int>{0, 0});
  EXPECT_EQ(le.nonempty, 0.5);
  a.sets = {{0, 1, 2}, {0, 1, 2}};
  EXPECT_EQ(label_estimation_accuracy(a, std::vector<int>{2, 1}).nonempty, 1.0);
  a.sets = {{0}, {}};
  le = label_estimation_accuracy(a, std::vector<int>{0, 1});
  EXPECT_EQ(le.nonempty, 1.0);
  EXPECT_EQ(le.all, 0.5);
  EXPECT_THROW(label_estimation_accuracy(a, std::vector<int>{kUnlabeled, kUnlabeled}), ConfigError);
}

TEST(Metrics, CandidateSizeAndFrequency) {
  CandidateAssignment a;
  a.c = 3;
  a.sets = {{0}, {1}, {2}};
  EXPECT_EQ(avg_candidate_size(a), 1.0);
  a.sets = {{0}, {0, 1, 2}, {}};
  EXPECT_EQ(avg_candidate_size(a), 2.0);
  a.sets = {{0}, {0, 1}};
  EXPECT_EQ(class_frequency(a), (std::vector<std::uint64_t>{2, 1, 0}));
  CandidateAssignment empty;
  empty.c = 4;
  EXPECT_EQ(class_frequency(empty), std::vector<std::uint64_t>(4, 0));
  empty.sets = {{}, {}};
  EXPECT_THROW(avg_candidate_size(empty), Error);
}

TEST(Metrics, ConfusionCounts) {
  std::vector<int> labels{0, 0, 1, 1, 1};
  auto perfect = confusion(std::vector<std::size_t>{0, 0, 1, 1, 1}, labels, 2);
  EXPECT_EQ(perfect.counts, (std::vector<std::uint64_t>{2, 0, 0, 3}));
  auto constant = confusion(std::vector<std::size_t>{1, 1, 1, 1, 1}, labels, 2);
  EXPECT_EQ(constant.counts, (std::vector<std::uint64_t>{0, 2, 0, 3}));
  auto hand = confusion(std::vector<std::size_t>{0, 1, 1, 0, 1}, labels, 2);
  EXPECT_EQ(hand.counts, (std::vector<std::uint64_t>{1, 1, 1, 2}));
  EXPECT_EQ(per_class_accuracy(hand), (std::vector<double>{0.5, 2.0 / 3.0}));
}

TEST(Metrics, PerClassAccuracyAveragesToTop1) {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<int> cls(0, 4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> labels(60);
    std::vector<std::size_t> preds(60);
    for (std::size_t i = 0; i < 60; ++i) {
      labels[i] = cls(rng);
      preds[i] = static_cast<std::size_t>(cls(rng) < 2 ? labels[i] : cls(rng));
    }
    auto cm = confusion(preds, labels, 5);
    auto acc = per_class_accuracy(cm);
    double weighted = 0.0;
    for (std::size_t c = 0; c < 5; ++c) {
      std::uint64_t row = 0;
      for (std::size_t p = 0; p < 5; ++p) row += cm(c, p);
      weighted += acc[c] * static_cast<double>(row);
    }
    EXPECT_NEAR(weighted / 60.0, top1_accuracy(preds, labels), 1e-12);
  }
}

TEST(Metrics, EstimationAtLeastHardAccuracyWithoutInterSelection) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> ratio(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    ConfidenceMatrix conf(oracle::random_confidences(rng, 40, 6));
    std::uniform_int_distribution<int> cls(0, 5);
    std::vector<int> labels(40);
    for (int& y : labels) y = cls(rng);
    auto a = generate_candidates(conf, SelectionParams{ratio(rng), std::nullopt});
    auto hard = top1_accuracy(argmax_rows(conf.matrix()), labels);
    EXPECT_GE(label_estimation_accuracy(a, labels).nonempty, hard);
    std::size_t mass = 0;
    for (const auto& set : a.sets) mass += set.size();
    auto freq = class_frequency(a);
    EXPECT_EQ(std::accumulate(freq.begin(), freq.end(), std::uint64_t{0}), mass);
  }
}

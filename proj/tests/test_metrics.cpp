#include "nanet/error.hpp"
#include "nanet/metrics.hpp"
#include "nanet/random.hpp"

#include <gtest/gtest.h>

using namespace nanet;

namespace {

// Straight per-class recomputation from the raw counts.
Metrics brute_force(const ConfusionMatrix &cm) {
  const int k = cm.classes();
  Metrics m;
  double p_sum = 0, r_sum = 0, f_sum = 0;
  std::int64_t correct = 0, total = 0;
  for (int c = 0; c < k; ++c) {
    std::int64_t tp = cm.at(c, c), fp = 0, fn = 0;
    for (int o = 0; o < k; ++o) {
      if (o == c)
        continue;
      fp += cm.at(o, c);
      fn += cm.at(c, o);
    }
    const double p = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double r = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    const double f = p + r == 0 ? 0.0 : 2 * p * r / (p + r);
    m.per_class_precision.push_back(p);
    m.per_class_recall.push_back(r);
    m.per_class_f1.push_back(f);
    p_sum += p;
    r_sum += r;
    f_sum += f;
    correct += tp;
    for (int o = 0; o < k; ++o)
      total += cm.at(c, o);
  }
  m.accuracy = static_cast<double>(correct) / static_cast<double>(total);
  m.precision = p_sum / k;
  m.recall = r_sum / k;
  m.f1 = f_sum / k;
  return m;
}

} // namespace

TEST(Metrics, DiagonalIsPerfect) {
  ConfusionMatrix cm;
  for (int c = 0; c < 26; ++c)
    cm.add(c, c, 10);
  const auto m = compute_metrics(cm);
  EXPECT_EQ(round_percent(m.accuracy), 100.0);
  EXPECT_EQ(round_percent(m.precision), 100.0);
  EXPECT_EQ(round_percent(m.recall), 100.0);
  EXPECT_EQ(round_percent(m.f1), 100.0);
}

TEST(Metrics, TwoClassToy) {
  ConfusionMatrix cm(2);
  cm.add(0, 0, 8);
  cm.add(0, 1, 2);
  cm.add(1, 0, 3);
  cm.add(1, 1, 7);
  const auto m = compute_metrics(cm);
  EXPECT_DOUBLE_EQ(m.per_class_precision[0], 8.0 / 11.0);
  EXPECT_DOUBLE_EQ(m.per_class_recall[0], 0.8);
  EXPECT_NEAR(m.per_class_f1[0], 0.7619, 1e-4);
  EXPECT_DOUBLE_EQ(m.accuracy, 15.0 / 20.0);
}

TEST(Metrics, AbsentClassContributesZero) {
  ConfusionMatrix cm(3);
  cm.add(0, 0, 5);
  cm.add(1, 1, 5);
  const auto m = compute_metrics(cm);
  EXPECT_EQ(m.per_class_precision[2], 0.0);
  EXPECT_EQ(m.per_class_recall[2], 0.0);
  EXPECT_EQ(m.per_class_f1[2], 0.0);
  EXPECT_DOUBLE_EQ(m.precision, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.accuracy, 1.0);
}

TEST(Metrics, AgreesWithBruteForceOnRandomMatrices) {
  Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    ConfusionMatrix cm;
    const int fill = 1 + static_cast<int>(rng.below(400));
    for (int i = 0; i < fill; ++i) {
      const int t = static_cast<int>(rng.below(26));
      // Bias towards the diagonal so both regimes occur.
      const int p = rng.bernoulli(0.6) ? t : static_cast<int>(rng.below(26));
      cm.add(t, p);
    }
    const auto got = compute_metrics(cm);
    const auto want = brute_force(cm);
    EXPECT_EQ(got.accuracy, want.accuracy) << trial;
    EXPECT_EQ(got.precision, want.precision) << trial;
    EXPECT_EQ(got.recall, want.recall) << trial;
    EXPECT_EQ(got.f1, want.f1) << trial;
    EXPECT_EQ(got.per_class_f1, want.per_class_f1) << trial;
    EXPECT_GE(got.f1, 0.0);
    EXPECT_LE(got.f1, 1.0);
  }
}

TEST(Metrics, AccuracyFormatting) {
  EXPECT_EQ(round_percent(252.0 / 260.0), 96.92);
  EXPECT_EQ(round_percent(243.0 / 260.0), 93.46);
  EXPECT_EQ(round_percent(256.0 / 260.0), 98.46);
  EXPECT_EQ(round_percent(1.0 / 26.0), 3.85);
}

TEST(Metrics, ConstantPredictor) {
  ConfusionMatrix cm;
  for (int c = 0; c < 26; ++c)
    cm.add(c, 0, 10);
  const auto m = compute_metrics(cm);
  EXPECT_EQ(round_percent(m.accuracy), 3.85);
  EXPECT_EQ(round_percent(m.recall), 3.85);
}

TEST(Metrics, AccuracyEqualsMicroAverages) {
  Rng rng(5);
  ConfusionMatrix cm;
  for (int i = 0; i < 500; ++i)
    cm.add(static_cast<int>(rng.below(26)), static_cast<int>(rng.below(26)));
  // Micro precision = micro recall = sum TP / total for single-label data.
  EXPECT_DOUBLE_EQ(compute_metrics(cm).accuracy,
                   static_cast<double>(cm.trace()) / static_cast<double>(cm.total()));
}

TEST(Metrics, EmptyMatrixThrows) { EXPECT_THROW(compute_metrics(ConfusionMatrix{}), EmptyMatrix); }

TEST(Metrics, OutOfRangeClass) {
  ConfusionMatrix cm;
  EXPECT_THROW(cm.add(26, 0), InvalidLabel);
  EXPECT_THROW(cm.add(0, -1), InvalidLabel);
}

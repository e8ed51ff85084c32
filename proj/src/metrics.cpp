#include "nanet/metrics.hpp"

#include "nanet/error.hpp"

#include <cmath>
#include <numeric>
#include <string>

namespace nanet {

ConfusionMatrix::ConfusionMatrix(int classes)
    : classes_(classes), counts_(static_cast<std::size_t>(classes) * classes, 0) {
  if (classes < 1)
    throw InvalidSpec("confusion matrix needs at least one class");
}

void ConfusionMatrix::add(int truth, int predicted, std::int64_t count) {
  if (truth < 0 || truth >= classes_ || predicted < 0 || predicted >= classes_)
    throw InvalidLabel("confusion index out of range");
  if (count < 0)
    throw InvalidSpec("confusion counts must be non-negative");
  counts_[static_cast<std::size_t>(truth) * classes_ + predicted] += count;
}

std::int64_t ConfusionMatrix::at(int truth, int predicted) const {
  return counts_.at(static_cast<std::size_t>(truth) * classes_ + predicted);
}

std::int64_t ConfusionMatrix::total() const noexcept {
  return std::accumulate(counts_.begin(), counts_.end(), std::int64_t{0});
}

std::int64_t ConfusionMatrix::trace() const noexcept {
  std::int64_t t = 0;
  for (int i = 0; i < classes_; ++i)
    t += counts_[static_cast<std::size_t>(i) * classes_ + i];
  return t;
}

Metrics compute_metrics(const ConfusionMatrix &cm) {
  const std::int64_t total = cm.total();
  if (total <= 0)
    throw EmptyMatrix("confusion matrix has no entries");
  const int k = cm.classes();
  std::vector<std::int64_t> row_sum(static_cast<std::size_t>(k), 0), col_sum(row_sum);
  for (int t = 0; t < k; ++t)
    for (int p = 0; p < k; ++p) {
      row_sum[static_cast<std::size_t>(t)] += cm.at(t, p);
      col_sum[static_cast<std::size_t>(p)] += cm.at(t, p);
    }

  Metrics m;
  m.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(total);
  for (int c = 0; c < k; ++c) {
    const auto tp = static_cast<double>(cm.at(c, c));
    const auto fp = static_cast<double>(col_sum[static_cast<std::size_t>(c)]) - tp;
    const auto fn = static_cast<double>(row_sum[static_cast<std::size_t>(c)]) - tp;
    const double precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    const double f1 =
        precision + recall > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    m.per_class_precision.push_back(precision);
    m.per_class_recall.push_back(recall);
    m.per_class_f1.push_back(f1);
  }
  auto mean = [k](const std::vector<double> &v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(k);
  };
  m.precision = mean(m.per_class_precision);
  m.recall = mean(m.per_class_recall);
  m.f1 = mean(m.per_class_f1);
  return m;
}

double round_percent(double fraction) { return std::round(fraction * 100.0 * 100.0) / 100.0; }

} // namespace nanet

#pragma once

#include <cstdint>
#include <vector>

namespace nanet {

/// Square count matrix, rows = true class, columns = predicted class.
class ConfusionMatrix {
public:
  explicit ConfusionMatrix(int classes = 26);

  int classes() const noexcept { return classes_; }
  void add(int truth, int predicted, std::int64_t count = 1);
  std::int64_t at(int truth, int predicted) const;
  std::int64_t total() const noexcept;
  std::int64_t trace() const noexcept;

  bool operator==(const ConfusionMatrix &) const = default;

private:
  int classes_;
  std::vector<std::int64_t> counts_;
};

/// Fractions in [0,1].
struct Metrics {
  double accuracy = 0;
  double precision = 0; ///< macro average
  double recall = 0;    ///< macro average
  double f1 = 0;        ///< macro average of per-class F1
  std::vector<double> per_class_precision;
  std::vector<double> per_class_recall;
  std::vector<double> per_class_f1;
};

/// One-vs-rest TP/FP/FN per class; any zero denominator contributes 0.
/// Throws EmptyMatrix when nothing was counted.
Metrics compute_metrics(const ConfusionMatrix &cm);

/// Percentage rounded half away from zero to two decimals, e.g. 252/260 -> 96.92.
double round_percent(double fraction);

} // namespace nanet

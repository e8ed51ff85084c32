#pragma once

#include "nanet/tensor/ops.hpp"
#include "nanet/tensor/tensor.hpp"

#include <cmath>
#include <span>

namespace nanet::tensor {

/// Mean squared error over every element: (1/n) * sum (pred - target)^2.
template <typename T> Tensor<T> mse_loss(const Tensor<T> &pred, const Tensor<T> &target) {
  if (pred.shape() != target.shape())
    throw ShapeMismatch("mse_loss: " + shape_str(pred.shape()) + " vs " +
                        shape_str(target.shape()));
  if (pred.numel() == 0)
    throw ShapeMismatch("mse_loss on empty tensors");
  const std::size_t n = pred.numel();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(pred.values()[i]) - static_cast<double>(target.values()[i]);
    acc += d * d;
  }
  Tensor<T> out(Shape{}, static_cast<T>(acc / static_cast<double>(n)));
  if (detail::any_requires_grad<T>({&pred, &target})) {
    auto ps = pred.storage(), ts = target.storage();
    Storage<T> *os = out.storage().get();
    Tape<T>::current().record(out, [ps, ts, os, n] {
      const T scale = os->grad[0] * T(2) / static_cast<T>(n);
      if (ps->requires_grad) {
        ps->ensure_grad();
        for (std::size_t i = 0; i < n; ++i)
          ps->grad[i] += scale * (ps->values[i] - ts->values[i]);
      }
      if (ts->requires_grad) {
        ts->ensure_grad();
        for (std::size_t i = 0; i < n; ++i)
          ts->grad[i] -= scale * (ps->values[i] - ts->values[i]);
      }
    });
  }
  return out;
}

/// Mean negative log-likelihood of `labels` under softmax(logits).
/// logits (N,C) are raw scores; labels are class indices in [0,C).
template <typename T>
Tensor<T> cross_entropy(const Tensor<T> &logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) == 0 || logits.dim(1) == 0)
    throw ShapeMismatch("cross_entropy expects non-empty (N,C) logits, got " +
                        shape_str(logits.shape()));
  const std::size_t N = logits.dim(0), C = logits.dim(1);
  if (labels.size() != N)
    throw ShapeMismatch("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                        std::to_string(N) + " rows");
  for (int l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= C)
      throw InvalidLabel("class index " + std::to_string(l) + " outside [0," +
                         std::to_string(C) + ")");

  double acc = 0.0;
  for (std::size_t n = 0; n < N; ++n) {
    const T *row = logits.values().data() + n * C;
    acc += static_cast<double>(detail::log_sum_exp(row, C) - row[labels[n]]);
  }
  Tensor<T> out(Shape{}, static_cast<T>(acc / static_cast<double>(N)));
  if (detail::any_requires_grad<T>({&logits})) {
    auto xs = logits.storage();
    Storage<T> *os = out.storage().get();
    std::vector<int> labs(labels.begin(), labels.end());
    Tape<T>::current().record(out, [xs, os, labs = std::move(labs), N, C] {
      xs->ensure_grad();
      const T scale = os->grad[0] / static_cast<T>(N);
      for (std::size_t n = 0; n < N; ++n) {
        const T *row = xs->values.data() + n * C;
        const T lse = detail::log_sum_exp(row, C);
        for (std::size_t j = 0; j < C; ++j) {
          const T p = std::exp(row[j] - lse);
          xs->grad[n * C + j] += scale * (p - (static_cast<int>(j) == labs[n] ? T(1) : T(0)));
        }
      }
    });
  }
  return out;
}

/// Joint objective: reconstruction MSE plus classification cross-entropy.
template <typename T> Tensor<T> total_loss(const Tensor<T> &mse, const Tensor<T> &ce) {
  if (mse.numel() != 1 || ce.numel() != 1)
    throw ShapeMismatch("total_loss expects two scalars");
  return add(mse, ce);
}

} // namespace nanet::tensor

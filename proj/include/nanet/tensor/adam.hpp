#pragma once

#include "nanet/tensor/tensor.hpp"

#include <cmath>
#include <vector>

namespace nanet::tensor {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction. Moments start at zero; every parameter is
/// updated independently of the others.
template <typename T> class Adam {
public:
  Adam(std::vector<Tensor<T>> params, AdamOptions options = {})
      : params_(std::move(params)), options_(options) {
    for (const auto &p : params_) {
      m_.emplace_back(p.numel(), T(0));
      v_.emplace_back(p.numel(), T(0));
    }
  }

  void zero_grad() {
    for (auto &p : params_)
      p.zero_grad();
  }

  /// One update from the gradients currently stored on the parameters.
  /// Parameters without a gradient slot are treated as having zero gradient.
  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
    const T b1 = static_cast<T>(options_.beta1), b2 = static_cast<T>(options_.beta2);
    const T lr = static_cast<T>(options_.lr), eps = static_cast<T>(options_.epsilon);
    const T inv_bc1 = static_cast<T>(1.0 / bc1), inv_bc2 = static_cast<T>(1.0 / bc2);
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto &p = params_[k];
      auto values = p.mutable_values();
      if (!p.has_grad())
        p.zero_grad();
      const auto grad = p.grad();
      if (grad.size() != values.size())
        throw ShapeMismatch("adam: gradient size differs from parameter size");
      auto &m = m_[k];
      auto &v = v_[k];
      for (std::size_t i = 0; i < values.size(); ++i) {
        const T g = grad[i];
        m[i] = b1 * m[i] + (T(1) - b1) * g;
        v[i] = b2 * v[i] + (T(1) - b2) * g * g;
        const T m_hat = m[i] * inv_bc1;
        const T v_hat = v[i] * inv_bc2;
        values[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
      }
    }
  }

  std::size_t step_count() const noexcept { return t_; }
  const AdamOptions &options() const noexcept { return options_; }
  const std::vector<T> &first_moment(std::size_t k) const { return m_.at(k); }
  const std::vector<T> &second_moment(std::size_t k) const { return v_.at(k); }
  const std::vector<Tensor<T>> &params() const noexcept { return params_; }

private:
  std::vector<Tensor<T>> params_;
  AdamOptions options_;
  std::vector<std::vector<T>> m_, v_;
  std::size_t t_ = 0;
};

} // namespace nanet::tensor

#pragma once

#include "nanet/error.hpp"

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace nanet::tensor {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape &shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape &shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i)
      s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

template <typename T> struct Storage {
  Shape shape;
  std::vector<T> values;
  std::vector<T> grad;
  bool has_grad = false;
  bool requires_grad = false;
  // Position of the producing op on the owning tape; npos for leaves.
  std::uint64_t tape_epoch = 0;
  std::size_t tape_index = std::numeric_limits<std::size_t>::max();

  void ensure_grad() {
    if (!has_grad) {
      grad.assign(values.size(), T(0));
      has_grad = true;
    }
  }
};

template <typename T> class Tape;

/// Shared handle to a dense row-major array. Copies alias the same storage;
/// ops never write into their inputs.
template <typename T> class Tensor {
public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0)) : impl_(std::make_shared<Storage<T>>()) {
    impl_->values.assign(tensor::numel(shape), fill);
    impl_->shape = std::move(shape);
  }

  Tensor(Shape shape, std::vector<T> values) : impl_(std::make_shared<Storage<T>>()) {
    if (tensor::numel(shape) != values.size())
      throw ShapeMismatch("tensor of shape " + shape_str(shape) + " given " +
                          std::to_string(values.size()) + " values");
    impl_->shape = std::move(shape);
    impl_->values = std::move(values);
  }

  bool defined() const noexcept { return impl_ != nullptr; }

  const Shape &shape() const { return impl_->shape; }
  std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->values.size(); }

  std::span<const T> values() const { return impl_->values; }
  /// Direct write access, meant for leaves (initialisers, optimisers).
  std::span<T> mutable_values() { return impl_->values; }
  T item() const {
    if (numel() != 1)
      throw ShapeMismatch("item() on tensor of shape " + shape_str(shape()));
    return impl_->values[0];
  }

  bool requires_grad() const noexcept { return impl_ && impl_->requires_grad; }
  Tensor &set_requires_grad(bool on = true) {
    impl_->requires_grad = on;
    return *this;
  }

  bool has_grad() const noexcept { return impl_ && impl_->has_grad; }
  std::span<const T> grad() const { return impl_->grad; }
  std::span<T> mutable_grad() {
    impl_->ensure_grad();
    return impl_->grad;
  }
  void zero_grad() {
    impl_->grad.assign(impl_->values.size(), T(0));
    impl_->has_grad = true;
  }
  void clear_grad() {
    impl_->grad.clear();
    impl_->has_grad = false;
  }

  /// Graph-free copy of the values.
  Tensor detach() const { return Tensor(shape(), impl_->values); }

  const std::shared_ptr<Storage<T>> &storage() const noexcept { return impl_; }
  bool same_storage(const Tensor &other) const noexcept { return impl_ == other.impl_; }

private:
  std::shared_ptr<Storage<T>> impl_;
};

/// Records differentiable ops in execution order, which is a topological
/// order of the graph. One tape per thread and scalar type.
template <typename T> class Tape {
public:
  static Tape &current() {
    thread_local Tape tape;
    return tape;
  }

  bool enabled() const noexcept { return enabled_; }
  void set_enabled(bool on) noexcept { enabled_ = on; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Registers `out` as produced by an op whose adjoint is `backward`.
  void record(const Tensor<T> &out, std::function<void()> backward) {
    auto &s = *out.storage();
    s.requires_grad = true;
    s.tape_epoch = epoch_;
    s.tape_index = nodes_.size();
    nodes_.push_back({out.storage(), std::move(backward)});
  }

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded adjoint up to the
  /// loss in exact reverse order, then clears the tape.
  void backward(const Tensor<T> &loss) {
    if (!loss.defined() || loss.numel() != 1)
      throw ShapeMismatch("backward() needs a scalar loss");
    const auto &s = *loss.storage();
    if (!s.requires_grad)
      throw DisconnectedGraph("loss does not depend on any tensor that requires grad");
    if (s.tape_epoch != epoch_ || s.tape_index >= nodes_.size() ||
        nodes_[s.tape_index].output != loss.storage())
      throw DisconnectedGraph("loss was not produced on the current tape");

    loss.storage()->ensure_grad();
    loss.storage()->grad[0] += T(1);
    for (std::size_t i = s.tape_index + 1; i-- > 0;) {
      auto &node = nodes_[i];
      if (node.output->has_grad)
        node.backward();
    }
    clear();
  }

  /// Drops the recorded graph without running it.
  void clear() {
    nodes_.clear();
    ++epoch_;
  }

private:
  struct Node {
    std::shared_ptr<Storage<T>> output;
    std::function<void()> backward;
  };
  std::vector<Node> nodes_;
  std::uint64_t epoch_ = 1;
  bool enabled_ = true;
};

template <typename T> void backward(const Tensor<T> &loss) { Tape<T>::current().backward(loss); }

/// Disables recording on this thread's tape for its lifetime.
template <typename T> class NoGradGuard {
public:
  NoGradGuard() : previous_(Tape<T>::current().enabled()) {
    Tape<T>::current().set_enabled(false);
  }
  ~NoGradGuard() { Tape<T>::current().set_enabled(previous_); }
  NoGradGuard(const NoGradGuard &) = delete;
  NoGradGuard &operator=(const NoGradGuard &) = delete;

private:
  bool previous_;
};

namespace detail {

template <typename T> bool any_requires_grad(std::initializer_list<const Tensor<T> *> inputs) {
  if (!Tape<T>::current().enabled())
    return false;
  for (const auto *t : inputs)
    if (t && t->defined() && t->requires_grad())
      return true;
  return false;
}

template <typename T> bool wants_grad(const std::shared_ptr<Storage<T>> &s) {
  return s && s->requires_grad;
}

} // namespace detail

} // namespace nanet::tensor

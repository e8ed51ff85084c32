#pragma once

#include "nanet/random.hpp"
#include "nanet/tensor/conv.hpp"
#include "nanet/tensor/tensor.hpp"

#include <cmath>

namespace nanet::tensor {

template <typename T> Tensor<T> reshape(const Tensor<T> &x, Shape shape) {
  if (numel(shape) != x.numel())
    throw ShapeMismatch("cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  Tensor<T> out(std::move(shape), std::vector<T>(x.values().begin(), x.values().end()));
  if (detail::any_requires_grad<T>({&x})) {
    auto xs = x.storage();
    Storage<T> *os = out.storage().get();
    Tape<T>::current().record(out, [xs, os] {
      xs->ensure_grad();
      for (std::size_t i = 0; i < os->grad.size(); ++i)
        xs->grad[i] += os->grad[i];
    });
  }
  return out;
}

/// Scalar view of one element, e.g. a single class score.
template <typename T> Tensor<T> pick(const Tensor<T> &x, std::size_t index) {
  if (index >= x.numel())
    throw ShapeMismatch("pick: index " + std::to_string(index) + " outside " + shape_str(x.shape()));
  Tensor<T> out(Shape{}, x.values()[index]);
  if (detail::any_requires_grad<T>({&x})) {
    auto xs = x.storage();
    Storage<T> *os = out.storage().get();
    Tape<T>::current().record(out, [xs, os, index] {
      xs->ensure_grad();
      xs->grad[index] += os->grad[0];
    });
  }
  return out;
}

template <typename T> Tensor<T> add(const Tensor<T> &a, const Tensor<T> &b) {
  if (a.shape() != b.shape())
    throw ShapeMismatch("add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> out(a.shape());
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < o.size(); ++i)
    o[i] = a.values()[i] + b.values()[i];
  if (detail::any_requires_grad<T>({&a, &b})) {
    auto as = a.storage(), bs = b.storage();
    Storage<T> *os = out.storage().get();
    Tape<T>::current().record(out, [as, bs, os] {
      for (auto *s : {as.get(), bs.get()}) {
        if (!s->requires_grad)
          continue;
        s->ensure_grad();
        for (std::size_t i = 0; i < os->grad.size(); ++i)
          s->grad[i] += os->grad[i];
      }
    });
  }
  return out;
}

template <typename T> Tensor<T> relu(const Tensor<T> &x) {
  Tensor<T> out(x.shape());
  auto o = out.mutable_values();
  const auto v = x.values();
  for (std::size_t i = 0; i < o.size(); ++i)
    o[i] = v[i] > T(0) ? v[i] : T(0);
  if (detail::any_requires_grad<T>({&x})) {
    auto xs = x.storage();
    Storage<T> *os = out.storage().get();
    Tape<T>::current().record(out, [xs, os] {
      xs->ensure_grad();
      for (std::size_t i = 0; i < os->grad.size(); ++i)
        if (xs->values[i] > T(0))
          xs->grad[i] += os->grad[i];
    });
  }
  return out;
}

template <typename T> Tensor<T> sigmoid(const Tensor<T> &x) {
  Tensor<T> out(x.shape());
  auto o = out.mutable_values();
  const auto v = x.values();
  for (std::size_t i = 0; i < o.size(); ++i)
    o[i] = v[i] >= T(0) ? T(1) / (T(1) + std::exp(-v[i]))
                        : std::exp(v[i]) / (T(1) + std::exp(v[i]));
  if (detail::any_requires_grad<T>({&x})) {
    auto xs = x.storage();
    Storage<T> *os = out.storage().get();
    Tape<T>::current().record(out, [xs, os] {
      xs->ensure_grad();
      for (std::size_t i = 0; i < os->grad.size(); ++i) {
        const T y = os->values[i];
        xs->grad[i] += os->grad[i] * y * (T(1) - y);
      }
    });
  }
  return out;
}

/// Inverted dropout: survivors are scaled by 1/(1-p) during training so
/// evaluation is the identity. The mask is drawn from `rng` in element order.
template <typename T> Tensor<T> dropout(const Tensor<T> &x, double p, bool training, Rng &rng) {
  if (p < 0.0 || p >= 1.0)
    throw InvalidSpec("dropout probability must lie in [0,1)");
  if (!training || p == 0.0)
    return x;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  auto mask = std::make_shared<std::vector<T>>(x.numel());
  for (auto &m : *mask)
    m = rng.uniform() < p ? T(0) : keep_scale;
  Tensor<T> out(x.shape());
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < o.size(); ++i)
    o[i] = x.values()[i] * (*mask)[i];
  if (detail::any_requires_grad<T>({&x})) {
    auto xs = x.storage();
    Storage<T> *os = out.storage().get();
    Tape<T>::current().record(out, [xs, os, mask] {
      xs->ensure_grad();
      for (std::size_t i = 0; i < os->grad.size(); ++i)
        xs->grad[i] += os->grad[i] * (*mask)[i];
    });
  }
  return out;
}

/// input (N,F), weight (O,F), bias (O) -> input * weight^T + bias.
template <typename T>
Tensor<T> linear(const Tensor<T> &input, const Tensor<T> &weight, const Tensor<T> &bias) {
  using namespace detail;
  if (input.rank() != 2 || weight.rank() != 2 || input.dim(1) != weight.dim(1))
    throw ShapeMismatch("linear: input " + shape_str(input.shape()) + " incompatible with weight " +
                        shape_str(weight.shape()));
  const std::size_t N = input.dim(0), F = input.dim(1), O = weight.dim(0);
  check_bias(bias, O, "linear");
  Tensor<T> out({N, O});
  MatMap<T> y(out.mutable_values().data(), N, O);
  y.noalias() = ConstMatMap<T>(input.values().data(), N, F) *
                ConstMatMap<T>(weight.values().data(), O, F).transpose();
  if (bias.defined())
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t o = 0; o < O; ++o)
        y(n, o) += bias.values()[o];

  if (any_requires_grad<T>({&input, &weight, &bias})) {
    auto xs = input.storage(), ws = weight.storage();
    auto bs = bias.defined() ? bias.storage() : nullptr;
    Storage<T> *os = out.storage().get();
    Tape<T>::current().record(out, [xs, ws, bs, os, N, F, O] {
      const ConstMatMap<T> dy(os->grad.data(), N, O);
      if (wants_grad(xs)) {
        xs->ensure_grad();
        MatMap<T>(xs->grad.data(), N, F).noalias() += dy * ConstMatMap<T>(ws->values.data(), O, F);
      }
      if (wants_grad(ws)) {
        ws->ensure_grad();
        MatMap<T>(ws->grad.data(), O, F).noalias() +=
            dy.transpose() * ConstMatMap<T>(xs->values.data(), N, F);
      }
      if (wants_grad(bs)) {
        bs->ensure_grad();
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t o = 0; o < O; ++o)
            bs->grad[o] += dy(n, o);
      }
    });
  }
  return out;
}

/// k x k max pooling, no padding, floor output size. Ties go to the first
/// maximum in scan order.
template <typename T> Tensor<T> max_pool2d(const Tensor<T> &x, std::size_t k, std::size_t stride) {
  if (x.rank() != 4)
    throw ShapeMismatch("max_pool2d expects 4-D input, got " + shape_str(x.shape()));
  if (k == 0 || stride == 0)
    throw ShapeMismatch("max_pool2d: kernel and stride must be positive");
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H < k || W < k)
    throw ShapeMismatch("max_pool2d: " + std::to_string(k) + "x" + std::to_string(k) +
                        " window does not fit input " + shape_str(x.shape()));
  const std::size_t OH = (H - k) / stride + 1, OW = (W - k) / stride + 1;
  Tensor<T> out({N, C, OH, OW});
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.numel());
  auto o = out.mutable_values();
  const auto v = x.values();
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    const std::size_t base = nc * H * W;
    for (std::size_t oy = 0; oy < OH; ++oy)
      for (std::size_t ox = 0; ox < OW; ++ox) {
        std::size_t best = base + oy * stride * W + ox * stride;
        for (std::size_t i = 0; i < k; ++i)
          for (std::size_t j = 0; j < k; ++j) {
            const std::size_t idx = base + (oy * stride + i) * W + ox * stride + j;
            if (v[idx] > v[best])
              best = idx;
          }
        const std::size_t oi = (nc * OH + oy) * OW + ox;
        o[oi] = v[best];
        (*argmax)[oi] = best;
      }
  }
  if (detail::any_requires_grad<T>({&x})) {
    auto xs = x.storage();
    Storage<T> *os = out.storage().get();
    Tape<T>::current().record(out, [xs, os, argmax] {
      xs->ensure_grad();
      for (std::size_t i = 0; i < os->grad.size(); ++i)
        xs->grad[(*argmax)[i]] += os->grad[i];
    });
  }
  return out;
}

/// Averages over bins [floor(i*H/oh), ceil((i+1)*H/oh)), which cover the
/// input exactly and may overlap when oh does not divide H (or oh > H).
template <typename T>
Tensor<T> adaptive_avg_pool2d(const Tensor<T> &x, std::size_t out_h, std::size_t out_w) {
  if (x.rank() != 4)
    throw ShapeMismatch("adaptive_avg_pool2d expects 4-D input, got " + shape_str(x.shape()));
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (out_h == 0 || out_w == 0 || H == 0 || W == 0)
    throw ShapeMismatch("adaptive_avg_pool2d: empty input or output grid");
  auto bin = [](std::size_t i, std::size_t in, std::size_t outn) {
    return std::pair{(i * in) / outn, ((i + 1) * in + outn - 1) / outn};
  };
  Tensor<T> out({N, C, out_h, out_w});
  auto o = out.mutable_values();
  const auto v = x.values();
  for (std::size_t nc = 0; nc < N * C; ++nc)
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const auto [y0, y1] = bin(oy, H, out_h);
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const auto [x0, x1] = bin(ox, W, out_w);
        T acc = 0;
        for (std::size_t y = y0; y < y1; ++y)
          for (std::size_t xx = x0; xx < x1; ++xx)
            acc += v[(nc * H + y) * W + xx];
        o[(nc * out_h + oy) * out_w + ox] = acc / static_cast<T>((y1 - y0) * (x1 - x0));
      }
    }
  if (detail::any_requires_grad<T>({&x})) {
    auto xs = x.storage();
    Storage<T> *os = out.storage().get();
    Tape<T>::current().record(out, [xs, os, bin, N, C, H, W, out_h, out_w] {
      xs->ensure_grad();
      for (std::size_t nc = 0; nc < N * C; ++nc)
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const auto [y0, y1] = bin(oy, H, out_h);
          for (std::size_t ox = 0; ox < out_w; ++ox) {
            const auto [x0, x1] = bin(ox, W, out_w);
            const T g = os->grad[(nc * out_h + oy) * out_w + ox] /
                        static_cast<T>((y1 - y0) * (x1 - x0));
            for (std::size_t y = y0; y < y1; ++y)
              for (std::size_t xx = x0; xx < x1; ++xx)
                xs->grad[(nc * H + y) * W + xx] += g;
          }
        }
    });
  }
  return out;
}

/// (N,Ca,H,W) ++ (N,Cb,H,W) -> (N,Ca+Cb,H,W).
template <typename T> Tensor<T> concat_channels(const Tensor<T> &a, const Tensor<T> &b) {
  if (a.rank() != 4 || b.rank() != 4 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) ||
      a.dim(3) != b.dim(3))
    throw ShapeMismatch("concat_channels: " + shape_str(a.shape()) + " vs " +
                        shape_str(b.shape()));
  const std::size_t N = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), HW = a.dim(2) * a.dim(3);
  Tensor<T> out({N, Ca + Cb, a.dim(2), a.dim(3)});
  auto o = out.mutable_values();
  for (std::size_t n = 0; n < N; ++n) {
    std::copy_n(a.values().begin() + n * Ca * HW, Ca * HW, o.begin() + n * (Ca + Cb) * HW);
    std::copy_n(b.values().begin() + n * Cb * HW, Cb * HW,
                o.begin() + n * (Ca + Cb) * HW + Ca * HW);
  }
  if (detail::any_requires_grad<T>({&a, &b})) {
    auto as = a.storage(), bs = b.storage();
    Storage<T> *os = out.storage().get();
    Tape<T>::current().record(out, [as, bs, os, N, Ca, Cb, HW] {
      for (std::size_t n = 0; n < N; ++n) {
        const T *g = os->grad.data() + n * (Ca + Cb) * HW;
        if (as->requires_grad) {
          as->ensure_grad();
          for (std::size_t i = 0; i < Ca * HW; ++i)
            as->grad[n * Ca * HW + i] += g[i];
        }
        if (bs->requires_grad) {
          bs->ensure_grad();
          for (std::size_t i = 0; i < Cb * HW; ++i)
            bs->grad[n * Cb * HW + i] += g[Ca * HW + i];
        }
      }
    });
  }
  return out;
}

namespace detail {

// log-sum-exp of one row, shifted by the row maximum
template <typename T> T log_sum_exp(const T *row, std::size_t n) {
  const T m = *std::max_element(row, row + n);
  T acc = 0;
  for (std::size_t j = 0; j < n; ++j)
    acc += std::exp(row[j] - m);
  return m + std::log(acc);
}

} // namespace detail

/// Row-wise log-softmax over the last dimension of an (N,C) tensor.
template <typename T> Tensor<T> log_softmax(const Tensor<T> &x) {
  if (x.rank() != 2 || x.dim(1) == 0)
    throw ShapeMismatch("log_softmax expects (N,C), got " + shape_str(x.shape()));
  const std::size_t N = x.dim(0), C = x.dim(1);
  Tensor<T> out(x.shape());
  auto o = out.mutable_values();
  for (std::size_t n = 0; n < N; ++n) {
    const T *row = x.values().data() + n * C;
    const T lse = detail::log_sum_exp(row, C);
    for (std::size_t j = 0; j < C; ++j)
      o[n * C + j] = row[j] - lse;
  }
  if (detail::any_requires_grad<T>({&x})) {
    auto xs = x.storage();
    Storage<T> *os = out.storage().get();
    Tape<T>::current().record(out, [xs, os, N, C] {
      xs->ensure_grad();
      for (std::size_t n = 0; n < N; ++n) {
        T total = 0;
        for (std::size_t j = 0; j < C; ++j)
          total += os->grad[n * C + j];
        for (std::size_t j = 0; j < C; ++j)
          xs->grad[n * C + j] += os->grad[n * C + j] - std::exp(os->values[n * C + j]) * total;
      }
    });
  }
  return out;
}

/// Row-wise softmax values (not recorded on the tape).
template <typename T> Tensor<T> softmax(const Tensor<T> &x) {
  NoGradGuard<T> guard;
  Tensor<T> out = log_softmax(x);
  for (auto &v : out.mutable_values())
    v = std::exp(v);
  return out;
}

} // namespace nanet::tensor

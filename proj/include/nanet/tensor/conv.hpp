#pragma once

#include "nanet/tensor/tensor.hpp"

#include <Eigen/Core>

#include <cstring>

namespace nanet::tensor {

struct ConvGeometry {
  std::size_t channels, height, width; // input plane
  std::size_t kh, kw, stride, pad;
  std::size_t out_h, out_w;

  std::size_t col_rows() const { return channels * kh * kw; }
  std::size_t col_cols() const { return out_h * out_w; }
};

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T> using MatMap = Eigen::Map<RowMat<T>>;
template <typename T> using ConstMatMap = Eigen::Map<const RowMat<T>>;

/// Unfolds one (C,H,W) plane into a (C*kh*kw, out_h*out_w) matrix.
template <typename T> void im2col(const T *x, const ConvGeometry &g, T *col) {
  const auto H = static_cast<std::ptrdiff_t>(g.height);
  const auto W = static_cast<std::ptrdiff_t>(g.width);
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  const auto stride = static_cast<std::ptrdiff_t>(g.stride);
  const auto OW = static_cast<std::ptrdiff_t>(g.out_w);
  for (std::size_t c = 0; c < g.channels; ++c) {
    const T *plane = x + c * g.height * g.width;
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        T *row = col + ((c * g.kh + ki) * g.kw + kj) * g.col_cols();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * stride - pad +
                                    static_cast<std::ptrdiff_t>(ki);
          T *dst = row + oy * g.out_w;
          if (iy < 0 || iy >= H) {
            std::fill(dst, dst + OW, T(0));
            continue;
          }
          const T *src = plane + iy * W;
          const std::ptrdiff_t ix0 = static_cast<std::ptrdiff_t>(kj) - pad;
          if (stride == 1) {
            // valid ox range: 0 <= ix0 + ox < W
            const std::ptrdiff_t lo = std::clamp<std::ptrdiff_t>(-ix0, 0, OW);
            const std::ptrdiff_t hi = std::clamp<std::ptrdiff_t>(W - ix0, lo, OW);
            std::fill(dst, dst + lo, T(0));
            std::copy(src + ix0 + lo, src + ix0 + hi, dst + lo);
            std::fill(dst + hi, dst + OW, T(0));
          } else {
            for (std::ptrdiff_t ox = 0; ox < OW; ++ox) {
              const std::ptrdiff_t ix = ox * stride + ix0;
              dst[ox] = (ix < 0 || ix >= W) ? T(0) : src[ix];
            }
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: scatters-and-adds a column matrix back into a plane.
template <typename T> void col2im_add(const T *col, const ConvGeometry &g, T *x) {
  const auto H = static_cast<std::ptrdiff_t>(g.height);
  const auto W = static_cast<std::ptrdiff_t>(g.width);
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  const auto stride = static_cast<std::ptrdiff_t>(g.stride);
  const auto OW = static_cast<std::ptrdiff_t>(g.out_w);
  for (std::size_t c = 0; c < g.channels; ++c) {
    T *plane = x + c * g.height * g.width;
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const T *row = col + ((c * g.kh + ki) * g.kw + kj) * g.col_cols();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * stride - pad +
                                    static_cast<std::ptrdiff_t>(ki);
          if (iy < 0 || iy >= H)
            continue;
          const T *src = row + oy * g.out_w;
          T *dst = plane + iy * W;
          const std::ptrdiff_t ix0 = static_cast<std::ptrdiff_t>(kj) - pad;
          if (stride == 1) {
            const std::ptrdiff_t lo = std::clamp<std::ptrdiff_t>(-ix0, 0, OW);
            const std::ptrdiff_t hi = std::clamp<std::ptrdiff_t>(W - ix0, lo, OW);
            for (std::ptrdiff_t ox = lo; ox < hi; ++ox)
              dst[ix0 + ox] += src[ox];
          } else {
            for (std::ptrdiff_t ox = 0; ox < OW; ++ox) {
              const std::ptrdiff_t ix = ox * stride + ix0;
              if (ix >= 0 && ix < W)
                dst[ix] += src[ox];
            }
          }
        }
      }
    }
  }
}

inline bool is_pointwise(const ConvGeometry &g) {
  return g.kh == 1 && g.kw == 1 && g.stride == 1 && g.pad == 0;
}

template <typename T>
void check_bias(const Tensor<T> &bias, std::size_t channels, const char *op) {
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != channels))
    throw ShapeMismatch(std::string(op) + ": bias shape " + shape_str(bias.shape()) +
                        " does not match " + std::to_string(channels) + " channels");
}

} // namespace detail

/// 2-D cross-correlation. input (N,Cin,H,W), weight (Cout,Cin,kh,kw),
/// bias (Cout) or undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T> &input, const Tensor<T> &weight, const Tensor<T> &bias,
                 std::size_t stride = 1, std::size_t pad = 0) {
  using namespace detail;
  if (input.rank() != 4 || weight.rank() != 4)
    throw ShapeMismatch("conv2d expects 4-D input and weight, got " + shape_str(input.shape()) +
                        " and " + shape_str(weight.shape()));
  if (stride == 0)
    throw ShapeMismatch("conv2d: stride must be positive");
  const std::size_t N = input.dim(0), Cin = input.dim(1), H = input.dim(2), W = input.dim(3);
  const std::size_t Cout = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(1) != Cin)
    throw ShapeMismatch("conv2d: input has " + std::to_string(Cin) + " channels, weight expects " +
                        std::to_string(weight.dim(1)));
  if (H + 2 * pad < kh || W + 2 * pad < kw)
    throw ShapeMismatch("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                        " does not fit padded input " + shape_str(input.shape()));
  check_bias(bias, Cout, "conv2d");

  const ConvGeometry g{Cin, H, W, kh, kw, stride, pad, (H + 2 * pad - kh) / stride + 1,
                       (W + 2 * pad - kw) / stride + 1};
  const std::size_t K = g.col_rows(), P = g.col_cols();
  Tensor<T> out({N, Cout, g.out_h, g.out_w});

  const ConstMatMap<T> wmat(weight.values().data(), Cout, K);
  std::vector<T> col(is_pointwise(g) ? 0 : K * P);
  for (std::size_t n = 0; n < N; ++n) {
    const T *xn = input.values().data() + n * Cin * H * W;
    const T *colp = xn;
    if (!is_pointwise(g)) {
      im2col(xn, g, col.data());
      colp = col.data();
    }
    MatMap<T> yn(out.mutable_values().data() + n * Cout * P, Cout, P);
    yn.noalias() = wmat * ConstMatMap<T>(colp, K, P);
    if (bias.defined())
      for (std::size_t c = 0; c < Cout; ++c)
        yn.row(c).array() += bias.values()[c];
  }

  if (any_requires_grad<T>({&input, &weight, &bias})) {
    auto xs = input.storage();
    auto ws = weight.storage();
    auto bs = bias.defined() ? bias.storage() : nullptr;
    Storage<T> *os = out.storage().get();
    Tape<T>::current().record(out, [xs, ws, bs, os, g, N, Cout, K, P] {
      const bool need_x = wants_grad(xs), need_w = wants_grad(ws), need_b = wants_grad(bs);
      const ConstMatMap<T> wmat(ws->values.data(), Cout, K);
      if (need_x)
        xs->ensure_grad();
      if (need_w)
        ws->ensure_grad();
      if (need_b)
        bs->ensure_grad();
      std::vector<T> col(is_pointwise(g) ? 0 : K * P);
      std::vector<T> dcol(K * P);
      const std::size_t plane = g.channels * g.height * g.width;
      for (std::size_t n = 0; n < N; ++n) {
        const ConstMatMap<T> dy(os->grad.data() + n * Cout * P, Cout, P);
        if (need_w) {
          const T *colp = xs->values.data() + n * plane;
          if (!is_pointwise(g)) {
            im2col(colp, g, col.data());
            colp = col.data();
          }
          MatMap<T>(ws->grad.data(), Cout, K).noalias() += dy * ConstMatMap<T>(colp, K, P).transpose();
        }
        // Plain loop: Eigen's vectorized sum peels by address, so its order
        // (and the float result) would depend on where the buffer landed.
        if (need_b) {
          const T *d = os->grad.data() + n * Cout * P;
          for (std::size_t c = 0; c < Cout; ++c) {
            T acc = 0;
            for (std::size_t i = 0; i < P; ++i)
              acc += d[c * P + i];
            bs->grad[c] += acc;
          }
        }
        if (need_x) {
          T *dx = xs->grad.data() + n * plane;
          if (is_pointwise(g)) {
            MatMap<T>(dx, K, P).noalias() += wmat.transpose() * dy;
          } else {
            MatMap<T>(dcol.data(), K, P).noalias() = wmat.transpose() * dy;
            col2im_add(dcol.data(), g, dx);
          }
        }
      }
    });
  }
  return out;
}

/// Transposed convolution (no padding): the adjoint of conv2d with the same
/// weight tensor. input (N,Cin,H,W), weight (Cin,Cout,kh,kw), output
/// (N,Cout,(H-1)*stride+kh,(W-1)*stride+kw).
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T> &input, const Tensor<T> &weight, const Tensor<T> &bias,
                           std::size_t stride = 1) {
  using namespace detail;
  if (input.rank() != 4 || weight.rank() != 4)
    throw ShapeMismatch("conv_transpose2d expects 4-D input and weight, got " +
                        shape_str(input.shape()) + " and " + shape_str(weight.shape()));
  if (stride == 0)
    throw ShapeMismatch("conv_transpose2d: stride must be positive");
  const std::size_t N = input.dim(0), Cin = input.dim(1), H = input.dim(2), W = input.dim(3);
  if (weight.dim(0) != Cin)
    throw ShapeMismatch("conv_transpose2d: input has " + std::to_string(Cin) +
                        " channels, weight expects " + std::to_string(weight.dim(0)));
  const std::size_t Cout = weight.dim(1), kh = weight.dim(2), kw = weight.dim(3);
  check_bias(bias, Cout, "conv_transpose2d");
  if (H == 0 || W == 0)
    throw ShapeMismatch("conv_transpose2d: empty spatial input");

  const std::size_t OH = (H - 1) * stride + kh, OW = (W - 1) * stride + kw;
  // Geometry of the forward conv that maps the output back onto the input.
  const ConvGeometry g{Cout, OH, OW, kh, kw, stride, 0, H, W};
  const std::size_t K = g.col_rows(), P = g.col_cols(); // K = Cout*kh*kw, P = H*W
  Tensor<T> out({N, Cout, OH, OW});

  const ConstMatMap<T> wmat(weight.values().data(), Cin, K);
  std::vector<T> col(K * P);
  for (std::size_t n = 0; n < N; ++n) {
    const ConstMatMap<T> xn(input.values().data() + n * Cin * P, Cin, P);
    MatMap<T>(col.data(), K, P).noalias() = wmat.transpose() * xn;
    T *yn = out.mutable_values().data() + n * Cout * OH * OW;
    col2im_add(col.data(), g, yn);
    if (bias.defined())
      for (std::size_t c = 0; c < Cout; ++c) {
        T *plane = yn + c * OH * OW;
        const T b = bias.values()[c];
        for (std::size_t i = 0; i < OH * OW; ++i)
          plane[i] += b;
      }
  }

  if (any_requires_grad<T>({&input, &weight, &bias})) {
    auto xs = input.storage();
    auto ws = weight.storage();
    auto bs = bias.defined() ? bias.storage() : nullptr;
    Storage<T> *os = out.storage().get();
    Tape<T>::current().record(out, [xs, ws, bs, os, g, N, Cin, K, P] {
      const bool need_x = wants_grad(xs), need_w = wants_grad(ws), need_b = wants_grad(bs);
      const ConstMatMap<T> wmat(ws->values.data(), Cin, K);
      if (need_x)
        xs->ensure_grad();
      if (need_w)
        ws->ensure_grad();
      if (need_b)
        bs->ensure_grad();
      std::vector<T> dcol(K * P);
      const std::size_t out_plane = g.channels * g.height * g.width;
      const std::size_t spatial = g.height * g.width;
      for (std::size_t n = 0; n < N; ++n) {
        const T *dy = os->grad.data() + n * out_plane;
        if (need_b)
          for (std::size_t c = 0; c < g.channels; ++c) {
            T acc = 0;
            for (std::size_t i = 0; i < spatial; ++i)
              acc += dy[c * spatial + i];
            bs->grad[c] += acc;
          }
        if (!need_x && !need_w)
          continue;
        im2col(dy, g, dcol.data());
        const ConstMatMap<T> dc(dcol.data(), K, P);
        if (need_x)
          MatMap<T>(xs->grad.data() + n * Cin * P, Cin, P).noalias() += wmat * dc;
        if (need_w)
          MatMap<T>(ws->grad.data(), Cin, K).noalias() +=
              ConstMatMap<T>(xs->values.data() + n * Cin * P, Cin, P) * dc.transpose();
      }
    });
  }
  return out;
}

} // namespace nanet::tensor

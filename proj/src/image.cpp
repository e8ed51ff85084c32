#include "nanet/image.hpp"

#include "nanet/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace nanet {

ImageBuffer::ImageBuffer(int height, int width, float fill)
    : height_(height), width_(width),
      values_(static_cast<std::size_t>(std::max(height, 0)) * std::max(width, 0), fill) {
  if (height < 0 || width < 0)
    throw InvalidSpec("negative image dimensions");
}

ImageBuffer::ImageBuffer(int height, int width, std::vector<float> values)
    : height_(height), width_(width), values_(std::move(values)) {
  if (height < 0 || width < 0 ||
      values_.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width))
    throw InvalidSpec("image value count does not match " + std::to_string(height) + "x" +
                      std::to_string(width));
}

namespace {

struct FilterTaps {
  int first = 0;
  std::vector<double> weights;
};

std::vector<FilterTaps> triangle_taps(int in_size, int out_size) {
  const double scale = static_cast<double>(in_size) / out_size;
  const double filter_scale = std::max(scale, 1.0);
  const double support = filter_scale;
  std::vector<FilterTaps> taps(static_cast<std::size_t>(out_size));
  for (int i = 0; i < out_size; ++i) {
    const double center = (i + 0.5) * scale;
    const int lo = std::max(0, static_cast<int>(std::floor(center - support + 0.5)));
    const int hi = std::min(in_size, static_cast<int>(std::floor(center + support + 0.5)));
    auto &t = taps[static_cast<std::size_t>(i)];
    t.first = lo;
    double total = 0.0;
    for (int j = lo; j < hi; ++j) {
      const double w = std::max(0.0, 1.0 - std::abs((j + 0.5 - center) / filter_scale));
      t.weights.push_back(w);
      total += w;
    }
    if (total <= 0.0) {
      // Degenerate window (only reachable for extreme upscales at the border).
      t.first = std::clamp(static_cast<int>(std::floor(center)), 0, in_size - 1);
      t.weights.assign(1, 1.0);
      continue;
    }
    for (auto &w : t.weights)
      w /= total;
  }
  return taps;
}

} // namespace

ImageBuffer resize(const ImageBuffer &img, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1)
    throw InvalidSpec("resize target must be at least 1x1");
  if (img.empty())
    throw InvalidSpec("cannot resize an empty image");
  if (out_h == img.height() && out_w == img.width())
    return img;

  const auto htaps = triangle_taps(img.width(), out_w);
  const auto vtaps = triangle_taps(img.height(), out_h);

  std::vector<double> tmp(static_cast<std::size_t>(img.height()) * out_w);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < out_w; ++x) {
      const auto &t = htaps[static_cast<std::size_t>(x)];
      double acc = 0.0;
      for (std::size_t k = 0; k < t.weights.size(); ++k)
        acc += t.weights[k] * img.at(y, t.first + static_cast<int>(k));
      tmp[static_cast<std::size_t>(y) * out_w + x] = acc;
    }
  }

  ImageBuffer out(out_h, out_w);
  for (int y = 0; y < out_h; ++y) {
    const auto &t = vtaps[static_cast<std::size_t>(y)];
    for (int x = 0; x < out_w; ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < t.weights.size(); ++k)
        acc += t.weights[k] * tmp[static_cast<std::size_t>(t.first + static_cast<int>(k)) * out_w + x];
      out.at(y, x) = static_cast<float>(std::clamp(acc, 0.0, 1.0));
    }
  }
  return out;
}

ImageBuffer augment_rotate(const ImageBuffer &img, double angle_deg, float background) {
  if (angle_deg == 0.0)
    return img;
  const double theta = angle_deg * std::numbers::pi / 180.0;
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const double cx = img.width() / 2.0;
  const double cy = img.height() / 2.0;
  const int h = img.height();
  const int w = img.width();

  auto sample = [&](int y, int x) -> double {
    if (y < 0 || y >= h || x < 0 || x >= w)
      return background;
    return img.at(y, x);
  };

  ImageBuffer out(h, w);
  for (int y = 0; y < h; ++y) {
    const double dy = y + 0.5 - cy;
    for (int x = 0; x < w; ++x) {
      const double dx = x + 0.5 - cx;
      // Inverse map of a counter-clockwise (as displayed, y down) rotation.
      const double sx = dx * c - dy * s + cx - 0.5;
      const double sy = dx * s + dy * c + cy - 0.5;
      const double fx = std::floor(sx);
      const double fy = std::floor(sy);
      const double ax = sx - fx;
      const double ay = sy - fy;
      const int x0 = static_cast<int>(fx);
      const int y0 = static_cast<int>(fy);
      const double v = (1 - ay) * ((1 - ax) * sample(y0, x0) + ax * sample(y0, x0 + 1)) +
                       ay * ((1 - ax) * sample(y0 + 1, x0) + ax * sample(y0 + 1, x0 + 1));
      out.at(y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return out;
}

double psnr(const ImageBuffer &a, const ImageBuffer &b) {
  if (a.height() != b.height() || a.width() != b.width())
    throw ShapeMismatch("psnr: image dimensions differ");
  if (a.empty())
    throw InvalidSpec("psnr: empty images");
  double sse = 0.0;
  const auto va = a.values();
  const auto vb = b.values();
  for (std::size_t i = 0; i < va.size(); ++i) {
    const double d = static_cast<double>(va[i]) - vb[i];
    sse += d * d;
  }
  const double mse = sse / static_cast<double>(va.size());
  if (mse <= 0.0)
    return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

std::uint8_t quantize(float v) noexcept {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

ImageBuffer to_image(const Gray8 &g) {
  std::vector<float> values(g.pixels.size());
  for (std::size_t i = 0; i < values.size(); ++i)
    values[i] = static_cast<float>(g.pixels[i]) / 255.0f;
  return ImageBuffer(g.height, g.width, std::move(values));
}

ImageBuffer read_png(const std::filesystem::path &path) { return to_image(read_png_gray8(path)); }

} // namespace nanet

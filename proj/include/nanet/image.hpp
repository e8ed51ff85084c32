#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace nanet {

/// Single-channel raster, row-major, intensities in [0, 1].
class ImageBuffer {
public:
  ImageBuffer() = default;
  ImageBuffer(int height, int width, float fill = 0.0f);
  ImageBuffer(int height, int width, std::vector<float> values);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  float &at(int y, int x) { return values_[static_cast<std::size_t>(y) * width_ + x]; }
  float at(int y, int x) const { return values_[static_cast<std::size_t>(y) * width_ + x]; }

  std::span<float> values() noexcept { return values_; }
  std::span<const float> values() const noexcept { return values_; }

  bool operator==(const ImageBuffer &) const = default;

private:
  int height_ = 0;
  int width_ = 0;
  std::vector<float> values_;
};

/// Bilinear resampling with pixel-centre alignment. When shrinking, the
/// triangle filter is widened by the scale factor so every source pixel
/// contributes (the antialiased bilinear filter of common imaging
/// libraries). Same-size resizes return the input unchanged.
ImageBuffer resize(const ImageBuffer &img, int out_h, int out_w);

/// Rotation by `angle_deg` (counter-clockwise) about the image centre with
/// bilinear interpolation; samples falling outside the frame read
/// `background`.
ImageBuffer augment_rotate(const ImageBuffer &img, double angle_deg, float background = 1.0f);

/// Peak signal-to-noise ratio with MAX = 1. Identical images give the 99 dB
/// sentinel.
double psnr(const ImageBuffer &a, const ImageBuffer &b);
inline constexpr double kPsnrCap = 99.0;

std::uint8_t quantize(float v) noexcept;

/// 8-bit grayscale PNG I/O. Colour inputs are converted to luminance.
void write_png(const std::filesystem::path &path, const ImageBuffer &img);
ImageBuffer read_png(const std::filesystem::path &path);

/// Raw 8-bit decode, used by the training cache.
struct Gray8 {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;
};
Gray8 read_png_gray8(const std::filesystem::path &path);
ImageBuffer to_image(const Gray8 &g);

} // namespace nanet

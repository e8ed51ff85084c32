#include "nanet/error.hpp"
#include "nanet/image.hpp"

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <memory>

namespace nanet {
namespace {

struct FileCloser {
  void operator()(std::FILE *f) const noexcept {
    if (f)
      std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void warning_sink(png_structp, png_const_charp) {}

} // namespace

void write_png(const std::filesystem::path &path, const ImageBuffer &img) {
  if (img.empty())
    throw IoFailure("refusing to write an empty image to " + path.string());
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp)
    throw IoFailure("cannot open " + path.string() + " for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, warning_sink);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoFailure("libpng initialisation failed");
  }

  std::vector<png_byte> row(static_cast<std::size_t>(img.width()));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoFailure("libpng error while writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_compression_level(png, 6);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()),
               static_cast<png_uint_32>(img.height()), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x)
      row[static_cast<std::size_t>(x)] = quantize(img.at(y, x));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);

  if (std::fflush(fp.get()) != 0 || std::ferror(fp.get()))
    throw IoFailure("write error on " + path.string());
}

Gray8 read_png_gray8(const std::filesystem::path &path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp)
    throw IoFailure("cannot open " + path.string());

  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw IoFailure(path.string() + " is not a PNG file");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, warning_sink);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoFailure("libpng initialisation failed");
  }

  Gray8 out;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoFailure("corrupt PNG data in " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const auto color = png_get_color_type(png, info);
  const auto depth = png_get_bit_depth(png, info);
  if (depth == 16)
    png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE)
    png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA)
    png_set_strip_alpha(png);
  if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA ||
      color == PNG_COLOR_TYPE_PALETTE)
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  png_read_update_info(png, info);

  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  if (png_get_rowbytes(png, info) != static_cast<std::size_t>(out.width)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoFailure("unsupported PNG layout in " + path.string());
  }
  out.pixels.resize(static_cast<std::size_t>(out.width) * out.height);
  std::vector<png_bytep> rows(static_cast<std::size_t>(out.height));
  for (int y = 0; y < out.height; ++y)
    rows[static_cast<std::size_t>(y)] = out.pixels.data() + static_cast<std::size_t>(y) * out.width;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

} // namespace nanet

#include "vwam/io/png.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

#include "vwam/error.hpp"

namespace vwam::io {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void png_warning_fn(png_structp, png_const_charp) {}

}  // namespace

void write_png(const std::filesystem::path& path, const Image& image) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw ShapeError("write_png expects [3, H, W], got " + ad::shape_str(image.shape()));
  }
  const std::size_t h = image.dim(1), w = image.dim(2);
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw FormatError("cannot open " + path.string() + " for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_warning_fn);
  png_infop info = png_create_info_struct(png);
  std::vector<png_byte> row(3 * w);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw FormatError("png: failed writing " + path.string());
  }
  {
    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const auto px = image.data();
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        for (std::size_t c = 0; c < 3; ++c) {
          const float v = std::clamp(px[(c * h + y) * w + x], 0.0f, 1.0f);
          row[3 * x + c] = static_cast<png_byte>(std::lround(v * 255.0f));
        }
      }
      png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
  }
  png_destroy_write_struct(&png, &info);
}

Image read_png(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw FormatError("cannot open " + path.string());
  png_byte sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw FormatError(path.string() + " is not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_warning_fn);
  png_infop info = png_create_info_struct(png);
  std::vector<float> data;
  std::vector<png_byte> row;
  std::size_t h = 0, w = 0;
  bool bad_layout = false;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("png: failed reading " + path.string());
  }
  {
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    const int color = png_get_color_type(png, info);
    if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
      if (png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
      png_set_gray_to_rgb(png);
    }
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    h = png_get_image_height(png, info);
    w = png_get_image_width(png, info);
    bad_layout = png_get_rowbytes(png, info) != 3 * w;
    row.resize(3 * w);
    data.resize(3 * h * w);
    for (std::size_t y = 0; y < h && !bad_layout; ++y) {
      png_read_row(png, row.data(), nullptr);
      for (std::size_t x = 0; x < w; ++x) {
        for (std::size_t c = 0; c < 3; ++c) data[(c * h + y) * w + x] = row[3 * x + c] / 255.0f;
      }
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  if (bad_layout) throw FormatError(path.string() + ": unsupported PNG layout");
  return Image({3, h, w}, std::move(data));
}

}  // namespace vwam::io

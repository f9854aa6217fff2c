#include "ctl/image.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <filesystem>
#include <memory>

#include <png.h>

#include "ctl/errors.hpp"

namespace ctl {

Image Image::filled(int w, int h, unsigned char r, unsigned char g,
                    unsigned char b) {
  Image img;
  img.width = w;
  img.height = h;
  img.rgb.resize(static_cast<std::size_t>(w) * h * 3);
  for (std::size_t i = 0; i < img.rgb.size(); i += 3) {
    img.rgb[i] = r;
    img.rgb[i + 1] = g;
    img.rgb[i + 2] = b;
  }
  return img;
}

void Image::fill_rect(int x0, int y0, int x1, int y1, unsigned char r,
                      unsigned char g, unsigned char b) {
  x0 = std::clamp(x0, 0, width);
  x1 = std::clamp(x1, 0, width);
  y0 = std::clamp(y0, 0, height);
  y1 = std::clamp(y1, 0, height);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      unsigned char* p = pixel(x, y);
      p[0] = r;
      p[1] = g;
      p[2] = b;
    }
  }
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Image load_png(const std::string& path) {
  if (!std::filesystem::exists(path)) {
    throw MissingImageError("no such image '" + path + "'");
  }
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open '" + path + "'");

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw DecodeError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw DecodeError("png_create_info_struct failed");
  }

  Image img;
  std::vector<png_bytep> row_ptrs;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DecodeError("failed to decode '" + path + "'");
  }

  png_init_io(png, fp.get());
  png_read_info(png, info);

  // Normalize everything to 8-bit RGB.
  png_set_strip_16(png);
  png_set_palette_to_rgb(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY &&
      png_get_bit_depth(png, info) < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
  }
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  img.rgb.resize(static_cast<std::size_t>(img.width) * img.height * 3);
  row_ptrs.resize(img.height);
  for (int y = 0; y < img.height; ++y) {
    row_ptrs[y] = img.rgb.data() + static_cast<std::size_t>(y) * img.width * 3;
  }
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void save_png(const std::string& path, const Image& img) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot open '" + path + "' for writing");

  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed to write '" + path + "'");
  }

  png_init_io(png, fp.get());
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> row_ptrs(img.height);
  for (int y = 0; y < img.height; ++y) {
    row_ptrs[y] = const_cast<png_bytep>(
        img.rgb.data() + static_cast<std::size_t>(y) * img.width * 3);
  }
  png_write_image(png, row_ptrs.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image resize_bilinear(const Image& img, int out_w, int out_h) {
  if (img.width < 1 || img.height < 1) {
    throw ShapeError("cannot resize an empty image");
  }
  if (img.width == out_w && img.height == out_h) return img;

  Image out;
  out.width = out_w;
  out.height = out_h;
  out.rgb.resize(static_cast<std::size_t>(out_w) * out_h * 3);

  const double sx = static_cast<double>(img.width) / out_w;
  const double sy = static_cast<double>(img.height) / out_h;
  for (int y = 0; y < out_h; ++y) {
    const double fy = (y + 0.5) * sy - 0.5;
    int y0 = static_cast<int>(std::floor(fy));
    const double wy = fy - y0;
    y0 = std::clamp(y0, 0, img.height - 1);
    const int y1 = std::min(y0 + 1, img.height - 1);
    for (int x = 0; x < out_w; ++x) {
      const double fx = (x + 0.5) * sx - 0.5;
      int x0 = static_cast<int>(std::floor(fx));
      const double wx = fx - x0;
      x0 = std::clamp(x0, 0, img.width - 1);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const unsigned char* p00 = img.pixel(x0, y0);
      const unsigned char* p10 = img.pixel(x1, y0);
      const unsigned char* p01 = img.pixel(x0, y1);
      const unsigned char* p11 = img.pixel(x1, y1);
      unsigned char* q = out.pixel(x, y);
      for (int c = 0; c < 3; ++c) {
        const double v = (1 - wy) * ((1 - wx) * p00[c] + wx * p10[c]) +
                         wy * ((1 - wx) * p01[c] + wx * p11[c]);
        q[c] = static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 255.0)));
      }
    }
  }
  return out;
}

Image crop_image(const Image& img, const BBox& pixel_box) {
  const int x0 = std::clamp(static_cast<int>(std::floor(pixel_box.x0)), 0,
                            img.width);
  const int y0 = std::clamp(static_cast<int>(std::floor(pixel_box.y0)), 0,
                            img.height);
  const int x1 =
      std::clamp(static_cast<int>(std::ceil(pixel_box.x1)), 0, img.width);
  const int y1 =
      std::clamp(static_cast<int>(std::ceil(pixel_box.y1)), 0, img.height);
  if (x0 >= x1 || y0 >= y1) {
    throw EmptyBoxError("crop box rasterizes to an empty region");
  }
  Image out;
  out.width = x1 - x0;
  out.height = y1 - y0;
  out.rgb.resize(static_cast<std::size_t>(out.width) * out.height * 3);
  for (int y = y0; y < y1; ++y) {
    const unsigned char* src = img.pixel(x0, y);
    unsigned char* dst = out.pixel(0, y - y0);
    std::copy(src, src + static_cast<std::size_t>(out.width) * 3, dst);
  }
  return out;
}

BBox denormalize(const BBox& unit_box, const ImageDims& dims) {
  return BBox{unit_box.x0 * dims.width, unit_box.y0 * dims.height,
              unit_box.x1 * dims.width, unit_box.y1 * dims.height};
}

}  // namespace ctl

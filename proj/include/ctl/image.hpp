#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ctl/geometry.hpp"

namespace ctl {

// Interleaved 8-bit RGB, row-major.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<unsigned char> rgb;

  static Image filled(int w, int h, unsigned char r, unsigned char g,
                      unsigned char b);

  unsigned char* pixel(int x, int y) { return rgb.data() + 3 * (y * width + x); }
  const unsigned char* pixel(int x, int y) const {
    return rgb.data() + 3 * (y * width + x);
  }

  void fill_rect(int x0, int y0, int x1, int y1, unsigned char r,
                 unsigned char g, unsigned char b);
};

Image load_png(const std::string& path);
void save_png(const std::string& path, const Image& img);

Image resize_bilinear(const Image& img, int out_w, int out_h);

// Rasterizes a real-valued pixel box: floor on the near edges, ceil on the
// far edges, clamped to the image.
Image crop_image(const Image& img, const BBox& pixel_box);

// Scales a normalized [0,1] box to pixel units.
BBox denormalize(const BBox& unit_box, const ImageDims& dims);

}  // namespace ctl

#pragma once

#include <algorithm>
#include <cmath>

#include "ctl/errors.hpp"

namespace ctl {

struct ImageDims {
  int width = 0;
  int height = 0;

  bool valid() const { return width >= 1 && height >= 1; }
};

// Axis-aligned rectangle with real-valued, inclusive-exclusive edges.
// Coordinates may be pixels or normalized [0,1] units; all operations here
// are unit-agnostic.
struct BBox {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return width() * height(); }
  bool valid() const { return x0 < x1 && y0 < y1; }

  bool contains(const BBox& b) const {
    return x0 <= b.x0 && b.x1 <= x1 && y0 <= b.y0 && b.y1 <= y1;
  }

  friend bool operator==(const BBox& a, const BBox& b) {
    return a.x0 == b.x0 && a.y0 == b.y0 && a.x1 == b.x1 && a.y1 == b.y1;
  }
};

inline double intersection_area(const BBox& a, const BBox& b) {
  const double w = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
  const double h = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  return w * h;
}

// Intersection of `b` with the image rectangle; throws if the two are
// disjoint.
inline BBox clamp_bbox(const BBox& b, const ImageDims& dims) {
  const double w = static_cast<double>(dims.width);
  const double h = static_cast<double>(dims.height);
  BBox r{std::max(b.x0, 0.0), std::max(b.y0, 0.0), std::min(b.x1, w),
         std::min(b.y1, h)};
  if (!r.valid()) {
    throw EmptyBoxError("box lies outside the image");
  }
  return r;
}

// Moves every edge outward by `frac` of the image dimension along that
// edge's axis, then clamps to the image.
inline BBox expand_bbox(const BBox& b, const ImageDims& dims, double frac) {
  const double dx = frac * static_cast<double>(dims.width);
  const double dy = frac * static_cast<double>(dims.height);
  return clamp_bbox(BBox{b.x0 - dx, b.y0 - dy, b.x1 + dx, b.y1 + dy}, dims);
}

// area(cell ∩ b) / area(cell), in [0,1].
inline double overlap_fraction(const BBox& cell, const BBox& b) {
  return intersection_area(cell, b) / cell.area();
}

}  // namespace ctl

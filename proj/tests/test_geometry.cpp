#include <doctest.h>

#include "ctl/geometry.hpp"
#include "ctl/rng.hpp"

using namespace ctl;

TEST_CASE("clamp_bbox intersects with the image") {
  const ImageDims dims{100, 100};
  CHECK(clamp_bbox(BBox{-5, -5, 10, 10}, dims) == BBox{0, 0, 10, 10});
  CHECK(clamp_bbox(BBox{10, 10, 20, 20}, dims) == BBox{10, 10, 20, 20});
  CHECK(clamp_bbox(BBox{90, 90, 120, 130}, dims) == BBox{90, 90, 100, 100});
  CHECK_THROWS_AS(clamp_bbox(BBox{150, 150, 160, 160}, dims), EmptyBoxError);
  CHECK_THROWS_AS(clamp_bbox(BBox{-20, 10, -5, 20}, dims), EmptyBoxError);
}

TEST_CASE("expand_bbox moves edges by per-axis fractions") {
  const ImageDims dims{50, 100};  // W=50, H=100
  const BBox b{10, 40, 40, 70};
  const BBox e = expand_bbox(b, dims, 0.05);
  CHECK(e.x0 == doctest::Approx(7.5));
  CHECK(e.y0 == doctest::Approx(35.0));
  CHECK(e.x1 == doctest::Approx(42.5));
  CHECK(e.y1 == doctest::Approx(75.0));

  CHECK(expand_bbox(b, dims, 0.0) == b);

  const BBox corner = expand_bbox(BBox{0, 0, 10, 10}, ImageDims{100, 100}, 0.05);
  CHECK(corner == BBox{0, 0, 15, 15});
}

TEST_CASE("overlap_fraction basics") {
  CHECK(overlap_fraction(BBox{0, 0, 10, 10}, BBox{20, 20, 30, 30}) == 0.0);
  CHECK(overlap_fraction(BBox{2, 2, 4, 4}, BBox{0, 0, 10, 10}) == 1.0);
  CHECK(overlap_fraction(BBox{0, 0, 10, 10}, BBox{5, 0, 20, 10}) ==
        doctest::Approx(0.5));
}

TEST_CASE("expansion is monotone and lands inside the image") {
  Rng rng(42);
  for (int i = 0; i < 500; ++i) {
    const int w = 1 + static_cast<int>(rng.below(400));
    const int h = 1 + static_cast<int>(rng.below(400));
    const ImageDims dims{w, h};
    const double x0 = rng.uniform(0.0, w - 0.5);
    const double y0 = rng.uniform(0.0, h - 0.5);
    const BBox b{x0, y0, x0 + rng.uniform(0.1, w - x0),
                 y0 + rng.uniform(0.1, h - y0)};
    const double frac = rng.uniform(0.0, 0.49);
    const BBox e = expand_bbox(b, dims, frac);
    CHECK(e.contains(clamp_bbox(b, dims)));
    CHECK(e.x0 >= 0.0);
    CHECK(e.y0 >= 0.0);
    CHECK(e.x1 <= w);
    CHECK(e.y1 <= h);
  }
}

TEST_CASE("overlap_fraction matches its clamped form and is scale invariant") {
  Rng rng(7);
  for (int i = 0; i < 500; ++i) {
    const ImageDims dims{200, 150};
    const double cx0 = rng.uniform(0, 180);
    const double cy0 = rng.uniform(0, 130);
    const BBox cell{cx0, cy0, cx0 + rng.uniform(1, 20), cy0 + rng.uniform(1, 20)};
    const BBox b{rng.uniform(-50, 150), rng.uniform(-50, 100),
                 rng.uniform(160, 260), rng.uniform(110, 210)};
    const double direct = overlap_fraction(cell, b);
    const double clamped = overlap_fraction(cell, clamp_bbox(b, dims));
    CHECK(direct == doctest::Approx(clamped).epsilon(1e-12));

    const double k = rng.uniform(0.1, 9.0);
    const BBox cell_k{cell.x0 * k, cell.y0 * k, cell.x1 * k, cell.y1 * k};
    const BBox b_k{b.x0 * k, b.y0 * k, b.x1 * k, b.y1 * k};
    CHECK(overlap_fraction(cell_k, b_k) ==
          doctest::Approx(direct).epsilon(1e-9));
  }
}

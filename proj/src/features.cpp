#include "ctl/features.hpp"

#include <algorithm>
#include <cmath>

#include "ctl/errors.hpp"

namespace ctl {

AugmentParams draw_augmentation(Rng& rng) {
  constexpr int margin = kPreprocessResize - kPreprocessCrop;  // 32
  AugmentParams p;
  p.mirror = rng.bernoulli(0.5);
  p.x0 = static_cast<int>(rng.below(margin + 1));
  p.y0 = static_cast<int>(rng.below(margin + 1));
  return p;
}

ImageTensor preprocess(const Image& img, PreprocessMode mode, Rng* rng) {
  if (img.width < 1 || img.height < 1) {
    throw DecodeError("empty image passed to preprocess");
  }
  const Image resized =
      resize_bilinear(img, kPreprocessResize, kPreprocessResize);

  AugmentParams aug;  // defaults to the center crop
  if (mode == PreprocessMode::train) {
    if (rng == nullptr) {
      throw ShapeError("train-mode preprocess requires an rng");
    }
    aug = draw_augmentation(*rng);
  }

  ImageTensor t;
  t.width = kPreprocessCrop;
  t.height = kPreprocessCrop;
  t.v.resize(static_cast<std::size_t>(kPreprocessCrop) * kPreprocessCrop * 3);
  for (int y = 0; y < kPreprocessCrop; ++y) {
    for (int x = 0; x < kPreprocessCrop; ++x) {
      const int sx = aug.mirror ? (kPreprocessCrop - 1 - x) + aug.x0 : x + aug.x0;
      const int sy = y + aug.y0;
      const unsigned char* p = resized.pixel(sx, sy);
      float* q = t.v.data() + 3 * (static_cast<std::size_t>(y) * kPreprocessCrop + x);
      q[0] = static_cast<float>(p[0]) / 255.0f;
      q[1] = static_cast<float>(p[1]) / 255.0f;
      q[2] = static_cast<float>(p[2]) / 255.0f;
    }
  }
  return t;
}

namespace {

// mean, std, and 3-bin histogram per channel over a pixel rectangle.
void region_stats(const ImageTensor& t, int x0, int y0, int x1, int y1,
                  double out[ToyBackbone::kStatDims]) {
  double sum[3] = {0, 0, 0};
  double sum2[3] = {0, 0, 0};
  double hist[3][3] = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
  const double n = static_cast<double>(x1 - x0) * (y1 - y0);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      const float* p = t.pixel(x, y);
      for (int c = 0; c < 3; ++c) {
        const double v = p[c];
        sum[c] += v;
        sum2[c] += v * v;
        const int bin = std::min(2, static_cast<int>(v * 3.0));
        hist[c][bin] += 1.0;
      }
    }
  }
  for (int c = 0; c < 3; ++c) {
    const double mean = sum[c] / n;
    const double var = std::max(0.0, sum2[c] / n - mean * mean);
    out[c] = mean;
    out[3 + c] = std::sqrt(var);
    for (int b = 0; b < 3; ++b) {
      out[6 + 3 * c + b] = hist[c][b] / n;
    }
  }
}

}  // namespace

ToyBackbone::ToyBackbone(const FeatureSpec& spec, std::uint64_t seed)
    : spec_(spec) {
  if (!spec.valid()) throw ShapeError("invalid feature spec");
  Rng rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(kStatDims));
  proj_global_.resize(static_cast<std::size_t>(kStatDims) * spec.d1);
  for (auto& w : proj_global_) w = rng.normal() * scale;
  proj_cell_.resize(static_cast<std::size_t>(kStatDims) * spec.d2);
  for (auto& w : proj_cell_) w = rng.normal() * scale;
}

SceneFeatures ToyBackbone::extract(const ImageTensor& t) const {
  if (t.width != kPreprocessCrop || t.height != kPreprocessCrop) {
    throw ShapeError("toy backbone expects a 224x224 tensor");
  }
  SceneFeatures out;
  double stats[kStatDims];

  out.global.v.resize(spec_.d1);
  region_stats(t, 0, 0, t.width, t.height, stats);
  for (int j = 0; j < spec_.d1; ++j) {
    double acc = 0.0;
    for (int k = 0; k < kStatDims; ++k) {
      acc += stats[k] * proj_global_[static_cast<std::size_t>(k) * spec_.d1 + j];
    }
    out.global.v[j] = static_cast<float>(acc);
  }

  out.map.w = spec_.map_w;
  out.map.h = spec_.map_h;
  out.map.d2 = spec_.d2;
  out.map.v.resize(static_cast<std::size_t>(spec_.cells()) * spec_.d2);
  for (int gy = 0; gy < spec_.map_h; ++gy) {
    const int y0 = gy * t.height / spec_.map_h;
    const int y1 = (gy + 1) * t.height / spec_.map_h;
    for (int gx = 0; gx < spec_.map_w; ++gx) {
      const int x0 = gx * t.width / spec_.map_w;
      const int x1 = (gx + 1) * t.width / spec_.map_w;
      region_stats(t, x0, y0, x1, y1, stats);
      float* cell = out.map.cell(gy * spec_.map_w + gx);
      for (int j = 0; j < spec_.d2; ++j) {
        double acc = 0.0;
        for (int k = 0; k < kStatDims; ++k) {
          acc += stats[k] * proj_cell_[static_cast<std::size_t>(k) * spec_.d2 + j];
        }
        cell[j] = static_cast<float>(acc);
      }
    }
  }
  return out;
}

}  // namespace ctl

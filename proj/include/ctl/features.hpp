#pragma once

#include <cstdint>
#include <vector>

#include "ctl/image.hpp"
#include "ctl/rng.hpp"

namespace ctl {

struct FeatureSpec {
  int d1 = 64;     // global vector dim
  int map_w = 7;   // feature-map grid
  int map_h = 7;
  int d2 = 32;     // per-cell channel dim

  int cells() const { return map_w * map_h; }
  bool valid() const { return d1 >= 1 && map_w >= 1 && map_h >= 1 && d2 >= 1; }

  friend bool operator==(const FeatureSpec&, const FeatureSpec&) = default;
};

struct GlobalFeature {
  std::vector<float> v;
};

// Row-major grid of d2-vectors; cell i = gy * map_w + gx.
struct FeatureMap {
  int w = 0;
  int h = 0;
  int d2 = 0;
  std::vector<float> v;

  int cells() const { return w * h; }
  const float* cell(int i) const { return v.data() + static_cast<std::size_t>(i) * d2; }
  float* cell(int i) { return v.data() + static_cast<std::size_t>(i) * d2; }
};

struct SceneFeatures {
  GlobalFeature global;
  FeatureMap map;
};

// 224x224 RGB float tensor in [0,1], interleaved row-major.
struct ImageTensor {
  int width = 0;
  int height = 0;
  std::vector<float> v;

  const float* pixel(int x, int y) const {
    return v.data() + 3 * (static_cast<std::size_t>(y) * width + x);
  }
};

enum class PreprocessMode { train, eval };

struct AugmentParams {
  bool mirror = false;
  int x0 = 16;
  int y0 = 16;
};

// Draw order: mirror, then x offset, then y offset (each from [0, 32]).
AugmentParams draw_augmentation(Rng& rng);

// Resize to 256x256, then either a random mirrored 224 crop (train) or the
// deterministic center crop (eval). rng may be null in eval mode.
ImageTensor preprocess(const Image& img, PreprocessMode mode, Rng* rng);

constexpr int kPreprocessResize = 256;
constexpr int kPreprocessCrop = 224;

// Frozen feature extractor: per-cell and whole-image color statistics
// (mean, std, 3-bin histogram per channel) pushed through a fixed seeded
// random projection. Deterministic, no trainable state.
class ToyBackbone {
 public:
  ToyBackbone(const FeatureSpec& spec, std::uint64_t seed);

  SceneFeatures extract(const ImageTensor& tensor) const;
  const FeatureSpec& spec() const { return spec_; }

  static constexpr int kStatDims = 15;

 private:
  FeatureSpec spec_;
  std::vector<double> proj_global_;  // kStatDims x d1, row-major
  std::vector<double> proj_cell_;    // kStatDims x d2, row-major
};

}  // namespace ctl

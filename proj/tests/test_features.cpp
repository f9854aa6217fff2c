#include <doctest.h>

#include <cstring>
#include <set>

#include "ctl/features.hpp"

using namespace ctl;

namespace {

Image gradient_image(int w, int h) {
  Image img;
  img.width = w;
  img.height = h;
  img.rgb.resize(static_cast<std::size_t>(w) * h * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      unsigned char* p = img.pixel(x, y);
      p[0] = static_cast<unsigned char>((x * 7 + y * 13) % 256);
      p[1] = static_cast<unsigned char>((x * 3 + y * 5) % 256);
      p[2] = static_cast<unsigned char>((x + y) % 256);
    }
  }
  return img;
}

// 224x224 tensor built from 7x7 constant blocks.
ImageTensor block_tensor(const float colors[7][7][3]) {
  ImageTensor t;
  t.width = 224;
  t.height = 224;
  t.v.resize(224 * 224 * 3);
  for (int y = 0; y < 224; ++y) {
    for (int x = 0; x < 224; ++x) {
      float* p = t.v.data() + 3 * (y * 224 + x);
      for (int c = 0; c < 3; ++c) p[c] = colors[y / 32][x / 32][c];
    }
  }
  return t;
}

}  // namespace

TEST_CASE("eval preprocess is the deterministic center crop") {
  const Image img = gradient_image(256, 256);
  const ImageTensor a = preprocess(img, PreprocessMode::eval, nullptr);
  const ImageTensor b = preprocess(img, PreprocessMode::eval, nullptr);
  CHECK(a.v == b.v);
  REQUIRE(a.width == 224);
  REQUIRE(a.height == 224);
  // (256-224)/2 = 16: tensor (0,0) is source pixel (16,16).
  const unsigned char* src = img.pixel(16, 16);
  CHECK(a.pixel(0, 0)[0] == doctest::Approx(src[0] / 255.0f));
  const unsigned char* last = img.pixel(239, 239);
  CHECK(a.pixel(223, 223)[2] == doctest::Approx(last[2] / 255.0f));
}

TEST_CASE("train preprocess reproduces under a fixed rng state") {
  const Image img = gradient_image(300, 200);  // exercises the 256 resize
  Rng rng_a(5);
  Rng rng_b(5);
  const ImageTensor a = preprocess(img, PreprocessMode::train, &rng_a);
  const ImageTensor b = preprocess(img, PreprocessMode::train, &rng_b);
  CHECK(a.v == b.v);
  CHECK_THROWS_AS(preprocess(img, PreprocessMode::train, nullptr), ShapeError);
}

TEST_CASE("augmentation draws cover the full crop/mirror lattice") {
  Rng rng(123);
  std::set<int> seen;
  for (int i = 0; i < 60000; ++i) {
    const AugmentParams p = draw_augmentation(rng);
    seen.insert((p.mirror ? 1 : 0) * 33 * 33 + p.y0 * 33 + p.x0);
  }
  CHECK(seen.size() == 2 * 33 * 33);
}

TEST_CASE("toy backbone determinism and symmetry") {
  const FeatureSpec spec{16, 7, 7, 8};
  const ToyBackbone backbone(spec, 99);

  float flat[7][7][3];
  for (auto& row : flat) {
    for (auto& cell : row) {
      cell[0] = 0.25f;
      cell[1] = 0.5f;
      cell[2] = 0.75f;
    }
  }
  const ImageTensor constant = block_tensor(flat);
  const SceneFeatures f1 = backbone.extract(constant);
  const SceneFeatures f2 = backbone.extract(constant);
  CHECK(f1.global.v == f2.global.v);
  CHECK(f1.map.v == f2.map.v);

  // Constant image: every cell feature equals cell 0's.
  for (int i = 1; i < spec.cells(); ++i) {
    CHECK(std::memcmp(f1.map.cell(i), f1.map.cell(0),
                      sizeof(float) * spec.d2) == 0);
  }

  const ToyBackbone other_seed(spec, 100);
  CHECK(other_seed.extract(constant).global.v != f1.global.v);
}

TEST_CASE("toy backbone locality and translation") {
  const FeatureSpec spec{16, 7, 7, 8};
  const ToyBackbone backbone(spec, 7);

  float colors[7][7][3];
  Rng rng(4);
  for (auto& row : colors) {
    for (auto& cell : row) {
      for (auto& c : cell) c = static_cast<float>(rng.uniform());
    }
  }
  const SceneFeatures base = backbone.extract(block_tensor(colors));

  // Perturb only the top-left block: exactly cell 0 changes, plus the global.
  float perturbed[7][7][3];
  std::memcpy(perturbed, colors, sizeof(colors));
  perturbed[0][0][0] = colors[0][0][0] < 0.5f ? 0.9f : 0.1f;
  const SceneFeatures poked = backbone.extract(block_tensor(perturbed));
  CHECK(std::memcmp(poked.map.cell(0), base.map.cell(0),
                    sizeof(float) * spec.d2) != 0);
  for (int i = 1; i < spec.cells(); ++i) {
    CHECK(std::memcmp(poked.map.cell(i), base.map.cell(i),
                      sizeof(float) * spec.d2) == 0);
  }
  CHECK(poked.global.v != base.global.v);

  // Shift content one grid cell to the right: features permute with it.
  float shifted[7][7][3];
  for (int gy = 0; gy < 7; ++gy) {
    for (int gx = 0; gx < 7; ++gx) {
      const int src = gx == 0 ? 6 : gx - 1;
      for (int c = 0; c < 3; ++c) shifted[gy][gx][c] = colors[gy][src][c];
    }
  }
  const SceneFeatures moved = backbone.extract(block_tensor(shifted));
  for (int gy = 0; gy < 7; ++gy) {
    for (int gx = 1; gx < 7; ++gx) {
      CHECK(std::memcmp(moved.map.cell(gy * 7 + gx),
                        base.map.cell(gy * 7 + gx - 1),
                        sizeof(float) * spec.d2) == 0);
    }
  }
}

TEST_CASE("toy backbone validates shapes") {
  const ToyBackbone backbone(FeatureSpec{8, 2, 2, 4}, 1);
  ImageTensor bad;
  bad.width = 100;
  bad.height = 100;
  bad.v.resize(100 * 100 * 3);
  CHECK_THROWS_AS(backbone.extract(bad), ShapeError);
  CHECK_THROWS_AS(ToyBackbone(FeatureSpec{0, 7, 7, 8}, 1), ShapeError);
}

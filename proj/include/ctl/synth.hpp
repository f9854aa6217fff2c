#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ctl/records.hpp"

namespace ctl {

// Desk-scale surrogate for the non-public STL datasets. Scenes are flat
// backgrounds with distractor rectangles; products are flat-color images.
// The planted rule "color-match" declares a product compatible with a scene
// iff its palette color equals the scene background color. Product renders
// carry a small per-product jitter that stays inside one histogram bin, so
// the palette identity survives coarse color statistics while exact pixel
// values identify individual products.
struct SynthParams {
  int n_scenes = 200;
  int n_categories = 5;
  int n_products = 20;  // per category
  int image_size = 128;
  bool paste_product_into_scene = false;
  std::string rule = "color-match";
  std::uint64_t seed = 1;

  // Generator shape knobs.
  int pairs_per_scene = 2;
  int palette_size = 27;  // ≤ 27; small values create same-color products
  int color_jitter = 35;  // per-channel, keeps a color inside its bin
  int scene_jitter = 0;   // background shade jitter, also within-bin
  int n_distractors = 5;
  double bbox_min = 0.30;  // product box side range, as image fractions;
  double bbox_max = 0.55;  // placement always leaves a keepable top crop

  std::string out_dir;
};

struct SynthResult {
  std::vector<ScenePair> pairs;  // paths relative to out_dir
  std::map<std::string, int> product_palette;  // product_id -> palette index
  std::map<std::string, int> scene_palette;    // scene_id -> palette index
  std::string manifest_path;                   // out_dir/stl.manifest
};

// Writes scene/product PNGs and the STL manifest under params.out_dir.
// Deterministic given the seed; the pair structure is independent of the
// paste flag (pasting only changes rendering).
SynthResult synth_dataset(const SynthParams& params);

// The planted rule, exposed for tests and oracles.
bool rule_compatible(const SynthResult& data, const std::string& scene_id,
                     const std::string& product_id);

}  // namespace ctl

#pragma once

#include <map>
#include <string>
#include <vector>

#include "ctl/crop.hpp"
#include "ctl/feature_cache.hpp"
#include "ctl/features.hpp"

namespace ctl {

// Whether scene features come from the product-free crop or from the full
// scene image (the training-leakage comparison arm).
enum class SceneVariant { cropped, full };

SceneVariant scene_variant_from_string(const std::string& s);
const char* to_string(SceneVariant v);

// In-memory features for one manifest: scene features per example index,
// product globals by id.
struct FeatureTable {
  FeatureSpec spec;
  std::vector<SceneFeatures> scenes;
  std::map<std::string, GlobalFeature> products;

  const SceneFeatures& scene(int example_index) const;
  const GlobalFeature& product(const std::string& product_id) const;
};

// Deterministic eval-mode features straight from the toy backbone.
FeatureTable build_feature_table(const CTLManifest& manifest,
                                 const std::string& images_root,
                                 const ToyBackbone& backbone,
                                 SceneVariant variant);

// Features resolved by content hash from a cache of externally computed
// backbone outputs. Throws CacheMiss when an image has no entry.
FeatureTable build_feature_table(const CTLManifest& manifest,
                                 const std::string& images_root,
                                 const FeatureCache& cache,
                                 SceneVariant variant);

// Cache records (keyed by content hash) for every image the manifest needs:
// cropped scenes, products, and optionally full scenes. Record order is the
// manifest's, so output files are reproducible byte for byte.
std::vector<FeatureRecord> compute_feature_records(const CTLManifest& manifest,
                                                   const std::string& images_root,
                                                   const ToyBackbone& backbone,
                                                   bool include_full_scenes);

}  // namespace ctl

#include "ctl/feature_table.hpp"

#include <filesystem>

#include "ctl/errors.hpp"
#include "ctl/image.hpp"

namespace ctl {

namespace fs = std::filesystem;

SceneVariant scene_variant_from_string(const std::string& s) {
  if (s == "cropped") return SceneVariant::cropped;
  if (s == "full") return SceneVariant::full;
  throw UsageError("unknown scene variant '" + s + "' (expected cropped|full)");
}

const char* to_string(SceneVariant v) {
  return v == SceneVariant::cropped ? "cropped" : "full";
}

const SceneFeatures& FeatureTable::scene(int example_index) const {
  if (example_index < 0 || example_index >= static_cast<int>(scenes.size())) {
    throw ShapeError("example index out of range");
  }
  return scenes[example_index];
}

const GlobalFeature& FeatureTable::product(const std::string& product_id) const {
  auto it = products.find(product_id);
  if (it == products.end()) {
    throw CacheMissError("no features for product '" + product_id + "'");
  }
  return it->second;
}

namespace {

std::string resolve(const std::string& root, const std::string& rel) {
  fs::path p(rel);
  if (p.is_absolute() || root.empty()) return rel;
  return (fs::path(root) / p).string();
}

// Loads and memoizes source images by path.
class ImagePool {
 public:
  explicit ImagePool(std::string root) : root_(std::move(root)) {}

  const Image& get(const std::string& rel_path) {
    auto it = cache_.find(rel_path);
    if (it != cache_.end()) return it->second;
    return cache_.emplace(rel_path, load_png(resolve(root_, rel_path)))
        .first->second;
  }

 private:
  std::string root_;
  std::map<std::string, Image> cache_;
};

// The 256x256 image that defines an entry's content hash.
Image prepared_256(const Image& src, const BBox* crop_normalized) {
  if (crop_normalized != nullptr) {
    const BBox px = denormalize(*crop_normalized,
                                ImageDims{src.width, src.height});
    return resize_bilinear(crop_image(src, px), kPreprocessResize,
                           kPreprocessResize);
  }
  return resize_bilinear(src, kPreprocessResize, kPreprocessResize);
}

SceneFeatures extract_eval(const ToyBackbone& backbone, const Image& img256) {
  return backbone.extract(preprocess(img256, PreprocessMode::eval, nullptr));
}

template <typename SceneFn, typename ProductFn>
void walk_manifest(const CTLManifest& manifest, const std::string& root,
                   SceneVariant variant, SceneFn&& on_scene,
                   ProductFn&& on_product) {
  ImagePool pool(root);
  for (std::size_t i = 0; i < manifest.examples.size(); ++i) {
    const auto& ex = manifest.examples[i];
    const Image& scene_img = pool.get(ex.pair.scene_path);
    const BBox* crop =
        variant == SceneVariant::cropped ? &ex.crop : nullptr;
    on_scene(static_cast<int>(i), prepared_256(scene_img, crop));
  }
  std::map<std::string, bool> done;
  for (const auto& ex : manifest.examples) {
    if (done.count(ex.pair.product_id)) continue;
    done[ex.pair.product_id] = true;
    on_product(ex.pair.product_id,
               prepared_256(pool.get(ex.pair.product_path), nullptr));
  }
}

}  // namespace

FeatureTable build_feature_table(const CTLManifest& manifest,
                                 const std::string& images_root,
                                 const ToyBackbone& backbone,
                                 SceneVariant variant) {
  FeatureTable table;
  table.spec = backbone.spec();
  table.scenes.resize(manifest.examples.size());
  walk_manifest(
      manifest, images_root, variant,
      [&](int i, const Image& img) {
        table.scenes[i] = extract_eval(backbone, img);
      },
      [&](const std::string& id, const Image& img) {
        table.products[id] = extract_eval(backbone, img).global;
      });
  return table;
}

FeatureTable build_feature_table(const CTLManifest& manifest,
                                 const std::string& images_root,
                                 const FeatureCache& cache,
                                 SceneVariant variant) {
  FeatureTable table;
  table.spec = cache.spec;
  table.scenes.resize(manifest.examples.size());
  auto lookup = [&cache](const Image& img) -> const SceneFeatures& {
    const std::string id = image_content_hash(img);
    const SceneFeatures* f = cache.find(id);
    if (f == nullptr) {
      throw CacheMissError("no cache entry for image hash " + id);
    }
    return *f;
  };
  walk_manifest(
      manifest, images_root, variant,
      [&](int i, const Image& img) { table.scenes[i] = lookup(img); },
      [&](const std::string& id, const Image& img) {
        table.products[id] = lookup(img).global;
      });
  return table;
}

std::vector<FeatureRecord> compute_feature_records(const CTLManifest& manifest,
                                                   const std::string& images_root,
                                                   const ToyBackbone& backbone,
                                                   bool include_full_scenes) {
  std::vector<FeatureRecord> records;
  std::map<std::string, bool> seen;
  auto add = [&](const Image& img256) {
    const std::string id = image_content_hash(img256);
    if (seen.count(id)) return;
    seen[id] = true;
    records.push_back(FeatureRecord{id, extract_eval(backbone, img256)});
  };
  walk_manifest(
      manifest, images_root, SceneVariant::cropped,
      [&](int, const Image& img) { add(img); },
      [&](const std::string&, const Image& img) { add(img); });
  if (include_full_scenes) {
    walk_manifest(
        manifest, images_root, SceneVariant::full,
        [&](int, const Image& img) { add(img); },
        [&](const std::string&, const Image&) {});
  }
  return records;
}

}  // namespace ctl

#include "ctl/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>

#include "ctl/errors.hpp"
#include "ctl/image.hpp"
#include "ctl/manifest.hpp"
#include "ctl/rng.hpp"

namespace ctl {

namespace {

namespace fs = std::filesystem;

// Channel values sit at the centers of the three histogram bins
// ([0,85), [85,170), [170,255]); jitter up to ±42 stays inside a bin.
constexpr std::array<int, 3> kBinCenters = {42, 127, 212};

// Palette order chosen so small prefixes spread across all channels.
constexpr std::array<int, 27> kPaletteOrder = {
    0, 26, 13, 6, 20, 2, 18, 9, 24, 4, 22, 11, 15, 8,
    17, 1, 25, 10, 16, 3, 23, 5, 21, 7, 19, 12, 14};

struct Color {
  unsigned char r, g, b;
};

Color palette_color(int index) {
  const int k = kPaletteOrder[static_cast<std::size_t>(index)];
  return Color{static_cast<unsigned char>(kBinCenters[k % 3]),
               static_cast<unsigned char>(kBinCenters[(k / 3) % 3]),
               static_cast<unsigned char>(kBinCenters[(k / 9) % 3])};
}

Color jittered(const Color& c, int jitter, Rng& rng) {
  auto j = [&](unsigned char v) {
    const int d = static_cast<int>(rng.below(2 * jitter + 1)) - jitter;
    return static_cast<unsigned char>(std::clamp(static_cast<int>(v) + d, 0, 255));
  };
  return Color{j(c.r), j(c.g), j(c.b)};
}

std::string zero_pad(int v, int width) {
  std::string s = std::to_string(v);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

}  // namespace

SynthResult synth_dataset(const SynthParams& p) {
  if (p.n_scenes < 1 || p.n_categories < 1 || p.n_products < 1 ||
      p.image_size < 16 || p.pairs_per_scene < 1) {
    throw UsageError("synth parameters must be positive");
  }
  if (p.palette_size < 2 || p.palette_size > 27) {
    throw UsageError("palette_size must be in [2, 27]");
  }
  if (p.rule != "color-match") {
    throw UsageError("unknown planted rule '" + p.rule + "'");
  }
  if (p.bbox_min < 0.05 || p.bbox_max > 0.6 || p.bbox_min > p.bbox_max) {
    throw UsageError("bbox fractions must satisfy 0.05 <= min <= max <= 0.6");
  }
  if (p.out_dir.empty()) throw UsageError("synth requires an output directory");

  fs::create_directories(fs::path(p.out_dir) / "scenes");
  fs::create_directories(fs::path(p.out_dir) / "products");

  Rng rng(p.seed);
  SynthResult out;

  // Products: per category, palette colors without replacement when they
  // fit, with replacement otherwise. Each product renders with its own
  // jitter so exact pixel values are product-specific.
  struct Product {
    std::string id;
    int category;
    int palette;
    Color render;
  };
  std::vector<std::vector<Product>> products(p.n_categories);
  // palette index -> (category, product index)
  std::vector<std::vector<std::pair<int, int>>> owners(p.palette_size);

  for (int c = 0; c < p.n_categories; ++c) {
    std::vector<int> colors;
    if (p.n_products <= p.palette_size) {
      colors.resize(p.palette_size);
      for (int i = 0; i < p.palette_size; ++i) colors[i] = i;
      rng.shuffle(colors);
      colors.resize(p.n_products);
    } else {
      for (int i = 0; i < p.n_products; ++i) {
        colors.push_back(static_cast<int>(rng.below(p.palette_size)));
      }
    }
    for (int i = 0; i < p.n_products; ++i) {
      Product prod;
      prod.id = "p_c" + std::to_string(c) + "_" + zero_pad(i, 2);
      prod.category = c;
      prod.palette = colors[i];
      prod.render = jittered(palette_color(prod.palette), p.color_jitter, rng);
      owners[prod.palette].emplace_back(c, i);
      out.product_palette[prod.id] = prod.palette;
      products[c].push_back(prod);

      Image img = Image::filled(p.image_size, p.image_size, prod.render.r,
                                prod.render.g, prod.render.b);
      save_png((fs::path(p.out_dir) / "products" / (prod.id + ".png")).string(),
               img);
    }
  }

  const double S = static_cast<double>(p.image_size);
  for (int s = 0; s < p.n_scenes; ++s) {
    const std::string scene_id = "s" + zero_pad(s, 4);

    // First pair anchors the background color.
    const int c1 = static_cast<int>(rng.below(p.n_categories));
    const int i1 = static_cast<int>(rng.below(p.n_products));
    const Product& p1 = products[c1][i1];
    const int bg_palette = p1.palette;
    out.scene_palette[scene_id] = bg_palette;

    struct PlannedPair {
      const Product* product;
      BBox bbox;  // normalized
    };
    std::vector<PlannedPair> planned;
    auto sample_bbox = [&]() {
      const double w = rng.uniform(p.bbox_min, p.bbox_max);
      const double h = rng.uniform(p.bbox_min, std::min(p.bbox_max, 0.55));
      const double y0 = rng.uniform(0.35, std::min(0.60, 0.95 - h));
      const double x0 = rng.uniform(0.05, 0.95 - w);
      return BBox{x0, y0, x0 + w, y0 + h};
    };
    planned.push_back({&p1, sample_bbox()});

    // Extra pairs pull same-colored products from other categories.
    std::vector<const Product*> alternates;
    for (const auto& [cat, idx] : owners[bg_palette]) {
      if (cat != c1) alternates.push_back(&products[cat][idx]);
    }
    for (int k = 1; k < p.pairs_per_scene && !alternates.empty(); ++k) {
      const std::size_t pick = rng.below(alternates.size());
      planned.push_back({alternates[pick], sample_bbox()});
      alternates.erase(alternates.begin() + static_cast<std::ptrdiff_t>(pick));
    }

    const Color bg = jittered(palette_color(bg_palette), p.scene_jitter, rng);
    Image scene = Image::filled(p.image_size, p.image_size, bg.r, bg.g, bg.b);
    for (int d = 0; d < p.n_distractors; ++d) {
      const double w = rng.uniform(0.08, 0.20);
      const double h = rng.uniform(0.08, 0.20);
      const double x0 = rng.uniform(0.0, 1.0 - w);
      const double y0 = rng.uniform(0.0, 1.0 - h);
      int pal = static_cast<int>(rng.below(p.palette_size - 1));
      if (pal >= bg_palette) ++pal;  // distractors never match the background
      const Color dc = palette_color(pal);
      scene.fill_rect(static_cast<int>(std::floor(x0 * S)),
                      static_cast<int>(std::floor(y0 * S)),
                      static_cast<int>(std::ceil((x0 + w) * S)),
                      static_cast<int>(std::ceil((y0 + h) * S)), dc.r, dc.g,
                      dc.b);
    }
    if (p.paste_product_into_scene) {
      for (const auto& pl : planned) {
        scene.fill_rect(static_cast<int>(std::floor(pl.bbox.x0 * S)),
                        static_cast<int>(std::floor(pl.bbox.y0 * S)),
                        static_cast<int>(std::ceil(pl.bbox.x1 * S)),
                        static_cast<int>(std::ceil(pl.bbox.y1 * S)),
                        pl.product->render.r, pl.product->render.g,
                        pl.product->render.b);
      }
    }
    save_png((fs::path(p.out_dir) / "scenes" / (scene_id + ".png")).string(),
             scene);

    for (const auto& pl : planned) {
      ScenePair pair;
      pair.scene_id = scene_id;
      pair.product_id = pl.product->id;
      pair.scene_path = "scenes/" + scene_id + ".png";
      pair.product_path = "products/" + pl.product->id + ".png";
      pair.bbox = pl.bbox;
      pair.category = "cat" + std::to_string(pl.product->category);
      out.pairs.push_back(pair);
    }
  }

  out.manifest_path = (fs::path(p.out_dir) / "stl.manifest").string();
  write_stl_manifest(out.manifest_path, out.pairs);
  return out;
}

bool rule_compatible(const SynthResult& data, const std::string& scene_id,
                     const std::string& product_id) {
  return data.scene_palette.at(scene_id) == data.product_palette.at(product_id);
}

}  // namespace ctl

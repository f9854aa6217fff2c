#include "ctl/crop.hpp"

#include <algorithm>

#include "ctl/errors.hpp"

namespace ctl {

CropMode crop_mode_from_string(const std::string& s) {
  if (s == "fashion") return CropMode::fashion;
  if (s == "home") return CropMode::home;
  throw UsageError("unknown crop mode '" + s + "' (expected fashion|home)");
}

std::vector<std::pair<CropSide, BBox>> candidate_crops(const ImageDims& dims,
                                                       const BBox& ebox,
                                                       CropMode mode) {
  const double w = static_cast<double>(dims.width);
  const double h = static_cast<double>(dims.height);
  std::vector<std::pair<CropSide, BBox>> out;
  auto push = [&out](CropSide side, const BBox& b) {
    if (b.valid()) out.emplace_back(side, b);
  };
  push(CropSide::top, BBox{0.0, 0.0, w, ebox.y0});
  push(CropSide::bottom, BBox{0.0, ebox.y1, w, h});
  if (mode == CropMode::home) {
    push(CropSide::left, BBox{0.0, 0.0, ebox.x0, h});
    push(CropSide::right, BBox{ebox.x1, 0.0, w, h});
  }
  return out;
}

DeriveResult derive_ctl_example(const ScenePair& pair, const CropConfig& cfg) {
  if (cfg.excluded_categories.count(pair.category) > 0) {
    return DeriveResult{std::nullopt, DiscardReason::category};
  }

  // Normalized coordinates: the unit image.
  const ImageDims unit{1, 1};
  const BBox ebox = expand_bbox(pair.bbox, unit, cfg.expand_frac);
  const auto candidates = candidate_crops(unit, ebox, cfg.mode);

  // Largest area wins; enumeration order top > bottom > left > right breaks
  // ties, so a strictly-greater comparison keeps the earliest maximum.
  const std::pair<CropSide, BBox>* best = nullptr;
  for (const auto& cand : candidates) {
    if (best == nullptr || cand.second.area() > best->second.area()) {
      best = &cand;
    }
  }
  if (best == nullptr || best->second.area() < cfg.min_area_frac) {
    return DeriveResult{std::nullopt, DiscardReason::too_small};
  }

  CTLExample ex;
  ex.pair = pair;
  ex.crop = best->second;
  ex.crop_side = best->first;
  return DeriveResult{ex, std::nullopt};
}

CTLManifest generate_ctl(const std::vector<ScenePair>& stl_pairs,
                         const CropConfig& cfg) {
  CTLManifest m;
  m.config = cfg;
  m.stats.input_pairs = static_cast<std::int64_t>(stl_pairs.size());
  m.stats.discarded[to_string(DiscardReason::category)] = 0;
  m.stats.discarded[to_string(DiscardReason::too_small)] = 0;
  for (const ScenePair& pair : stl_pairs) {
    DeriveResult r = derive_ctl_example(pair, cfg);
    if (r.kept()) {
      m.examples.push_back(*r.example);
      ++m.stats.kept;
    } else {
      ++m.stats.discarded[to_string(*r.discard)];
    }
  }
  m.categories = build_category_table(m.examples);
  return m;
}

std::vector<Category> build_category_table(
    const std::vector<CTLExample>& examples) {
  std::vector<std::string> names;
  for (const auto& ex : examples) names.push_back(ex.pair.category);
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  std::vector<Category> table;
  table.reserve(names.size());
  for (std::size_t i = 0; i < names.size(); ++i) {
    table.push_back(Category{static_cast<int>(i), names[i]});
  }
  return table;
}

}  // namespace ctl

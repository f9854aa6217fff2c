#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "ctl/geometry.hpp"
#include "ctl/records.hpp"

namespace ctl {

// Fashion scenes keep only top/bottom candidate crops (subjects are vertical);
// home scenes consider all four sides.
enum class CropMode { fashion, home };

inline const char* to_string(CropMode m) {
  return m == CropMode::fashion ? "fashion" : "home";
}

CropMode crop_mode_from_string(const std::string& s);

struct CropConfig {
  double expand_frac = 0.05;
  double min_area_frac = 0.2;
  CropMode mode = CropMode::fashion;
  std::set<std::string> excluded_categories = {"dresses"};
};

enum class DiscardReason { category, too_small };

inline const char* to_string(DiscardReason r) {
  return r == DiscardReason::category ? "category" : "too_small";
}

// Either a kept example or the reason the pair was dropped.
struct DeriveResult {
  std::optional<CTLExample> example;
  std::optional<DiscardReason> discard;

  bool kept() const { return example.has_value(); }
};

struct GenerateStats {
  std::int64_t input_pairs = 0;
  std::int64_t kept = 0;
  std::map<std::string, std::int64_t> discarded;  // reason -> count
};

struct CTLManifest {
  std::vector<CTLExample> examples;
  std::vector<Category> categories;  // dense ids, sorted by name
  CropConfig config;
  GenerateStats stats;
};

// Complement rectangles of the expanded box, largest-area selection happens
// in derive_ctl_example. Zero-area candidates are omitted.
std::vector<std::pair<CropSide, BBox>> candidate_crops(const ImageDims& dims,
                                                       const BBox& ebox,
                                                       CropMode mode);

// Category filter, 5%-expansion, largest complement rectangle, minimum-area
// threshold against the full image area. Tie-break: top > bottom > left >
// right. Operates in normalized coordinates (the math is scale-invariant).
DeriveResult derive_ctl_example(const ScenePair& pair, const CropConfig& cfg);

CTLManifest generate_ctl(const std::vector<ScenePair>& stl_pairs,
                         const CropConfig& cfg);

// Dense category table over the example set, sorted by name.
std::vector<Category> build_category_table(const std::vector<CTLExample>& examples);

}  // namespace ctl

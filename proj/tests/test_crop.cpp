#include <doctest.h>

#include <cmath>
#include <optional>

#include "ctl/crop.hpp"
#include "ctl/rng.hpp"

using namespace ctl;

namespace {

// Independent complement-rectangle enumerator working in pixel units. Kept
// deliberately separate from the library's implementation: plain formulas,
// no candidate_crops / expand_bbox reuse.
struct OracleOutcome {
  bool kept = false;
  std::string reason;  // "category" | "too_small" when discarded
  CropSide side = CropSide::top;
  BBox crop_px;
};

OracleOutcome crop_oracle(double w, double h, const BBox& bbox_px,
                          const std::string& category, const CropConfig& cfg) {
  OracleOutcome out;
  if (cfg.excluded_categories.count(category)) {
    out.reason = "category";
    return out;
  }
  const double ex0 = std::max(0.0, bbox_px.x0 - cfg.expand_frac * w);
  const double ey0 = std::max(0.0, bbox_px.y0 - cfg.expand_frac * h);
  const double ex1 = std::min(w, bbox_px.x1 + cfg.expand_frac * w);
  const double ey1 = std::min(h, bbox_px.y1 + cfg.expand_frac * h);

  struct Candidate {
    CropSide side;
    BBox box;
  };
  std::vector<Candidate> candidates;
  candidates.push_back({CropSide::top, BBox{0, 0, w, ey0}});
  candidates.push_back({CropSide::bottom, BBox{0, ey1, w, h}});
  if (cfg.mode == CropMode::home) {
    candidates.push_back({CropSide::left, BBox{0, 0, ex0, h}});
    candidates.push_back({CropSide::right, BBox{ex1, 0, w, h}});
  }

  std::optional<Candidate> best;
  double best_area = 0.0;
  for (const auto& c : candidates) {
    const double cw = c.box.x1 - c.box.x0;
    const double ch = c.box.y1 - c.box.y0;
    if (cw <= 0.0 || ch <= 0.0) continue;
    const double area = cw * ch;
    if (!best.has_value() || area > best_area) {
      best = c;
      best_area = area;
    }
  }
  if (!best.has_value() || best_area < cfg.min_area_frac * w * h) {
    out.reason = "too_small";
    return out;
  }
  out.kept = true;
  out.side = best->side;
  out.crop_px = best->box;
  return out;
}

ScenePair make_pair(const BBox& bbox_norm, const std::string& category) {
  ScenePair p;
  p.scene_id = "s";
  p.product_id = "p";
  p.scene_path = "s.png";
  p.product_path = "p.png";
  p.bbox = bbox_norm;
  p.category = category;
  return p;
}

}  // namespace

TEST_CASE("candidate_crops enumerates complements") {
  const ImageDims dims{100, 100};
  const BBox ebox{20, 30, 80, 70};
  const auto home = candidate_crops(dims, ebox, CropMode::home);
  REQUIRE(home.size() == 4);
  CHECK(home[0].first == CropSide::top);
  CHECK(home[0].second.area() == doctest::Approx(3000));
  CHECK(home[1].first == CropSide::bottom);
  CHECK(home[1].second.area() == doctest::Approx(3000));
  CHECK(home[2].first == CropSide::left);
  CHECK(home[2].second.area() == doctest::Approx(2000));
  CHECK(home[3].first == CropSide::right);
  CHECK(home[3].second.area() == doctest::Approx(2000));

  // Full-image box leaves nothing.
  CHECK(candidate_crops(dims, BBox{0, 0, 100, 100}, CropMode::home).empty());

  // Continues the expand_bbox example: W=50, H=100.
  const auto fashion = candidate_crops(ImageDims{50, 100},
                                       BBox{7.5, 35, 42.5, 75},
                                       CropMode::fashion);
  REQUIRE(fashion.size() == 2);
  CHECK(fashion[0].second.area() == doctest::Approx(1750));
  CHECK(fashion[1].second.area() == doctest::Approx(1250));
}

TEST_CASE("derive_ctl_example keeps, discards, and tie-breaks") {
  CropConfig cfg;
  cfg.mode = CropMode::fashion;

  // The worked fashion example: top area 1750 >= 0.2 * 5000.
  const auto kept = derive_ctl_example(
      make_pair(BBox{10.0 / 50, 40.0 / 100, 40.0 / 50, 70.0 / 100}, "tops"),
      cfg);
  REQUIRE(kept.kept());
  CHECK(kept.example->crop_side == CropSide::top);

  const auto dress = derive_ctl_example(
      make_pair(BBox{0.2, 0.4, 0.8, 0.7}, "dresses"), cfg);
  REQUIRE_FALSE(dress.kept());
  CHECK(*dress.discard == DiscardReason::category);

  const auto full = derive_ctl_example(
      make_pair(BBox{0.01, 0.01, 0.99, 0.99}, "tops"), cfg);
  REQUIRE_FALSE(full.kept());
  CHECK(*full.discard == DiscardReason::too_small);

  // Symmetric box in home mode (exactly representable coordinates): all four
  // candidates tie, top must win.
  CropConfig home;
  home.mode = CropMode::home;
  home.expand_frac = 0.0;
  home.min_area_frac = 0.05;
  const auto tie = derive_ctl_example(
      make_pair(BBox{0.25, 0.25, 0.75, 0.75}, "rugs"), home);
  REQUIRE(tie.kept());
  CHECK(tie.example->crop_side == CropSide::top);
}

TEST_CASE("derive_ctl_example matches the brute-force oracle") {
  Rng rng(20240501);
  CropConfig cfg;
  int kept_count = 0;
  for (int i = 0; i < 1000; ++i) {
    const double w = 50 + static_cast<double>(rng.below(450));
    const double h = 50 + static_cast<double>(rng.below(450));
    const double bx0 = rng.uniform(0.0, w * 0.9);
    const double by0 = rng.uniform(0.0, h * 0.9);
    const BBox bbox_px{bx0, by0, bx0 + rng.uniform(1.0, w - bx0),
                       by0 + rng.uniform(1.0, h - by0)};
    cfg.mode = rng.bernoulli(0.5) ? CropMode::fashion : CropMode::home;
    const std::string category = rng.bernoulli(0.05) ? "dresses" : "tops";

    const OracleOutcome expected = crop_oracle(w, h, bbox_px, category, cfg);

    const BBox bbox_norm{bbox_px.x0 / w, bbox_px.y0 / h, bbox_px.x1 / w,
                         bbox_px.y1 / h};
    const DeriveResult got = derive_ctl_example(make_pair(bbox_norm, category),
                                                cfg);

    REQUIRE(got.kept() == expected.kept);
    if (!expected.kept) {
      CHECK(to_string(*got.discard) == expected.reason);
      continue;
    }
    ++kept_count;
    CHECK(got.example->crop_side == expected.side);
    CHECK(got.example->crop.x0 * w == doctest::Approx(expected.crop_px.x0));
    CHECK(got.example->crop.y0 * h == doctest::Approx(expected.crop_px.y0));
    CHECK(got.example->crop.x1 * w == doctest::Approx(expected.crop_px.x1));
    CHECK(got.example->crop.y1 * h == doctest::Approx(expected.crop_px.y1));

    // The kept crop never touches the expanded box.
    const BBox ebox = expand_bbox(bbox_norm, ImageDims{1, 1}, cfg.expand_frac);
    CHECK(intersection_area(got.example->crop, ebox) == 0.0);
  }
  CHECK(kept_count > 400);  // the generator emits mostly keepable boxes
}

TEST_CASE("generate_ctl accounting") {
  CropConfig cfg;
  cfg.mode = CropMode::fashion;
  std::vector<ScenePair> pairs;
  pairs.push_back(make_pair(BBox{0.2, 0.5, 0.6, 0.8}, "dresses"));
  pairs.push_back(make_pair(BBox{0.01, 0.01, 0.99, 0.99}, "tops"));
  pairs.push_back(make_pair(BBox{0.2, 0.5, 0.6, 0.8}, "tops"));

  const CTLManifest m = generate_ctl(pairs, cfg);
  CHECK(m.stats.input_pairs == 3);
  CHECK(m.stats.kept == 1);
  CHECK(m.stats.discarded.at("category") == 1);
  CHECK(m.stats.discarded.at("too_small") == 1);
  CHECK(m.examples.size() == 1);
  REQUIRE(m.categories.size() == 1);
  CHECK(m.categories[0].name == "tops");

  const CTLManifest empty = generate_ctl({}, cfg);
  CHECK(empty.stats.input_pairs == 0);
  CHECK(empty.stats.kept == 0);
  CHECK(empty.examples.empty());

  // kept + discarded sums to the input count on random batches.
  Rng rng(99);
  std::vector<ScenePair> random_pairs;
  for (int i = 0; i < 200; ++i) {
    const double x0 = rng.uniform(0.0, 0.8);
    const double y0 = rng.uniform(0.0, 0.8);
    random_pairs.push_back(make_pair(
        BBox{x0, y0, x0 + rng.uniform(0.05, 1.0 - x0),
             y0 + rng.uniform(0.05, 1.0 - y0)},
        rng.bernoulli(0.1) ? "dresses" : "tops"));
  }
  const CTLManifest rm = generate_ctl(random_pairs, cfg);
  std::int64_t discarded = 0;
  for (const auto& [reason, count] : rm.stats.discarded) discarded += count;
  CHECK(rm.stats.kept + discarded == rm.stats.input_pairs);
}

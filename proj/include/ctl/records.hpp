#pragma once

#include <string>
#include <vector>

#include "ctl/errors.hpp"
#include "ctl/geometry.hpp"

namespace ctl {

struct Category {
  int id = -1;
  std::string name;
};

enum class CropSide { top, bottom, left, right };

inline const char* to_string(CropSide s) {
  switch (s) {
    case CropSide::top: return "top";
    case CropSide::bottom: return "bottom";
    case CropSide::left: return "left";
    case CropSide::right: return "right";
  }
  return "top";
}

inline CropSide crop_side_from_string(const std::string& s) {
  if (s == "top") return CropSide::top;
  if (s == "bottom") return CropSide::bottom;
  if (s == "left") return CropSide::left;
  if (s == "right") return CropSide::right;
  throw ManifestParseError("unknown crop side '" + s + "'");
}

// One compatible scene-product annotation. Box coordinates are normalized
// to [0,1] relative to the scene image.
struct ScenePair {
  std::string scene_id;
  std::string product_id;
  std::string scene_path;
  std::string product_path;
  BBox bbox;
  std::string category;
};

// A ScenePair whose scene has been restricted to a product-free crop.
struct CTLExample {
  ScenePair pair;
  BBox crop;  // normalized, never intersects the expanded bbox
  CropSide crop_side = CropSide::top;
};

}  // namespace ctl

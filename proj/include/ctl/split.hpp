#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ctl/errors.hpp"

namespace ctl {

enum class Split { train, val, test };

inline const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

inline Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw ManifestParseError("unknown split name '" + s + "'");
}

struct SplitAssignment {
  std::map<std::string, Split> by_scene;

  Split of(const std::string& scene_id) const {
    auto it = by_scene.find(scene_id);
    if (it == by_scene.end()) {
      throw ManifestParseError("scene '" + scene_id + "' has no split");
    }
    return it->second;
  }
};

// Seeded shuffle of the unique scene ids, then assignment by cumulative
// ratio. All pairs of a scene inherit its split.
SplitAssignment split_scenes(const std::vector<std::string>& scene_ids,
                             const std::array<double, 3>& ratios,
                             std::uint64_t seed);

}  // namespace ctl

#include "ctl/split.hpp"

#include <algorithm>
#include <cmath>

#include "ctl/rng.hpp"

namespace ctl {

SplitAssignment split_scenes(const std::vector<std::string>& scene_ids,
                             const std::array<double, 3>& ratios,
                             std::uint64_t seed) {
  const double sum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(sum - 1.0) > 1e-9) {
    throw UsageError("split ratios must sum to 1");
  }

  // Deduplicate, preserving first-appearance order.
  std::vector<std::string> unique_ids;
  {
    std::map<std::string, bool> seen;
    for (const auto& id : scene_ids) {
      if (!seen.count(id)) {
        seen[id] = true;
        unique_ids.push_back(id);
      }
    }
  }

  Rng rng(seed);
  rng.shuffle(unique_ids);

  const auto n = static_cast<std::int64_t>(unique_ids.size());
  const auto b1 = static_cast<std::int64_t>(std::llround(ratios[0] * n));
  const auto b2 =
      static_cast<std::int64_t>(std::llround((ratios[0] + ratios[1]) * n));

  SplitAssignment out;
  for (std::int64_t i = 0; i < n; ++i) {
    Split s = i < b1 ? Split::train : (i < b2 ? Split::val : Split::test);
    out.by_scene[unique_ids[i]] = s;
  }
  return out;
}

}  // namespace ctl

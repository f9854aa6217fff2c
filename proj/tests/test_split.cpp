#include <doctest.h>

#include "ctl/split.hpp"

using namespace ctl;

namespace {

std::vector<std::string> scene_ids(int n) {
  std::vector<std::string> ids;
  for (int i = 0; i < n; ++i) ids.push_back("scene" + std::to_string(i));
  return ids;
}

}  // namespace

TEST_CASE("split_scenes hits exact ratios on 10 scenes") {
  const auto splits = split_scenes(scene_ids(10), {0.8, 0.1, 0.1}, 7);
  int train = 0, val = 0, test = 0;
  for (const auto& [id, s] : splits.by_scene) {
    if (s == Split::train) ++train;
    if (s == Split::val) ++val;
    if (s == Split::test) ++test;
  }
  CHECK(train == 8);
  CHECK(val == 1);
  CHECK(test == 1);
}

TEST_CASE("split_scenes is deterministic and total") {
  const auto ids = scene_ids(137);
  const auto a = split_scenes(ids, {0.8, 0.1, 0.1}, 42);
  const auto b = split_scenes(ids, {0.8, 0.1, 0.1}, 42);
  CHECK(a.by_scene == b.by_scene);
  CHECK(a.by_scene.size() == ids.size());

  const auto c = split_scenes(ids, {0.8, 0.1, 0.1}, 43);
  CHECK(a.by_scene != c.by_scene);
}

TEST_CASE("duplicate scene ids collapse to one assignment") {
  std::vector<std::string> ids = {"s1", "s2", "s1", "s3", "s2", "s1"};
  const auto splits = split_scenes(ids, {0.5, 0.25, 0.25}, 1);
  CHECK(splits.by_scene.size() == 3);
  // All pairs of one scene inherit the single entry by construction.
  CHECK_NOTHROW(splits.of("s1"));
}

TEST_CASE("bad ratios are rejected") {
  CHECK_THROWS_AS(split_scenes(scene_ids(5), {0.5, 0.2, 0.2}, 1), UsageError);
}

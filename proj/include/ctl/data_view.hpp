#pragma once

#include <map>
#include <string>
#include <vector>

#include "ctl/crop.hpp"
#include "ctl/split.hpp"

namespace ctl {

// One manifest pair resolved against the category table and its manifest
// position (the example index keys scene features).
struct PairSample {
  int example_index = -1;
  std::string scene_id;
  std::string product_id;
  int category_id = -1;
};

// category id -> sorted unique product ids.
using Catalog = std::vector<std::vector<std::string>>;

struct DataView {
  std::vector<PairSample> train, val, test;
  Catalog train_catalog, val_catalog, test_catalog;
  int n_categories = 0;
};

int category_id_of(const std::vector<Category>& table, const std::string& name);

Catalog build_catalog(const std::vector<PairSample>& pairs, int n_categories);

DataView build_data_view(const CTLManifest& manifest,
                         const SplitAssignment& splits);

}  // namespace ctl

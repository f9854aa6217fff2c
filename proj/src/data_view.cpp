#include "ctl/data_view.hpp"

#include <algorithm>

#include "ctl/errors.hpp"

namespace ctl {

int category_id_of(const std::vector<Category>& table,
                   const std::string& name) {
  for (const auto& c : table) {
    if (c.name == name) return c.id;
  }
  throw ManifestParseError("category '" + name + "' missing from the table");
}

Catalog build_catalog(const std::vector<PairSample>& pairs, int n_categories) {
  Catalog catalog(n_categories);
  for (const auto& p : pairs) {
    catalog[p.category_id].push_back(p.product_id);
  }
  for (auto& products : catalog) {
    std::sort(products.begin(), products.end());
    products.erase(std::unique(products.begin(), products.end()),
                   products.end());
  }
  return catalog;
}

DataView build_data_view(const CTLManifest& manifest,
                         const SplitAssignment& splits) {
  DataView view;
  view.n_categories = static_cast<int>(manifest.categories.size());
  for (std::size_t i = 0; i < manifest.examples.size(); ++i) {
    const auto& ex = manifest.examples[i];
    PairSample s;
    s.example_index = static_cast<int>(i);
    s.scene_id = ex.pair.scene_id;
    s.product_id = ex.pair.product_id;
    s.category_id = category_id_of(manifest.categories, ex.pair.category);
    switch (splits.of(s.scene_id)) {
      case Split::train: view.train.push_back(s); break;
      case Split::val: view.val.push_back(s); break;
      case Split::test: view.test.push_back(s); break;
    }
  }
  view.train_catalog = build_catalog(view.train, view.n_categories);
  view.val_catalog = build_catalog(view.val, view.n_categories);
  view.test_catalog = build_catalog(view.test, view.n_categories);
  return view;
}

}  // namespace ctl

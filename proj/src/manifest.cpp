#include "ctl/manifest.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ctl/errors.hpp"

namespace ctl {

namespace {

using nlohmann::json;

constexpr int kManifestVersion = 1;

json bbox_to_json(const BBox& b) {
  return json{{"x0", b.x0}, {"y0", b.y0}, {"x1", b.x1}, {"y1", b.y1}};
}

BBox bbox_from_json(const json& j) {
  BBox b{j.at("x0").get<double>(), j.at("y0").get<double>(),
         j.at("x1").get<double>(), j.at("y1").get<double>()};
  if (!b.valid()) {
    throw ManifestParseError("degenerate bbox in manifest record");
  }
  return b;
}

json pair_to_json(const ScenePair& p) {
  json j;
  j["scene_id"] = p.scene_id;
  j["product_id"] = p.product_id;
  j["scene_path"] = p.scene_path;
  j["product_path"] = p.product_path;
  j["bbox"] = bbox_to_json(p.bbox);
  j["category"] = p.category;
  return j;
}

ScenePair pair_from_json(const json& j) {
  ScenePair p;
  p.scene_id = j.at("scene_id").get<std::string>();
  p.product_id = j.at("product_id").get<std::string>();
  p.scene_path = j.at("scene_path").get<std::string>();
  p.product_path = j.at("product_path").get<std::string>();
  p.bbox = bbox_from_json(j.at("bbox"));
  p.category = j.at("category").get<std::string>();
  return p;
}

json parse_line(const std::string& line, const std::string& path, int lineno) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw ManifestParseError(path + ":" + std::to_string(lineno) +
                             ": not a JSON object");
  }
  return j;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return in;
}

}  // namespace

std::vector<ScenePair> read_stl_manifest(const std::string& path) {
  auto in = open_in(path);
  std::vector<ScenePair> pairs;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      pairs.push_back(pair_from_json(parse_line(line, path, lineno)));
    } catch (const json::exception& e) {
      throw ManifestParseError(path + ":" + std::to_string(lineno) + ": " +
                               e.what());
    }
  }
  return pairs;
}

void write_stl_manifest(const std::string& path,
                        const std::vector<ScenePair>& pairs) {
  auto out = open_out(path);
  for (const auto& p : pairs) {
    out << pair_to_json(p).dump() << "\n";
  }
}

CTLManifest read_ctl_manifest(const std::string& path) {
  auto in = open_in(path);
  CTLManifest m;
  std::string line;
  int lineno = 0;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = parse_line(line, path, lineno);
      if (!saw_header) {
        if (j.value("format", "") != "ctl-manifest") {
          throw ManifestParseError(path + ": missing ctl-manifest header");
        }
        if (j.at("version").get<int>() != kManifestVersion) {
          throw FormatVersionMismatchError(
              path + ": unsupported manifest version");
        }
        const json& cfg = j.at("config");
        m.config.expand_frac = cfg.at("expand_frac").get<double>();
        m.config.min_area_frac = cfg.at("min_area_frac").get<double>();
        m.config.mode =
            crop_mode_from_string(cfg.at("mode").get<std::string>());
        m.config.excluded_categories.clear();
        for (const auto& c : cfg.at("excluded_categories")) {
          m.config.excluded_categories.insert(c.get<std::string>());
        }
        int next_id = 0;
        for (const auto& c : j.at("categories")) {
          m.categories.push_back(Category{next_id++, c.get<std::string>()});
        }
        const json& st = j.at("stats");
        m.stats.input_pairs = st.at("input_pairs").get<std::int64_t>();
        m.stats.kept = st.at("kept").get<std::int64_t>();
        for (const auto& [reason, count] : st.at("discarded").items()) {
          m.stats.discarded[reason] = count.get<std::int64_t>();
        }
        saw_header = true;
        continue;
      }
      CTLExample ex;
      ex.pair = pair_from_json(j);
      ex.crop = bbox_from_json(j.at("crop"));
      ex.crop_side = crop_side_from_string(j.at("crop_side").get<std::string>());
      m.examples.push_back(std::move(ex));
    } catch (const json::exception& e) {
      throw ManifestParseError(path + ":" + std::to_string(lineno) + ": " +
                               e.what());
    }
  }
  if (!saw_header) {
    throw ManifestParseError(path + ": empty or headerless ctl manifest");
  }
  return m;
}

void write_ctl_manifest(const std::string& path, const CTLManifest& m) {
  auto out = open_out(path);
  json header;
  header["format"] = "ctl-manifest";
  header["version"] = kManifestVersion;
  json cfg;
  cfg["expand_frac"] = m.config.expand_frac;
  cfg["min_area_frac"] = m.config.min_area_frac;
  cfg["mode"] = to_string(m.config.mode);
  cfg["excluded_categories"] = m.config.excluded_categories;
  header["config"] = cfg;
  json cats = json::array();
  for (const auto& c : m.categories) cats.push_back(c.name);
  header["categories"] = cats;
  json stats;
  stats["input_pairs"] = m.stats.input_pairs;
  stats["kept"] = m.stats.kept;
  stats["discarded"] = m.stats.discarded;
  header["stats"] = stats;
  out << header.dump() << "\n";
  for (const auto& ex : m.examples) {
    json j = pair_to_json(ex.pair);
    j["crop"] = bbox_to_json(ex.crop);
    j["crop_side"] = to_string(ex.crop_side);
    out << j.dump() << "\n";
  }
}

SplitAssignment read_split_file(const std::string& path) {
  auto in = open_in(path);
  SplitAssignment s;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw ManifestParseError(path + ":" + std::to_string(lineno) +
                               ": expected 'scene_id<TAB>split'");
    }
    s.by_scene[line.substr(0, tab)] = split_from_string(line.substr(tab + 1));
  }
  return s;
}

void write_split_file(const std::string& path, const SplitAssignment& splits) {
  auto out = open_out(path);
  for (const auto& [scene_id, split] : splits.by_scene) {
    out << scene_id << "\t" << to_string(split) << "\n";
  }
}

}  // namespace ctl

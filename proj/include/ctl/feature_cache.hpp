#pragma once

#include <map>
#include <string>
#include <vector>

#include "ctl/features.hpp"

namespace ctl {

// Bit-exact binary cache of frozen features, the handoff point for
// externally computed backbone outputs. Entries are keyed by a content hash
// of the decoded 256x256 RGB image so recompression does not invalidate
// them.
//
// Layout (little-endian): magic "CTLFEAT\x01", u32 version, u32 d1, u32
// map_w, u32 map_h, u32 d2, then per record: u32 id length, id bytes, d1
// f32 globals, w*h*d2 f32 map values, u32 CRC-32 of the record bytes.

struct FeatureRecord {
  std::string id;
  SceneFeatures features;
};

struct FeatureCache {
  FeatureSpec spec;
  std::vector<FeatureRecord> records;
  std::map<std::string, std::size_t> index;

  const SceneFeatures* find(const std::string& id) const {
    auto it = index.find(id);
    return it == index.end() ? nullptr : &records[it->second].features;
  }
};

void write_feature_cache(const std::string& path, const FeatureSpec& spec,
                         const std::vector<FeatureRecord>& records);

FeatureCache read_feature_cache(const std::string& path);

// 16-hex-digit FNV-1a64 of the raw interleaved RGB bytes.
std::string image_content_hash(const Image& img);

}  // namespace ctl

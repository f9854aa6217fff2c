#pragma once

#include <string>
#include <vector>

#include "ctl/crop.hpp"
#include "ctl/records.hpp"
#include "ctl/split.hpp"

namespace ctl {

// Manifests are line-delimited JSON with normalized box coordinates. The CTL
// manifest starts with a header record carrying the format version, the
// CropConfig echo, the category table, and generation stats.

std::vector<ScenePair> read_stl_manifest(const std::string& path);
void write_stl_manifest(const std::string& path,
                        const std::vector<ScenePair>& pairs);

CTLManifest read_ctl_manifest(const std::string& path);
void write_ctl_manifest(const std::string& path, const CTLManifest& manifest);

SplitAssignment read_split_file(const std::string& path);
void write_split_file(const std::string& path, const SplitAssignment& splits);

}  // namespace ctl

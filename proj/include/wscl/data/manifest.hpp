#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "wscl/data/record.hpp"

namespace wscl {

// One dataset entry as stored on disk. Paths are relative to the manifest
// directory. mask_path is present iff label == 1.
struct SampleRecord {
  std::string id;
  std::string image_path;
  int label = 0;
  ManipulationKind kind = ManipulationKind::kNone;
  std::optional<std::string> mask_path;

  bool operator==(const SampleRecord&) const = default;
};

struct DatasetManifest {
  std::string split;
  std::uint64_t seed = 0;
  std::size_t image_size = 0;
  std::vector<SampleRecord> records;

  std::map<std::string, std::size_t> counts() const;
  // Unique ids, label/kind/mask consistency. Throws std::invalid_argument.
  void validate() const;
};

// Writes <dir>/manifest.jsonl (one record per line) and <dir>/dataset.json
// (split, seed, image size, per-kind counts).
void write_manifest(const std::filesystem::path& dir, const DatasetManifest& manifest);
// Accepts the dataset directory or the manifest.jsonl path. dataset.json is
// optional; without it split/seed/size stay at their defaults.
DatasetManifest read_manifest(const std::filesystem::path& path);
std::filesystem::path manifest_dir(const std::filesystem::path& path);

}  // namespace wscl

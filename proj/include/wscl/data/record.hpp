#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace wscl {

enum class ManipulationKind { kNone, kCopyMove, kSplice, kInpaint };

std::string_view to_string(ManipulationKind kind);
// Accepts "none", "copy_move", "splice", "inpaint".
ManipulationKind parse_manipulation_kind(std::string_view name);

// What the training path may see of a sample: no mask, no manipulation kind.
struct WeakRecord {
  std::string id;
  std::filesystem::path image_path;  // absolute (resolved against the manifest dir)
  int label = 0;
};

struct WeakManifest {
  std::filesystem::path directory;
  std::vector<WeakRecord> records;
};

// Reads manifest.jsonl (or a directory containing it) keeping only the
// weak fields of each line.
WeakManifest load_weak_manifest(const std::filesystem::path& path);

}  // namespace wscl

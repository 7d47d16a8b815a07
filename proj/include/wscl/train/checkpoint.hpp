#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "wscl/tensor.hpp"
#include "wscl/train/config.hpp"

namespace wscl {

inline constexpr int kCheckpointVersion = 1;

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<double> values;  // exact copies of the stored dtype
};

// File layout: 8-byte magic "WSCLCKPT", uint64 little-endian header length,
// UTF-8 JSON header, then the tensor arrays back to back as little-endian
// IEEE-754 (32-bit for f32 runs, 64-bit for f64 runs). The header's
// "tensors" directory gives each array's name, shape, byte offset (relative
// to the start of the data section) and element count.
struct Checkpoint {
  int version = kCheckpointVersion;
  RunConfig config;
  int epoch = 0;  // completed epochs
  std::string rng_state;
  std::optional<double> best_val_auc;
  std::int64_t adam_step = 0;
  std::vector<CheckpointEntry> tensors;

  const CheckpointEntry* find(const std::string& name) const;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
// Throws IoError on unreadable/corrupt files.
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Copies every stream parameter from the checkpoint; throws
// std::invalid_argument on a missing entry or a shape mismatch.
template <typename T>
void load_parameters(Detector<T>& detector, const Checkpoint& ckpt);

// Detector built from the checkpoint's configuration and weights.
template <typename T>
Detector<T> detector_from_checkpoint(const Checkpoint& ckpt);

}  // namespace wscl

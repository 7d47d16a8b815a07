#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "wscl/detector.hpp"

namespace wscl {

enum class Precision { kF32, kF64 };

std::string_view to_string(Precision p);
Precision parse_precision(std::string_view name);  // "f32" | "f64"

// Every knob of a training run. Field names map to CLI flags in kebab-case
// (batch_size -> --batch-size).
struct RunConfig {
  std::size_t image_size = 64;
  int epochs = 30;
  std::size_t batch_size = 16;
  double lr = 1e-4;
  double lr_decay = 0.1;  // applied from epoch ceil(5T/6) (0-based) onward
  double weight_decay = 5e-4;
  double theta = 0.5;
  double lambda_msc = 0.1;
  double lambda_ipc = 0.1;
  double w_rgb = 1.0;
  double w_srm = 2.0;
  double w_bayar = 2.0;
  IpcMode ipc_mode = IpcMode::kEnsemble;
  FusionMode fusion = FusionMode::kLate;
  PoolKind pooling = PoolKind::kAdaptive;
  VolumeScale volume_scale = VolumeScale::kTapChannels;
  std::vector<SourceKind> streams{SourceKind::kRgb, SourceKind::kSrm, SourceKind::kBayar};
  Precision precision = Precision::kF32;
  double val_fraction = 0.1;
  std::size_t augment_pad = 4;
  std::uint64_t seed = 0;

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
  DetectorSpec detector_spec() const;

  // 0-based epoch at which the decayed rate takes over.
  int decay_epoch() const;
  double lr_at(int epoch) const;
  // Warm-up clock: 0 on the first epoch, T on the last.
  double warmup_time(int epoch) const;
};

nlohmann::json to_json(const RunConfig& c);
// Missing keys keep their defaults; unknown keys are rejected.
RunConfig run_config_from_json(const nlohmann::json& j);

std::string streams_to_string(const std::vector<SourceKind>& streams);
std::vector<SourceKind> parse_streams(std::string_view list);  // "rgb,srm,bayar"

}  // namespace wscl

#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "wscl/pooling.hpp"
#include "wscl/tensor.hpp"

namespace wscl {

enum class IpcMode { kSelf, kEnsemble };
enum class FusionMode { kLate, kEarly };
// Denominator of the patch similarity: sqrt(tap channels) or sqrt(embedding width).
enum class VolumeScale { kTapChannels, kEmbedDim };

std::string_view to_string(IpcMode mode);
std::string_view to_string(FusionMode mode);
std::string_view to_string(VolumeScale scale);
IpcMode parse_ipc_mode(std::string_view name);
FusionMode parse_fusion_mode(std::string_view name);
VolumeScale parse_volume_scale(std::string_view name);

struct EnsembleConfig {
  double w_rgb = 1.0;
  double w_srm = 2.0;
  double w_bayar = 2.0;
  double theta = 0.5;
  double lambda_msc = 0.1;
  double lambda_ipc = 0.1;
  int total_epochs = 30;
  IpcMode ipc_mode = IpcMode::kEnsemble;
  FusionMode fusion = FusionMode::kLate;
  PoolKind pooling = PoolKind::kAdaptive;
  VolumeScale volume_scale = VolumeScale::kTapChannels;

  // Throws std::invalid_argument on out-of-range values.
  void validate() const;
};

class NonFiniteLoss : public std::runtime_error {
 public:
  explicit NonFiniteLoss(const std::string& term)
      : std::runtime_error("non-finite loss term: " + term), term_(term) {}
  const std::string& term() const { return term_; }

 private:
  std::string term_;
};

// Weighted average of same-shape maps; differentiable.
template <typename T>
Tensor<T> ensemble_map(const std::vector<Tensor<T>>& maps, std::span<const double> weights);

// Binarized (>= theta) and detached.
template <typename T>
Tensor<T> pseudo_gt(const Tensor<T>& ensemble, double theta);

// Mean per-pixel BCE of a stream map against the (constant) pseudo ground truth.
template <typename T>
Tensor<T> msc_loss(const Tensor<T>& pseudo, const Tensor<T>& source_map);

// e1, e2: [N,H',W',D] -> [N,H',W',H',W'], v = 1 - sigmoid(<e1[i,j], e2[h,k]> / sqrt(scale_dim)).
template <typename T>
Tensor<T> consistency_volume(const Tensor<T>& e1, const Tensor<T>& e2, std::size_t scale_dim);

// Nearest-neighbour resample of binary maps [N,H,W] -> [N,h,w], sampling
// source pixel floor((i + 0.5) * H / h).
template <typename T>
Tensor<T> downsample_nearest(const Tensor<T>& maps, std::size_t h, std::size_t w);

// Binary maps [N,H,W] -> detached [N,h,w,h,w]: 0 where the two downsampled
// locations agree, 1 where they differ.
template <typename T>
Tensor<T> target_volume(const Tensor<T>& binary_maps, std::size_t h, std::size_t w);

template <typename T>
Tensor<T> ipc_loss(const Tensor<T>& target, const Tensor<T>& volume);

// exp(-5 (1 - t/T)^2)
double warmup(double t, double total);

// IPC teacher: the stream's own binarized map (SELF) or the ensemble pseudo
// ground truth (ENSEMBLE).
template <typename T>
Tensor<T> select_ipc_target(IpcMode mode, const Tensor<T>& own_map, const Tensor<T>& ensemble_binary,
                            double theta);

template <typename T>
struct StreamLossTerms {
  std::string stream;  // name used in diagnostics
  Tensor<T> acls;
  Tensor<T> msc;  // undefined when disabled
  Tensor<T> ipc;  // undefined when disabled
};

// Sum over streams of A-CLS + w(t) lambda_msc MSC + w(t) lambda_ipc IPC.
// Throws NonFiniteLoss naming the first non-finite term.
template <typename T>
Tensor<T> total_loss(const std::vector<StreamLossTerms<T>>& terms, double t, double total_epochs,
                     double lambda_msc, double lambda_ipc);

}  // namespace wscl

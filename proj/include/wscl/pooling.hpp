#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "wscl/tensor.hpp"

namespace wscl {

enum class PoolKind { kMax, kAvg, kAdaptive };

std::string_view to_string(PoolKind kind);
PoolKind parse_pool_kind(std::string_view name);

struct OtsuSplit {
  double threshold = 0.0;
  double objective = 0.0;  // |low| var(low) + |high| var(high)
};

// Candidate thresholds are the observed values; low = {v < w}, high = {v >= w}.
// Population variance. Objectives within a relative 1e-12 of the best count
// as ties and resolve to the smaller threshold.
OtsuSplit otsu_split(std::span<const double> values);

template <typename T>
double otsu_threshold(std::span<const T> values);

// Row-wise membership of the high group for maps [N,H,W] or [N,P].
template <typename T>
std::vector<std::uint8_t> high_group_mask(const Tensor<T>& maps);

// Mean of the high group per map -> [N]. Gradient reaches only the selected
// entries; membership is treated as constant.
template <typename T>
Tensor<T> adaptive_pool(const Tensor<T>& maps);

template <typename T>
Tensor<T> pool(const Tensor<T>& maps, PoolKind kind);

}  // namespace wscl

#include "wscl/pooling.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "wscl/ops.hpp"

namespace wscl {

std::string_view to_string(PoolKind kind) {
  switch (kind) {
    case PoolKind::kMax: return "max";
    case PoolKind::kAvg: return "avg";
    case PoolKind::kAdaptive: return "adaptive";
  }
  return "?";
}

PoolKind parse_pool_kind(std::string_view name) {
  if (name == "max" || name == "MAX") return PoolKind::kMax;
  if (name == "avg" || name == "AVG") return PoolKind::kAvg;
  if (name == "adaptive" || name == "ADAPTIVE") return PoolKind::kAdaptive;
  throw std::invalid_argument("unknown pooling kind '" + std::string(name) + "'");
}

OtsuSplit otsu_split(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("otsu: empty input");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();

  // Centre before accumulating to keep the prefix-sum variance stable.
  double centre = 0.0;
  for (double v : sorted) centre += v;
  centre /= static_cast<double>(n);
  std::vector<double> s1(n + 1, 0.0), s2(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = sorted[i] - centre;
    s1[i + 1] = s1[i] + d;
    s2[i + 1] = s2[i] + d * d;
  }
  auto sse = [&](std::size_t lo, std::size_t hi) {
    const std::size_t cnt = hi - lo;
    if (cnt == 0) return 0.0;
    const double a = s1[hi] - s1[lo];
    const double b = s2[hi] - s2[lo];
    return std::max(0.0, b - a * a / static_cast<double>(cnt));
  };

  const double tie = 1e-12 * (1.0 + sse(0, n));
  OtsuSplit best{sorted[0], sse(0, n)};
  for (std::size_t i = 1; i < n; ++i) {
    if (sorted[i] == sorted[i - 1]) continue;
    const double obj = sse(0, i) + sse(i, n);
    if (obj < best.objective - tie) best = {sorted[i], obj};
  }
  return best;
}

template <typename T>
double otsu_threshold(std::span<const T> values) {
  std::vector<double> v(values.begin(), values.end());
  return otsu_split(v).threshold;
}

namespace {
template <typename T>
std::pair<std::size_t, std::size_t> rows_of(const Tensor<T>& maps, const char* op) {
  if (maps.ndim() < 2) {
    throw std::invalid_argument(std::string(op) + ": expected [N,...] maps, got " +
                                shape_str(maps.shape()));
  }
  const std::size_t n = maps.dim(0);
  return {n, n == 0 ? 0 : maps.numel() / n};
}
}  // namespace

template <typename T>
std::vector<std::uint8_t> high_group_mask(const Tensor<T>& maps) {
  const auto [n, p] = rows_of(maps, "high_group_mask");
  std::vector<std::uint8_t> mask(n * p, 0);
  const auto v = maps.data();
  std::vector<double> row(p);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) row[j] = static_cast<double>(v[i * p + j]);
    const double w = otsu_split(row).threshold;
    for (std::size_t j = 0; j < p; ++j) mask[i * p + j] = row[j] >= w ? 1 : 0;
  }
  return mask;
}

template <typename T>
Tensor<T> adaptive_pool(const Tensor<T>& maps) {
  const auto [n, p] = rows_of(maps, "adaptive_pool");
  const auto mask = high_group_mask(maps);
  return ops::row_masked_mean(ops::reshape(maps, Shape{n, p}), mask);
}

template <typename T>
Tensor<T> pool(const Tensor<T>& maps, PoolKind kind) {
  const auto [n, p] = rows_of(maps, "pool");
  switch (kind) {
    case PoolKind::kMax: return ops::row_max(ops::reshape(maps, Shape{n, p}));
    case PoolKind::kAvg: return ops::row_mean(ops::reshape(maps, Shape{n, p}));
    case PoolKind::kAdaptive: return adaptive_pool(maps);
  }
  throw std::invalid_argument("pool: unknown kind");
}

template double otsu_threshold(std::span<const float>);
template double otsu_threshold(std::span<const double>);
template std::vector<std::uint8_t> high_group_mask(const Tensor<float>&);
template std::vector<std::uint8_t> high_group_mask(const Tensor<double>&);
template Tensor<float> adaptive_pool(const Tensor<float>&);
template Tensor<double> adaptive_pool(const Tensor<double>&);
template Tensor<float> pool(const Tensor<float>&, PoolKind);
template Tensor<double> pool(const Tensor<double>&, PoolKind);

}  // namespace wscl

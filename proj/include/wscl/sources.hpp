#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include "wscl/rng.hpp"
#include "wscl/tensor.hpp"

namespace wscl {

// Input view a stream consumes. kFused is the 9-channel early-fusion input
// (RGB, SRM and Bayar maps concatenated along channels).
enum class SourceKind { kRgb, kSrm, kBayar, kFused };

std::string_view to_string(SourceKind kind);
SourceKind parse_source_kind(std::string_view name);

// Fixed high-pass residual filters. Each kernel is applied to every colour
// channel and the responses summed, then divided by the kernel's divisor and
// truncated to [-truncation, truncation]. Inputs are on the [0,255] scale.
struct SrmBank {
  static constexpr std::size_t kSize = 5;
  struct Kernel {
    std::array<int, kSize * kSize> taps;
    int divisor;
  };
  std::array<Kernel, 3> kernels;
  double truncation = 2.0;

  // First-order, second-order and 5x5 square residuals.
  static SrmBank standard();
};

// image [N,3,H,W] -> [N,3,H,W]; not differentiable (fixed transform).
// Borders use reflect padding so constant images map to zero everywhere.
template <typename T>
Tensor<T> srm_residual(const Tensor<T>& image, const SrmBank& bank);

// In-place projection of a [cout,cin,k,k] kernel onto the constraint set:
// centre tap -1, off-centre taps of each (out,in) slice summing to 1.
// Slices already within 1e-6 of the constraint (or within the rounding of a
// previous rescale) are left untouched, so the
// projection is exactly idempotent. A slice whose neighbour sum is below
// 1e-8 in magnitude has its neighbours reset to 1/(k*k-1).
template <typename T>
void bayar_project(std::span<T> weights, std::size_t cout, std::size_t cin, std::size_t k);

// Learnable constrained first layer (5x5, 3 -> 3 by default).
template <typename T>
class BayarLayer {
 public:
  BayarLayer() = default;
  BayarLayer(std::size_t channels, std::size_t kernel_size, Rng& rng);

  void project();
  // Reflect-padded "same" convolution; differentiable w.r.t. the kernel.
  Tensor<T> apply(const Tensor<T>& normalized_image) const;

  Tensor<T>& weight() { return weight_; }
  const Tensor<T>& weight() const { return weight_; }
  std::size_t kernel_size() const { return k_; }
  std::size_t channels() const { return c_; }

 private:
  Tensor<T> weight_;
  std::size_t c_ = 0;
  std::size_t k_ = 0;
};

// [0,255] -> [-1,1]
template <typename T>
Tensor<T> normalize_rgb(const Tensor<T>& image);

// Builds a stream input from an image on the [0,255] scale. kBayar and
// kFused require `bayar`; the kernel is used as is (projection happens after
// each optimizer step).
template <typename T>
Tensor<T> make_source(const Tensor<T>& image, SourceKind kind, BayarLayer<T>* bayar,
                      const SrmBank& bank = SrmBank::standard());

extern template class BayarLayer<float>;
extern template class BayarLayer<double>;

}  // namespace wscl

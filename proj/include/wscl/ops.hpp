#pragma once

#include <cstdint>
#include <vector>

#include "wscl/tensor.hpp"

// Differentiable operations. All ops validate shapes and throw
// std::invalid_argument naming the offending dimension.
namespace wscl::ops {

// Elementwise, numpy-style broadcasting for binary ops.
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, T value);
template <typename T> Tensor<T> relu(const Tensor<T>& a);
// Output clamped to [kProbEps, 1 - kProbEps]; zero gradient where the clamp is active.
template <typename T> Tensor<T> sigmoid(const Tensor<T>& a);

template <typename T> Tensor<T> sum(const Tensor<T>& a);
template <typename T> Tensor<T> mean(const Tensor<T>& a);

template <typename T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);
template <typename T> Tensor<T> permute(const Tensor<T>& a, const std::vector<std::size_t>& axes);
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis);

// [M,K] x [K,N] -> [M,N]
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
// [B,M,K] x [B,N,K]^T -> [B,M,N]
template <typename T> Tensor<T> bmm_nt(const Tensor<T>& a, const Tensor<T>& b);
// x [M,K], w [K,N], bias [N]
template <typename T> Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias);

// input [N,Cin,H,W], kernel [Cout,Cin,k,k], optional bias [Cout] (pass an
// undefined tensor to skip).
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                 std::size_t stride, std::size_t padding);
template <typename T> Tensor<T> pad_reflect(const Tensor<T>& input, std::size_t pad);
// gamma, beta [C]; C must be divisible by groups.
template <typename T>
Tensor<T> group_norm(const Tensor<T>& input, std::size_t groups, const Tensor<T>& gamma,
                     const Tensor<T>& beta, T eps = T(1e-5));
// Non-overlapping window, stride == window.
template <typename T> Tensor<T> avg_pool2d(const Tensor<T>& input, std::size_t window);
// align_corners = false, edge-clamped source coordinates.
template <typename T>
Tensor<T> upsample_bilinear(const Tensor<T>& input, std::size_t out_h, std::size_t out_w);

// Row reductions over x [N,P] -> [N].
template <typename T> Tensor<T> row_max(const Tensor<T>& x);
template <typename T> Tensor<T> row_mean(const Tensor<T>& x);
// mask has N*P entries; each row must select at least one element.
template <typename T>
Tensor<T> row_masked_mean(const Tensor<T>& x, const std::vector<std::uint8_t>& mask);

// Mean binary cross-entropy. `target` is treated as a constant.
// Predictions are clamped to [kProbEps, 1 - kProbEps]; NaN inputs throw std::domain_error.
template <typename T> Tensor<T> bce(const Tensor<T>& target, const Tensor<T>& pred);

}  // namespace wscl::ops

#pragma once

#include <cstdint>
#include <vector>

#include "wscl/tensor.hpp"

namespace wscl {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 5e-4;
};

// Decoupled weight decay (decay applied to the weights, not folded into the
// gradient), bias-corrected moments.
template <typename T>
class AdamW {
 public:
  AdamW(std::vector<Tensor<T>> params, AdamWConfig config);

  // Throws std::logic_error if any parameter has no gradient. Clears grads.
  void step();

  void set_lr(double lr) { config_.lr = lr; }
  const AdamWConfig& config() const { return config_; }
  std::int64_t step_count() const { return step_; }

  const std::vector<Tensor<T>>& params() const { return params_; }
  const std::vector<std::vector<T>>& first_moments() const { return m_; }
  const std::vector<std::vector<T>>& second_moments() const { return v_; }

  // Checkpoint restore; moment shapes are validated against the parameters.
  void restore(std::int64_t step, std::vector<std::vector<T>> m, std::vector<std::vector<T>> v);

 private:
  std::vector<Tensor<T>> params_;
  AdamWConfig config_;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
  std::int64_t step_ = 0;
};

extern template class AdamW<float>;
extern template class AdamW<double>;

}  // namespace wscl

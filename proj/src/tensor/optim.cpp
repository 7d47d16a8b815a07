#include "wscl/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace wscl {

template <typename T>
AdamW<T>::AdamW(std::vector<Tensor<T>> params, AdamWConfig config)
    : params_(std::move(params)), config_(config) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), T(0));
    v_.emplace_back(p.numel(), T(0));
  }
}

template <typename T>
void AdamW<T>::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) {
      throw std::logic_error("adamw: parameter " + std::to_string(i) + " " +
                             shape_str(params_[i].shape()) + " has no gradient");
    }
  }
  ++step_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  const double decay = 1.0 - config_.lr * config_.weight_decay;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto w = params_[i].mutable_data();
    const auto g = params_[i].grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = static_cast<double>(g[k]);
      const double mk = b1 * static_cast<double>(m[k]) + (1.0 - b1) * gk;
      const double vk = b2 * static_cast<double>(v[k]) + (1.0 - b2) * gk * gk;
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      const double mhat = mk / bc1;
      const double vhat = vk / bc2;
      const double updated =
          static_cast<double>(w[k]) * decay - config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
      w[k] = static_cast<T>(updated);
    }
    params_[i].clear_grad();
  }
}

template <typename T>
void AdamW<T>::restore(std::int64_t step, std::vector<std::vector<T>> m,
                       std::vector<std::vector<T>> v) {
  if (m.size() != params_.size() || v.size() != params_.size()) {
    throw std::invalid_argument("adamw: moment count does not match parameter count");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (m[i].size() != params_[i].numel() || v[i].size() != params_[i].numel()) {
      throw std::invalid_argument("adamw: moment size mismatch for parameter " + std::to_string(i));
    }
  }
  step_ = step;
  m_ = std::move(m);
  v_ = std::move(v);
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace wscl

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "wscl/rng.hpp"
#include "wscl/tensor.hpp"

namespace wscl {

// Error between an analytic and a numeric derivative, relative to the larger
// magnitude with a unit floor so near-zero coordinates compare absolutely.
inline double gradient_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic), std::abs(numeric)});
}

// Central-difference check of d f(x) / d x over every coordinate of x.
// f must build a fresh graph from x each call and return a scalar.
template <typename T>
double grad_check(const std::function<Tensor<T>(const Tensor<T>&)>& f, const Tensor<T>& x,
                  T eps) {
  Tensor<T> probe = x.detach();
  probe.set_requires_grad(true);
  f(probe).backward();
  const std::vector<T> analytic(probe.grad().begin(), probe.grad().end());

  double worst = 0.0;
  auto values = probe.mutable_data();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const T orig = values[i];
    values[i] = orig + eps;
    const double up = static_cast<double>(f(probe.detach()).item());
    values[i] = orig - eps;
    const double down = static_cast<double>(f(probe.detach()).item());
    values[i] = orig;
    const double numeric = (up - down) / (2.0 * static_cast<double>(eps));
    worst = std::max(worst, gradient_error(static_cast<double>(analytic[i]), numeric));
  }
  return worst;
}

// Same check against a set of parameter tensors mutated in place. `loss`
// closes over the parameters. At most `max_coords` coordinates per parameter
// are probed (chosen with `rng`); 0 probes every coordinate.
//
// `value`, when given, evaluates the same loss for the finite differences
// (e.g. with the final reduction in double to keep f32 rounding out of the
// numeric derivative).
//
// With `kinks` set, a coordinate whose left and right one-sided differences
// disagree by more than `kink_tol` (relative) sits at a jump of a piecewise
// decision (thresholding, Otsu split) and is skipped; skips are counted.
struct KinkPolicy {
  double kink_tol = 1e-2;
  std::size_t* skipped = nullptr;
};

template <typename T>
double grad_check_params(const std::function<Tensor<T>()>& loss, std::vector<Tensor<T>> params,
                         T eps, std::size_t max_coords, Rng& rng, const KinkPolicy* kinks = nullptr,
                         const std::function<double()>& value = {}) {
  auto eval = [&] { return value ? value() : static_cast<double>(loss().item()); };
  for (auto& p : params) p.clear_grad();
  loss().backward();
  std::vector<std::vector<T>> analytic;
  for (auto& p : params) {
    if (p.has_grad()) {
      analytic.emplace_back(p.grad().begin(), p.grad().end());
    } else {
      analytic.emplace_back(p.numel(), T(0));
    }
    p.clear_grad();
  }

  double centre = 0.0;
  if (kinks) {
    NoGradGuard guard;
    centre = eval();
  }
  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto values = params[pi].mutable_data();
    std::vector<std::size_t> coords(values.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (max_coords != 0 && coords.size() > max_coords) {
      rng.shuffle(coords.begin(), coords.end());
      coords.resize(max_coords);
    }
    for (std::size_t i : coords) {
      const T orig = values[i];
      double up = 0.0, down = 0.0;
      {
        NoGradGuard guard;
        values[i] = orig + eps;
        up = eval();
        values[i] = orig - eps;
        down = eval();
      }
      values[i] = orig;
      const double e = static_cast<double>(eps);
      if (kinks) {
        const double left = (centre - down) / e, right = (up - centre) / e;
        if (std::abs(left - right) > kinks->kink_tol * std::max({1.0, std::abs(left), std::abs(right)})) {
          if (kinks->skipped) ++*kinks->skipped;
          continue;
        }
      }
      const double numeric = (up - down) / (2.0 * e);
      worst = std::max(worst, gradient_error(static_cast<double>(analytic[pi][i]), numeric));
    }
  }
  return worst;
}

}  // namespace wscl

#include "wscl/gradcheck_suite.hpp"

#include <algorithm>
#include <cmath>

#include "wscl/consistency.hpp"
#include "wscl/detector.hpp"
#include "wscl/gradcheck.hpp"
#include "wscl/ops.hpp"
#include "wscl/pooling.hpp"
#include "wscl/sources.hpp"

namespace wscl {

namespace {

std::size_t dim(Rng& rng, std::size_t lo, std::size_t hi) {
  return static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(lo), static_cast<std::int64_t>(hi)));
}

template <typename T>
Tensor<T> leaf(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(rng.uniform(lo, hi));
  Tensor<T> t(std::move(shape), std::move(v));
  t.set_requires_grad(true);
  return t;
}

// Values bounded away from zero by `gap`, so kinks at 0 are never crossed.
template <typename T>
Tensor<T> leaf_off_zero(Rng& rng, Shape shape, double gap) {
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) {
    const double m = rng.uniform(gap, 1.0);
    x = static_cast<T>(rng.bernoulli(0.5) ? m : -m);
  }
  Tensor<T> t(std::move(shape), std::move(v));
  t.set_requires_grad(true);
  return t;
}

// Random linear functional of the op output, so every output coordinate
// contributes with a distinct weight.
template <typename T>
Tensor<T> project(const Tensor<T>& out, const Tensor<T>& weights) {
  return ops::sum(ops::mul(out, weights));
}

template <typename T>
Tensor<T> weights_like(Rng& rng, const Shape& shape) {
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(rng.uniform(-1.0, 1.0));
  return Tensor<T>(shape, std::move(v));
}

// Checks d/d(inputs) of sum(w * op(inputs)) over every coordinate.
template <typename T>
double check(Rng& rng, T eps, std::vector<Tensor<T>> inputs,
             const std::function<Tensor<T>(const std::vector<Tensor<T>>&)>& op) {
  Tensor<T> w;
  {
    NoGradGuard guard;
    w = weights_like<T>(rng, op(inputs).shape());
  }
  std::function<Tensor<T>()> loss = [&] { return project(op(inputs), w); };
  const std::function<double()> value = [&] {
    const auto y = op(inputs);
    double acc = 0.0;
    for (std::size_t i = 0; i < y.numel(); ++i) acc += static_cast<double>(y.at(i)) * static_cast<double>(w.at(i));
    return acc;
  };
  return grad_check_params<T>(loss, inputs, eps, 0, rng, nullptr, value);
}

template <typename T>
double check_scalar(Rng& rng, T eps, std::vector<Tensor<T>> inputs,
                    const std::function<Tensor<T>(const std::vector<Tensor<T>>&)>& op) {
  std::function<Tensor<T>()> loss = [&] { return op(inputs); };
  return grad_check_params<T>(loss, inputs, eps, 0, rng);
}

// Rows with distinct values separated by well over the step size.
template <typename T>
Tensor<T> spread_rows(Rng& rng, std::size_t n, std::size_t p, double lo, double hi) {
  std::vector<T> v(n * p);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(p);
    const double step = (hi - lo) / static_cast<double>(p + 1);
    for (std::size_t j = 0; j < p; ++j) row[j] = lo + step * (static_cast<double>(j) + 1 + rng.uniform(-0.3, 0.3));
    rng.shuffle(row.begin(), row.end());
    for (std::size_t j = 0; j < p; ++j) v[i * p + j] = static_cast<T>(row[j]);
  }
  Tensor<T> t(Shape{n, p}, std::move(v));
  t.set_requires_grad(true);
  return t;
}

// Maps with two well-separated clusters so the Otsu split does not move
// under a finite-difference step.
template <typename T>
Tensor<T> bimodal_maps(Rng& rng, std::size_t n, std::size_t h, std::size_t w) {
  std::vector<T> v(n * h * w);
  for (auto& x : v) x = static_cast<T>(rng.bernoulli(0.4) ? rng.uniform(0.7, 0.9) : rng.uniform(0.1, 0.3));
  for (std::size_t i = 0; i < n; ++i) {
    v[i * h * w] = T(0.8);
    v[i * h * w + 1] = T(0.2);
  }
  Tensor<T> t(Shape{n, h, w}, std::move(v));
  t.set_requires_grad(true);
  return t;
}

template <typename T>
Tensor<T> binary_maps(Rng& rng, std::size_t n, std::size_t h, std::size_t w) {
  std::vector<T> v(n * h * w);
  for (auto& x : v) x = rng.bernoulli(0.5) ? T(1) : T(0);
  return Tensor<T>(Shape{n, h, w}, std::move(v));
}

template <typename T>
StreamArch tiny_arch() {
  StreamArch a;
  a.image_size = 16;
  a.channels = {8, 8, 8, 8};
  a.norm_group = 4;
  a.tap_downsample = 4;
  a.embed_hidden = 6;
  a.embed_dim = 4;
  a.bayar_kernel = 3;
  return a;
}

// Composed loss of a tiny late-fusion detector. The analytic gradient of
// the T-precision network is compared against 64-bit central differences of
// an identical 64-bit copy, on two random coordinates of every trainable
// parameter. Probes whose one-sided slopes disagree beyond the tolerance sit
// at a threshold or Otsu-split flip and are counted as skipped.
template <typename T>
double composed_loss_trial(Rng& rng, IpcMode mode, std::size_t* skipped) {
  DetectorSpec spec;
  spec.arch = tiny_arch<T>();
  spec.ensemble.ipc_mode = mode;
  spec.ensemble.total_epochs = 4;
  const std::uint64_t seed = rng.next();
  Detector<T> det(spec, seed);
  Detector<double> ref(spec, seed);
  auto params = det.named_trainable_parameters();
  auto ref_params = ref.named_trainable_parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto src = params[i].second.data();
    auto dst = ref_params[i].second.mutable_data();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = static_cast<double>(src[k]);
  }
  const std::size_t n = 2;
  std::vector<double> px(n * 3 * 16 * 16);
  for (auto& x : px) x = static_cast<double>(rng.uniform_int(0, 255));
  const Tensor<T> images(Shape{n, 3, 16, 16}, std::vector<T>(px.begin(), px.end()));
  const Tensor<double> ref_images(Shape{n, 3, 16, 16}, px);
  const std::vector<double> labels{0.0, 1.0};
  const double t = rng.uniform(0.0, 4.0);

  det.training_loss(images, labels, t).total.backward();
  auto ref_loss = [&] {
    NoGradGuard guard;
    return ref.training_loss(ref_images, labels, t).total.item();
  };
  const double eps = 1e-7, tol = gradcheck_tolerance<double>();
  const double centre = ref_loss();
  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi].second;
    auto values = ref_params[pi].second.mutable_data();
    for (int probe = 0; probe < 2; ++probe) {
      const auto i = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(values.size()) - 1));
      const double analytic = p.has_grad() ? static_cast<double>(p.grad()[i]) : 0.0;
      const double orig = values[i];
      values[i] = orig + eps;
      const double up = ref_loss();
      values[i] = orig - eps;
      const double down = ref_loss();
      values[i] = orig;
      const double left = (centre - down) / eps, right = (up - centre) / eps;
      if (std::abs(left - right) > tol * std::max({1.0, std::abs(left), std::abs(right)})) {
        ++*skipped;
        continue;
      }
      worst = std::max(worst, gradient_error(analytic, (up - down) / (2.0 * eps)));
    }
  }
  return worst;
}

// FNV-1a, so trial seeds do not depend on the standard library's hash.
std::uint64_t name_hash(const std::string& name) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : name) h = (h ^ ch) * 0x100000001b3ull;
  return h;
}

}  // namespace

template <>
double gradcheck_eps<double>() { return 1e-6; }
template <>
float gradcheck_eps<float>() { return 1e-3f; }
template <>
double gradcheck_tolerance<double>() { return 1e-6; }
template <>
double gradcheck_tolerance<float>() { return 1e-3; }

template <typename T>
std::vector<GradcheckEntry<T>> gradcheck_cases() {
  using V = std::vector<Tensor<T>>;
  std::vector<GradcheckEntry<T>> c;
  c.push_back({"add", [](Rng& r, T eps, std::size_t*) {
    const std::size_t a = dim(r, 1, 3), b = dim(r, 1, 4);
    return check<T>(r, eps, {leaf<T>(r, {a, b}), leaf<T>(r, {b})}, [](const V& x) { return ops::add(x[0], x[1]); });
  }});
  c.push_back({"sub", [](Rng& r, T eps, std::size_t*) {
    const std::size_t a = dim(r, 1, 3), b = dim(r, 1, 4);
    return check<T>(r, eps, {leaf<T>(r, {a, 1}), leaf<T>(r, {a, b})}, [](const V& x) { return ops::sub(x[0], x[1]); });
  }});
  c.push_back({"mul", [](Rng& r, T eps, std::size_t*) {
    const std::size_t a = dim(r, 1, 3), b = dim(r, 1, 4);
    return check<T>(r, eps, {leaf<T>(r, {a, b}), leaf<T>(r, {1, b})}, [](const V& x) { return ops::mul(x[0], x[1]); });
  }});
  c.push_back({"scale", [](Rng& r, T eps, std::size_t*) {
    const T f = static_cast<T>(r.uniform(-2.0, 2.0));
    return check<T>(r, eps, {leaf<T>(r, {dim(r, 1, 5)})}, [f](const V& x) { return ops::scale(x[0], f); });
  }});
  c.push_back({"add_scalar", [](Rng& r, T eps, std::size_t*) {
    const T f = static_cast<T>(r.uniform(-2.0, 2.0));
    return check<T>(r, eps, {leaf<T>(r, {dim(r, 1, 5)})}, [f](const V& x) { return ops::add_scalar(x[0], f); });
  }});
  c.push_back({"relu", [](Rng& r, T eps, std::size_t*) {
    return check<T>(r, eps, {leaf_off_zero<T>(r, {dim(r, 1, 3), dim(r, 1, 4)}, 0.05)},
                    [](const V& x) { return ops::relu(x[0]); });
  }});
  c.push_back({"sigmoid", [](Rng& r, T eps, std::size_t*) {
    return check<T>(r, eps, {leaf<T>(r, {dim(r, 1, 3), dim(r, 1, 4)}, -4.0, 4.0)},
                    [](const V& x) { return ops::sigmoid(x[0]); });
  }});
  c.push_back({"sum", [](Rng& r, T eps, std::size_t*) {
    return check_scalar<T>(r, eps, {leaf<T>(r, {dim(r, 1, 3), dim(r, 1, 4)})}, [](const V& x) { return ops::sum(x[0]); });
  }});
  c.push_back({"mean", [](Rng& r, T eps, std::size_t*) {
    return check_scalar<T>(r, eps, {leaf<T>(r, {dim(r, 1, 3), dim(r, 1, 4)})}, [](const V& x) { return ops::mean(x[0]); });
  }});
  c.push_back({"reshape", [](Rng& r, T eps, std::size_t*) {
    const std::size_t a = dim(r, 1, 3), b = dim(r, 1, 4);
    return check<T>(r, eps, {leaf<T>(r, {a, b})}, [a, b](const V& x) { return ops::reshape(x[0], Shape{b * a}); });
  }});
  c.push_back({"permute", [](Rng& r, T eps, std::size_t*) {
    std::vector<std::size_t> axes{0, 1, 2};
    r.shuffle(axes.begin(), axes.end());
    return check<T>(r, eps, {leaf<T>(r, {dim(r, 1, 3), dim(r, 1, 3), dim(r, 1, 3)})},
                    [axes](const V& x) { return ops::permute(x[0], axes); });
  }});
  c.push_back({"concat", [](Rng& r, T eps, std::size_t*) {
    const std::size_t a = dim(r, 1, 3), axis = dim(r, 0, 1);
    Shape s1{a, a + 1}, s2{a, a + 1};
    s2[axis] = dim(r, 1, 3);
    return check<T>(r, eps, {leaf<T>(r, s1), leaf<T>(r, s2)}, [axis](const V& x) { return ops::concat(x, axis); });
  }});
  c.push_back({"matmul", [](Rng& r, T eps, std::size_t*) {
    const std::size_t m = dim(r, 1, 4), k = dim(r, 1, 4), n = dim(r, 1, 4);
    return check<T>(r, eps, {leaf<T>(r, {m, k}), leaf<T>(r, {k, n})}, [](const V& x) { return ops::matmul(x[0], x[1]); });
  }});
  c.push_back({"bmm_nt", [](Rng& r, T eps, std::size_t*) {
    const std::size_t b = dim(r, 1, 2), m = dim(r, 1, 4), k = dim(r, 1, 4), n = dim(r, 1, 4);
    return check<T>(r, eps, {leaf<T>(r, {b, m, k}), leaf<T>(r, {b, n, k})},
                    [](const V& x) { return ops::bmm_nt(x[0], x[1]); });
  }});
  c.push_back({"linear", [](Rng& r, T eps, std::size_t*) {
    const std::size_t m = dim(r, 1, 4), k = dim(r, 1, 4), n = dim(r, 1, 4);
    return check<T>(r, eps, {leaf<T>(r, {m, k}), leaf<T>(r, {k, n}), leaf<T>(r, {n})},
                    [](const V& x) { return ops::linear(x[0], x[1], x[2]); });
  }});
  c.push_back({"conv2d", [](Rng& r, T eps, std::size_t*) {
    const std::size_t n = dim(r, 1, 2), ci = dim(r, 1, 3), co = dim(r, 1, 3), k = 2 * dim(r, 0, 1) + 1;
    const std::size_t stride = dim(r, 1, 2), pad = dim(r, 0, k / 2), h = dim(r, k, 6), w = dim(r, k, 6);
    return check<T>(r, eps, {leaf<T>(r, {n, ci, h, w}), leaf<T>(r, {co, ci, k, k}), leaf<T>(r, {co})},
                    [stride, pad](const V& x) { return ops::conv2d(x[0], x[1], x[2], stride, pad); });
  }});
  c.push_back({"conv2d_nobias", [](Rng& r, T eps, std::size_t*) {
    const std::size_t ci = dim(r, 1, 3), co = dim(r, 1, 3);
    return check<T>(r, eps, {leaf<T>(r, {1, ci, 5, 4}), leaf<T>(r, {co, ci, 3, 3})},
                    [](const V& x) { return ops::conv2d(x[0], x[1], Tensor<T>(), 1, 1); });
  }});
  c.push_back({"pad_reflect", [](Rng& r, T eps, std::size_t*) {
    const std::size_t pad = dim(r, 1, 2);
    return check<T>(r, eps, {leaf<T>(r, {1, dim(r, 1, 2), dim(r, pad + 1, 5), dim(r, pad + 1, 5)})},
                    [pad](const V& x) { return ops::pad_reflect(x[0], pad); });
  }});
  c.push_back({"group_norm", [](Rng& r, T eps, std::size_t*) {
    const std::size_t g = dim(r, 1, 2), cg = dim(r, 1, 3), ch = g * cg;
    return check<T>(r, eps, {leaf<T>(r, {dim(r, 1, 2), ch, dim(r, 1, 4), dim(r, 2, 4)}), leaf<T>(r, {ch}, 0.5, 1.5),
                             leaf<T>(r, {ch})},
                    [g](const V& x) { return ops::group_norm(x[0], g, x[1], x[2]); });
  }});
  c.push_back({"avg_pool2d", [](Rng& r, T eps, std::size_t*) {
    const std::size_t k = dim(r, 1, 3);
    return check<T>(r, eps, {leaf<T>(r, {1, dim(r, 1, 2), k * dim(r, 1, 3), k * dim(r, 1, 3)})},
                    [k](const V& x) { return ops::avg_pool2d(x[0], k); });
  }});
  c.push_back({"upsample_bilinear", [](Rng& r, T eps, std::size_t*) {
    const std::size_t oh = dim(r, 1, 7), ow = dim(r, 1, 7);
    return check<T>(r, eps, {leaf<T>(r, {1, dim(r, 1, 2), dim(r, 1, 4), dim(r, 1, 4)})},
                    [oh, ow](const V& x) { return ops::upsample_bilinear(x[0], oh, ow); });
  }});
  c.push_back({"row_max", [](Rng& r, T eps, std::size_t*) {
    return check<T>(r, eps, {spread_rows<T>(r, dim(r, 1, 3), dim(r, 1, 6), -1.0, 1.0)},
                    [](const V& x) { return ops::row_max(x[0]); });
  }});
  c.push_back({"row_mean", [](Rng& r, T eps, std::size_t*) {
    return check<T>(r, eps, {leaf<T>(r, {dim(r, 1, 3), dim(r, 1, 6)})}, [](const V& x) { return ops::row_mean(x[0]); });
  }});
  c.push_back({"row_masked_mean", [](Rng& r, T eps, std::size_t*) {
    const std::size_t n = dim(r, 1, 3), p = dim(r, 1, 6);
    std::vector<std::uint8_t> mask(n * p);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < p; ++j) mask[i * p + j] = r.bernoulli(0.5);
      mask[i * p + dim(r, 0, p - 1)] = 1;
    }
    return check<T>(r, eps, {leaf<T>(r, {n, p})}, [mask](const V& x) { return ops::row_masked_mean(x[0], mask); });
  }});
  c.push_back({"bce", [](Rng& r, T eps, std::size_t*) {
    const std::size_t n = dim(r, 1, 8);
    std::vector<T> y(n);
    for (auto& v : y) v = r.bernoulli(0.3) ? static_cast<T>(r.uniform()) : (r.bernoulli(0.5) ? T(1) : T(0));
    const Tensor<T> target(Shape{n}, y);
    return check_scalar<T>(r, eps, {leaf<T>(r, {n}, 0.05, 0.95)},
                           [target](const V& x) { return ops::bce(target, x[0]); });
  }});
  c.push_back({"normalize_rgb", [](Rng& r, T eps, std::size_t*) {
    return check<T>(r, eps, {leaf<T>(r, {1, 3, dim(r, 1, 3), dim(r, 1, 3)}, 0.0, 255.0)},
                    [](const V& x) { return normalize_rgb(x[0]); });
  }});
  c.push_back({"bayar_conv", [](Rng& r, T eps, std::size_t*) {
    BayarLayer<T> layer(3, 3, r);
    layer.weight().set_requires_grad(true);
    auto weight = layer.weight();
    return check<T>(r, eps, {leaf<T>(r, {1, 3, dim(r, 3, 5), dim(r, 3, 5)}), weight},
                    [&layer](const V& x) { return layer.apply(x[0]); });
  }});
  for (PoolKind kind : {PoolKind::kMax, PoolKind::kAvg, PoolKind::kAdaptive}) {
    c.push_back({"pool_" + std::string(to_string(kind)), [kind](Rng& r, T eps, std::size_t*) {
      const std::size_t n = dim(r, 1, 3), h = dim(r, 2, 5), w = dim(r, 2, 5);
      Tensor<T> maps = kind == PoolKind::kMax ? ops::reshape(spread_rows<T>(r, n, h * w, 0.05, 0.95), Shape{n, h, w}).detach()
                                              : bimodal_maps<T>(r, n, h, w);
      maps.set_requires_grad(true);
      return check<T>(r, eps, {maps}, [kind](const V& x) { return pool(x[0], kind); });
    }});
  }
  c.push_back({"ensemble_map", [](Rng& r, T eps, std::size_t*) {
    const std::size_t n = dim(r, 1, 2), h = dim(r, 1, 4), w = dim(r, 1, 4);
    const std::vector<double> weights{1.0, 2.0, 2.0};
    return check<T>(r, eps, {leaf<T>(r, {n, h, w}), leaf<T>(r, {n, h, w}), leaf<T>(r, {n, h, w})},
                    [weights](const V& x) { return ensemble_map(x, weights); });
  }});
  c.push_back({"msc_loss", [](Rng& r, T eps, std::size_t*) {
    const std::size_t n = dim(r, 1, 2), h = dim(r, 1, 4), w = dim(r, 1, 4);
    const auto pseudo = binary_maps<T>(r, n, h, w);
    return check_scalar<T>(r, eps, {leaf<T>(r, {n, h, w}, 0.05, 0.95)},
                           [pseudo](const V& x) { return msc_loss(pseudo, x[0]); });
  }});
  c.push_back({"consistency_volume", [](Rng& r, T eps, std::size_t*) {
    const std::size_t n = dim(r, 1, 2), h = dim(r, 1, 3), w = dim(r, 1, 3), d = dim(r, 1, 4);
    return check<T>(r, eps, {leaf<T>(r, {n, h, w, d}), leaf<T>(r, {n, h, w, d})},
                    [](const V& x) { return consistency_volume(x[0], x[1], 16); });
  }});
  c.push_back({"ipc_loss", [](Rng& r, T eps, std::size_t*) {
    const std::size_t n = dim(r, 1, 2), h = dim(r, 1, 3), w = dim(r, 1, 3), d = dim(r, 1, 4);
    const auto target = target_volume(binary_maps<T>(r, n, 2 * h, 2 * w), h, w);
    return check_scalar<T>(r, eps, {leaf<T>(r, {n, h, w, d}), leaf<T>(r, {n, h, w, d})}, [target](const V& x) {
      return ipc_loss(target, consistency_volume(x[0], x[1], 16));
    });
  }});
  c.push_back({"total_loss", [](Rng& r, T eps, std::size_t*) {
    const double t = r.uniform(0.0, 10.0);
    return check_scalar<T>(r, eps, {leaf<T>(r, {}, 0.1, 1.0), leaf<T>(r, {}, 0.1, 1.0), leaf<T>(r, {}, 0.1, 1.0)},
                           [t](const V& x) {
                             std::vector<StreamLossTerms<T>> terms{{"s", x[0], x[1], x[2]}};
                             return total_loss(terms, t, 10.0, 0.1, 0.1);
                           });
  }});
  c.push_back({"stream_loss_ensemble_ipc", [](Rng& r, T, std::size_t* k) {
    return composed_loss_trial<T>(r, IpcMode::kEnsemble, k);
  }});
  c.push_back({"stream_loss_self_ipc", [](Rng& r, T, std::size_t* k) {
    return composed_loss_trial<T>(r, IpcMode::kSelf, k);
  }});
  return c;
}

template <typename T>
GradcheckResult run_gradcheck_case(const GradcheckEntry<T>& entry, std::size_t trials, std::uint64_t seed) {
  GradcheckResult res;
  res.name = entry.name;
  res.trials = trials;
  res.tolerance = gradcheck_tolerance<T>();
  for (std::size_t i = 0; i < trials; ++i) {
    Rng rng(Rng::derive(seed, name_hash(entry.name), i));
    const double e = entry.trial(rng, gradcheck_eps<T>(), &res.skipped);
    res.max_error = std::isfinite(e) ? std::max(res.max_error, e) : INFINITY;
  }
  return res;
}

template <typename T>
std::vector<GradcheckResult> run_gradcheck(std::size_t trials, std::uint64_t seed, const std::string& filter) {
  std::vector<GradcheckResult> out;
  for (const auto& e : gradcheck_cases<T>()) {
    if (!filter.empty() && e.name.find(filter) == std::string::npos) continue;
    out.push_back(run_gradcheck_case(e, trials, seed));
  }
  return out;
}

template std::vector<GradcheckEntry<float>> gradcheck_cases();
template std::vector<GradcheckEntry<double>> gradcheck_cases();
template GradcheckResult run_gradcheck_case(const GradcheckEntry<float>&, std::size_t, std::uint64_t);
template GradcheckResult run_gradcheck_case(const GradcheckEntry<double>&, std::size_t, std::uint64_t);
template std::vector<GradcheckResult> run_gradcheck<float>(std::size_t, std::uint64_t, const std::string&);
template std::vector<GradcheckResult> run_gradcheck<double>(std::size_t, std::uint64_t, const std::string&);

}  // namespace wscl

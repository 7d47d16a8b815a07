#include "wscl/consistency.hpp"

#include <algorithm>
#include <cmath>

#include "tensor/blas.hpp"
#include "wscl/ops.hpp"
#include "wscl/stream_net.hpp"

namespace wscl {

std::string_view to_string(IpcMode mode) { return mode == IpcMode::kSelf ? "self" : "ensemble"; }
std::string_view to_string(FusionMode mode) { return mode == FusionMode::kLate ? "late" : "early"; }
std::string_view to_string(VolumeScale scale) {
  return scale == VolumeScale::kTapChannels ? "tap-channels" : "embed-dim";
}

IpcMode parse_ipc_mode(std::string_view name) {
  if (name == "self" || name == "SELF") return IpcMode::kSelf;
  if (name == "ensemble" || name == "ENSEMBLE") return IpcMode::kEnsemble;
  throw std::invalid_argument("unknown IPC mode '" + std::string(name) + "'");
}

FusionMode parse_fusion_mode(std::string_view name) {
  if (name == "late" || name == "LATE") return FusionMode::kLate;
  if (name == "early" || name == "EARLY") return FusionMode::kEarly;
  throw std::invalid_argument("unknown fusion mode '" + std::string(name) + "'");
}

VolumeScale parse_volume_scale(std::string_view name) {
  if (name == "tap-channels") return VolumeScale::kTapChannels;
  if (name == "embed-dim") return VolumeScale::kEmbedDim;
  throw std::invalid_argument("unknown volume scale '" + std::string(name) + "'");
}

void EnsembleConfig::validate() const {
  if (!(w_rgb > 0 && w_srm > 0 && w_bayar > 0)) {
    throw std::invalid_argument("stream weights must be positive");
  }
  if (!(theta > 0 && theta < 1)) throw std::invalid_argument("theta must lie in (0,1)");
  if (total_epochs < 1) throw std::invalid_argument("total epochs must be >= 1");
  if (lambda_msc < 0 || lambda_ipc < 0) throw std::invalid_argument("loss weights must be >= 0");
}

template <typename T>
Tensor<T> ensemble_map(const std::vector<Tensor<T>>& maps, std::span<const double> weights) {
  if (maps.empty()) throw std::invalid_argument("ensemble_map: no maps");
  if (maps.size() != weights.size()) {
    throw std::invalid_argument("ensemble_map: " + std::to_string(maps.size()) + " maps but " +
                                std::to_string(weights.size()) + " weights");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w > 0)) throw std::invalid_argument("ensemble_map: weights must be positive");
    total += w;
  }
  Tensor<T> acc;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    if (maps[i].shape() != maps[0].shape()) {
      throw std::invalid_argument("ensemble_map: map " + std::to_string(i) + " has shape " +
                                  shape_str(maps[i].shape()) + ", expected " +
                                  shape_str(maps[0].shape()));
    }
    const auto term = ops::scale(maps[i], static_cast<T>(weights[i] / total));
    acc = acc.defined() ? ops::add(acc, term) : term;
  }
  return acc;
}

template <typename T>
Tensor<T> pseudo_gt(const Tensor<T>& ensemble, double theta) {
  return binarize(ensemble, theta);
}

template <typename T>
Tensor<T> msc_loss(const Tensor<T>& pseudo, const Tensor<T>& source_map) {
  if (pseudo.shape() != source_map.shape()) {
    throw std::invalid_argument("msc_loss: pseudo ground truth " + shape_str(pseudo.shape()) +
                                " vs map " + shape_str(source_map.shape()));
  }
  return ops::bce(pseudo.detach(), source_map);
}

template <typename T>
Tensor<T> consistency_volume(const Tensor<T>& e1, const Tensor<T>& e2, std::size_t scale_dim) {
  if (e1.ndim() != 4 || e1.shape() != e2.shape()) {
    throw std::invalid_argument("consistency_volume: embeddings must share shape [N,H',W',D], got " +
                                shape_str(e1.shape()) + " and " + shape_str(e2.shape()));
  }
  if (scale_dim == 0) throw std::invalid_argument("consistency_volume: scale dimension must be positive");
  const std::size_t n = e1.dim(0), h = e1.dim(1), w = e1.dim(2), d = e1.dim(3);
  const std::size_t p = h * w;
  const T inv = static_cast<T>(1.0 / std::sqrt(static_cast<double>(scale_dim)));
  const T lo = static_cast<T>(kProbEps), hi = T(1) - lo;

  // One node: z = inv * e1 e2^T per image, v = 1 - clamp(sigmoid(z)).
  std::vector<T> out(n * p * p);
  const T* a = e1.data().data();
  const T* b = e2.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    detail::gemm(false, true, p, p, d, inv, a + i * p * d, b + i * p * d, T(0), out.data() + i * p * p);
  }
  for (auto& z : out) {
    T s;
    if (z >= T(0)) {
      s = T(1) / (T(1) + std::exp(-z));
    } else {
      const T e = std::exp(z);
      s = e / (T(1) + e);
    }
    z = T(1) - std::min(std::max(s, lo), hi);
  }
  return Tensor<T>::from_op(
      Shape{n, h, w, h, w}, std::move(out), {e1, e2},
      [n, p, d, inv, lo, hi](Node<T>& self) {
        // dv/dz = -s (1 - s) with s = 1 - v; zero where the sigmoid was clamped.
        std::vector<T> dz(self.grad.size());
        for (std::size_t k = 0; k < dz.size(); ++k) {
          const T s = T(1) - self.data[k];
          dz[k] = (s <= lo || s >= hi) ? T(0) : -inv * self.grad[k] * s * (T(1) - s);
        }
        const T* xa = self.parents[0]->data.data();
        const T* xb = self.parents[1]->data.data();
        const bool ga_on = self.parents[0] && self.parents[0]->requires_grad;
        const bool gb_on = self.parents[1] && self.parents[1]->requires_grad;
        T* ga = ga_on ? self.parents[0]->ensure_grad().data() : nullptr;
        T* gb = gb_on ? self.parents[1]->ensure_grad().data() : nullptr;
        for (std::size_t i = 0; i < n; ++i) {
          const T* g = dz.data() + i * p * p;
          if (ga_on) detail::gemm(false, false, p, d, p, T(1), g, xb + i * p * d, T(1), ga + i * p * d);
          if (gb_on) detail::gemm(true, false, p, d, p, T(1), g, xa + i * p * d, T(1), gb + i * p * d);
        }
      },
      "consistency_volume");
}

template <typename T>
Tensor<T> downsample_nearest(const Tensor<T>& maps, std::size_t h, std::size_t w) {
  if (maps.ndim() != 3) {
    throw std::invalid_argument("downsample_nearest: expected [N,H,W], got " + shape_str(maps.shape()));
  }
  const std::size_t n = maps.dim(0), sh = maps.dim(1), sw = maps.dim(2);
  if (h == 0 || w == 0 || h > sh || w > sw) {
    throw std::invalid_argument("downsample_nearest: target " + std::to_string(h) + "x" +
                                std::to_string(w) + " exceeds source " + std::to_string(sh) + "x" +
                                std::to_string(sw));
  }
  const auto src = maps.data();
  std::vector<T> out(n * h * w);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t y = 0; y < h; ++y) {
      const std::size_t sy = ((2 * y + 1) * sh) / (2 * h);
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t sx = ((2 * x + 1) * sw) / (2 * w);
        out[(i * h + y) * w + x] = src[(i * sh + sy) * sw + sx];
      }
    }
  }
  return Tensor<T>(Shape{n, h, w}, std::move(out));
}

template <typename T>
Tensor<T> target_volume(const Tensor<T>& binary_maps, std::size_t h, std::size_t w) {
  const auto small = downsample_nearest(binary_maps, h, w);
  const std::size_t n = small.dim(0), p = h * w;
  const auto d = small.data();
  std::vector<T> out(n * p * p);
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = d.data() + i * p;
    T* dst = out.data() + i * p * p;
    for (std::size_t a = 0; a < p; ++a) {
      for (std::size_t b = 0; b < p; ++b) dst[a * p + b] = row[a] == row[b] ? T(0) : T(1);
    }
  }
  return Tensor<T>(Shape{n, h, w, h, w}, std::move(out));
}

template <typename T>
Tensor<T> ipc_loss(const Tensor<T>& target, const Tensor<T>& volume) {
  if (target.shape() != volume.shape()) {
    throw std::invalid_argument("ipc_loss: target " + shape_str(target.shape()) + " vs volume " +
                                shape_str(volume.shape()));
  }
  return ops::bce(target.detach(), volume);
}

double warmup(double t, double total) {
  if (!(total > 0)) throw std::invalid_argument("warmup: total epochs must be positive");
  const double r = 1.0 - t / total;
  return std::exp(-5.0 * r * r);
}

template <typename T>
Tensor<T> select_ipc_target(IpcMode mode, const Tensor<T>& own_map, const Tensor<T>& ensemble_binary,
                            double theta) {
  return mode == IpcMode::kSelf ? binarize(own_map, theta) : ensemble_binary.detach();
}

template <typename T>
Tensor<T> total_loss(const std::vector<StreamLossTerms<T>>& terms, double t, double total_epochs,
                     double lambda_msc, double lambda_ipc) {
  if (terms.empty()) throw std::invalid_argument("total_loss: no streams");
  const double w = warmup(t, total_epochs);
  auto check = [](const Tensor<T>& x, const std::string& name) {
    if (!std::isfinite(static_cast<double>(x.item()))) throw NonFiniteLoss(name);
  };
  Tensor<T> acc;
  auto accumulate = [&](const Tensor<T>& x) { acc = acc.defined() ? ops::add(acc, x) : x; };
  for (const auto& s : terms) {
    check(s.acls, s.stream + ".a_cls");
    accumulate(s.acls);
    if (s.msc.defined()) {
      check(s.msc, s.stream + ".msc");
      if (lambda_msc != 0.0) accumulate(ops::scale(s.msc, static_cast<T>(w * lambda_msc)));
    }
    if (s.ipc.defined()) {
      check(s.ipc, s.stream + ".ipc");
      if (lambda_ipc != 0.0) accumulate(ops::scale(s.ipc, static_cast<T>(w * lambda_ipc)));
    }
  }
  return acc;
}

#define WSCL_INSTANTIATE_CONSISTENCY(T)                                                        \
  template Tensor<T> ensemble_map(const std::vector<Tensor<T>>&, std::span<const double>);     \
  template Tensor<T> pseudo_gt(const Tensor<T>&, double);                                      \
  template Tensor<T> msc_loss(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> consistency_volume(const Tensor<T>&, const Tensor<T>&, std::size_t);      \
  template Tensor<T> downsample_nearest(const Tensor<T>&, std::size_t, std::size_t);           \
  template Tensor<T> target_volume(const Tensor<T>&, std::size_t, std::size_t);                \
  template Tensor<T> ipc_loss(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> select_ipc_target(IpcMode, const Tensor<T>&, const Tensor<T>&, double);   \
  template Tensor<T> total_loss(const std::vector<StreamLossTerms<T>>&, double, double, double, \
                                double);

WSCL_INSTANTIATE_CONSISTENCY(float)
WSCL_INSTANTIATE_CONSISTENCY(double)

}  // namespace wscl

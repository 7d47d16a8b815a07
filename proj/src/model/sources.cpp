#include "wscl/sources.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "wscl/ops.hpp"

namespace wscl {

std::string_view to_string(SourceKind kind) {
  switch (kind) {
    case SourceKind::kRgb: return "rgb";
    case SourceKind::kSrm: return "srm";
    case SourceKind::kBayar: return "bayar";
    case SourceKind::kFused: return "fused";
  }
  return "?";
}

SourceKind parse_source_kind(std::string_view name) {
  if (name == "rgb" || name == "RGB") return SourceKind::kRgb;
  if (name == "srm" || name == "SRM") return SourceKind::kSrm;
  if (name == "bayar" || name == "BAYAR") return SourceKind::kBayar;
  if (name == "fused" || name == "FUSED") return SourceKind::kFused;
  throw std::invalid_argument("unknown source kind '" + std::string(name) + "'");
}

SrmBank SrmBank::standard() {
  SrmBank bank;
  // clang-format off
  bank.kernels[0] = {{0, 0,  0, 0, 0,
                      0, 0,  0, 0, 0,
                      0, 0, -1, 1, 0,
                      0, 0,  0, 0, 0,
                      0, 0,  0, 0, 0}, 1};
  bank.kernels[1] = {{0, 0,  0, 0, 0,
                      0, 0,  0, 0, 0,
                      0, 1, -2, 1, 0,
                      0, 0,  0, 0, 0,
                      0, 0,  0, 0, 0}, 2};
  bank.kernels[2] = {{-1,  2,  -2,  2, -1,
                       2, -6,   8, -6,  2,
                      -2,  8, -12,  8, -2,
                       2, -6,   8, -6,  2,
                      -1,  2,  -2,  2, -1}, 12};
  // clang-format on
  return bank;
}

namespace {
std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
  const auto len = static_cast<std::ptrdiff_t>(n);
  if (len == 1) return 0;
  while (i < 0 || i >= len) {
    if (i < 0) i = -i;
    if (i >= len) i = 2 * (len - 1) - i;
  }
  return static_cast<std::size_t>(i);
}
}  // namespace

template <typename T>
Tensor<T> srm_residual(const Tensor<T>& image, const SrmBank& bank) {
  if (image.ndim() != 4 || image.dim(1) != 3) {
    throw std::invalid_argument("srm_residual: expected [N,3,H,W] input, got " +
                                shape_str(image.shape()));
  }
  const std::size_t n = image.dim(0), h = image.dim(2), w = image.dim(3);
  constexpr std::size_t k = SrmBank::kSize;
  constexpr std::ptrdiff_t r = k / 2;
  const auto x = image.data();
  std::vector<T> out(n * 3 * h * w);
  std::vector<std::size_t> ry(h * k), rx(w * k);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t a = 0; a < k; ++a) {
      ry[y * k + a] = reflect(static_cast<std::ptrdiff_t>(y + a) - r, h);
    }
  }
  for (std::size_t xx = 0; xx < w; ++xx) {
    for (std::size_t a = 0; a < k; ++a) {
      rx[xx * k + a] = reflect(static_cast<std::ptrdiff_t>(xx + a) - r, w);
    }
  }
  const double t = bank.truncation;
  // Every filter is applied to all three channels and summed, so convolve the
  // channel sum once.
  std::vector<double> csum(h * w);
  struct Tap {
    std::size_t a, b;
    double v;
  };
  for (std::size_t i = 0; i < n; ++i) {
    const T* src = x.data() + i * 3 * h * w;
    for (std::size_t q = 0; q < h * w; ++q) {
      csum[q] = static_cast<double>(src[q]) + static_cast<double>(src[h * w + q]) +
                static_cast<double>(src[2 * h * w + q]);
    }
    for (std::size_t f = 0; f < 3; ++f) {
      const auto& kern = bank.kernels[f];
      std::vector<Tap> taps;
      for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t b = 0; b < k; ++b) {
          if (kern.taps[a * k + b] != 0) taps.push_back({a, b, static_cast<double>(kern.taps[a * k + b])});
        }
      }
      T* dst = out.data() + (i * 3 + f) * h * w;
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t xx = 0; xx < w; ++xx) {
          double acc = 0.0;
          for (const auto& tp : taps) acc += tp.v * csum[ry[y * k + tp.a] * w + rx[xx * k + tp.b]];
          acc /= kern.divisor;
          dst[y * w + xx] = static_cast<T>(std::clamp(acc, -t, t));
        }
      }
    }
  }
  return Tensor<T>(image.shape(), std::move(out));
}

template <typename T>
void bayar_project(std::span<T> weights, std::size_t cout, std::size_t cin, std::size_t k) {
  if (weights.size() != cout * cin * k * k) {
    throw std::invalid_argument("bayar_project: weight count does not match shape");
  }
  if (k < 3 || k % 2 == 0) throw std::invalid_argument("bayar_project: kernel size must be odd and >= 3");
  const std::size_t kk = k * k;
  const std::size_t centre = (k / 2) * k + k / 2;
  for (std::size_t s = 0; s < cout * cin; ++s) {
    T* slice = weights.data() + s * kk;
    double nsum = 0.0, nabs = 0.0;
    for (std::size_t j = 0; j < kk; ++j) {
      if (j != centre) {
        nsum += static_cast<double>(slice[j]);
        nabs += std::abs(static_cast<double>(slice[j]));
      }
    }
    // Rescaled slices carry rounding of order kk * eps * sum|w|; accept that too.
    const double tol = std::max(1e-6, 4.0 * static_cast<double>(kk) * std::numeric_limits<T>::epsilon() * nabs);
    if (slice[centre] == T(-1) && std::abs(nsum - 1.0) <= tol) continue;
    if (std::abs(nsum) < 1e-8) {
      const T u = static_cast<T>(1.0 / static_cast<double>(kk - 1));
      for (std::size_t j = 0; j < kk; ++j) slice[j] = u;
    } else {
      for (std::size_t j = 0; j < kk; ++j) {
        if (j != centre) slice[j] = static_cast<T>(static_cast<double>(slice[j]) / nsum);
      }
    }
    slice[centre] = T(-1);
  }
}

template <typename T>
BayarLayer<T>::BayarLayer(std::size_t channels, std::size_t kernel_size, Rng& rng)
    : weight_(Shape{channels, channels, kernel_size, kernel_size}), c_(channels), k_(kernel_size) {
  auto w = weight_.mutable_data();
  for (auto& v : w) v = static_cast<T>(rng.uniform(0.0, 1.0));
  weight_.set_requires_grad(true);
  project();
}

template <typename T>
void BayarLayer<T>::project() {
  bayar_project<T>(weight_.mutable_data(), c_, c_, k_);
}

template <typename T>
Tensor<T> BayarLayer<T>::apply(const Tensor<T>& normalized_image) const {
  if (normalized_image.ndim() != 4 || normalized_image.dim(1) != c_) {
    throw std::invalid_argument("bayar: expected [N," + std::to_string(c_) + ",H,W] input, got " +
                                shape_str(normalized_image.shape()));
  }
  const auto padded = ops::pad_reflect(normalized_image, k_ / 2);
  return ops::conv2d(padded, weight_, Tensor<T>(), 1, 0);
}

template <typename T>
Tensor<T> normalize_rgb(const Tensor<T>& image) {
  return ops::add_scalar(ops::scale(image, static_cast<T>(1.0 / 127.5)), T(-1));
}

template <typename T>
Tensor<T> make_source(const Tensor<T>& image, SourceKind kind, BayarLayer<T>* bayar,
                      const SrmBank& bank) {
  if (image.ndim() != 4 || image.dim(1) != 3) {
    throw std::invalid_argument("make_source: expected [N,3,H,W] image, got " +
                                shape_str(image.shape()));
  }
  auto need_bayar = [&]() -> BayarLayer<T>& {
    if (bayar == nullptr) {
      throw std::invalid_argument(std::string("make_source: ") + std::string(to_string(kind)) +
                                  " source needs a Bayar layer");
    }
    return *bayar;
  };
  switch (kind) {
    case SourceKind::kRgb: return normalize_rgb(image);
    case SourceKind::kSrm: return srm_residual(image, bank);
    case SourceKind::kBayar: return need_bayar().apply(normalize_rgb(image));
    case SourceKind::kFused: {
      auto& layer = need_bayar();
      const auto rgb = normalize_rgb(image);
      return ops::concat<T>({rgb, srm_residual(image, bank), layer.apply(rgb)}, 1);
    }
  }
  throw std::invalid_argument("make_source: unknown source kind");
}

template class BayarLayer<float>;
template class BayarLayer<double>;
template Tensor<float> srm_residual(const Tensor<float>&, const SrmBank&);
template Tensor<double> srm_residual(const Tensor<double>&, const SrmBank&);
template void bayar_project(std::span<float>, std::size_t, std::size_t, std::size_t);
template void bayar_project(std::span<double>, std::size_t, std::size_t, std::size_t);
template Tensor<float> normalize_rgb(const Tensor<float>&);
template Tensor<double> normalize_rgb(const Tensor<double>&);
template Tensor<float> make_source(const Tensor<float>&, SourceKind, BayarLayer<float>*, const SrmBank&);
template Tensor<double> make_source(const Tensor<double>&, SourceKind, BayarLayer<double>*, const SrmBank&);

}  // namespace wscl

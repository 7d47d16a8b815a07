#include "wscl/data/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace wscl {

std::string Perturbation::label() const {
  switch (kind) {
    case Kind::kNone: return "none";
    case Kind::kJpeg: return "jpeg_q" + std::to_string(quality);
    case Kind::kBlur: return "blur_k" + std::to_string(kernel);
  }
  return "none";
}

void Perturbation::validate() const {
  if (kind == Kind::kJpeg && (quality < 10 || quality > 100)) {
    throw std::invalid_argument("jpeg quality " + std::to_string(quality) + " outside [10,100]");
  }
  if (kind == Kind::kBlur) {
    if (kernel < 1 || kernel % 2 == 0) {
      throw std::invalid_argument("blur kernel " + std::to_string(kernel) + " must be odd and >= 1");
    }
    if (!std::isfinite(sigma) || sigma < 0) throw std::invalid_argument("blur sigma must be >= 0");
  }
}

double default_blur_sigma(int kernel) { return 0.3 * ((kernel - 1) * 0.5 - 1.0) + 0.8; }

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

Image gaussian_blur(const Image& image, int kernel, double sigma) {
  Perturbation::blur(kernel, sigma).validate();
  if (kernel == 1) return image;
  if (sigma <= 0) sigma = default_blur_sigma(kernel);
  const int r = kernel / 2;
  std::vector<double> taps(static_cast<std::size_t>(kernel));
  double total = 0.0;
  for (int i = -r; i <= r; ++i) {
    taps[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
    total += taps[static_cast<std::size_t>(i + r)];
  }
  for (auto& t : taps) t /= total;

  const std::size_t w = image.width, h = image.height, c = image.channels;
  std::vector<double> tmp(w * h * c);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int i = -r; i <= r; ++i) {
          const std::size_t sx = reflect(static_cast<std::ptrdiff_t>(x) + i, w);
          acc += taps[static_cast<std::size_t>(i + r)] * image.at(y, sx, ch);
        }
        tmp[(y * w + x) * c + ch] = acc;
      }
    }
  }
  Image out(w, h, c);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int i = -r; i <= r; ++i) {
          const std::size_t sy = reflect(static_cast<std::ptrdiff_t>(y) + i, h);
          acc += taps[static_cast<std::size_t>(i + r)] * tmp[(sy * w + x) * c + ch];
        }
        out.at(y, x, ch) = static_cast<std::uint8_t>(std::clamp(std::lround(acc), 0L, 255L));
      }
    }
  }
  return out;
}

Image perturb(const Image& image, const Perturbation& p) {
  p.validate();
  switch (p.kind) {
    case Perturbation::Kind::kNone: return image;
    case Perturbation::Kind::kJpeg: return decode_image(encode_jpeg(image, p.quality), image.channels == 1);
    case Perturbation::Kind::kBlur: return gaussian_blur(image, p.kernel, p.sigma);
  }
  return image;
}

}  // namespace wscl

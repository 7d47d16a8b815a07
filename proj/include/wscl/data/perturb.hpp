#pragma once

#include <string>

#include "wscl/data/image.hpp"

namespace wscl {

struct Perturbation {
  enum class Kind { kNone, kJpeg, kBlur };
  Kind kind = Kind::kNone;
  int quality = 100;   // JPEG, [10,100]
  int kernel = 1;      // blur, odd >= 1
  double sigma = 0.0;  // blur; <= 0 picks the kernel's default

  static Perturbation none() { return {}; }
  static Perturbation jpeg(int q) { return {Kind::kJpeg, q, 1, 0.0}; }
  static Perturbation blur(int k, double sigma = 0.0) { return {Kind::kBlur, 100, k, sigma}; }

  // "none", "jpeg_q90", "blur_k5"
  std::string label() const;
  // Throws std::invalid_argument on unsupported parameters.
  void validate() const;
};

// Default sigma for a kernel size: 0.3 * ((k - 1) / 2 - 1) + 0.8.
double default_blur_sigma(int kernel);

// Separable Gaussian with reflective borders; k == 1 returns the input.
Image gaussian_blur(const Image& image, int kernel, double sigma);

Image perturb(const Image& image, const Perturbation& p);

}  // namespace wscl

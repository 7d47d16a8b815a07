#pragma once

#include "wscl/data/image.hpp"
#include "wscl/rng.hpp"

namespace wscl {

enum class AugmentMode { kTrain, kEval };

// One draw of the training transform: crop offset into the padded (or
// rescaled) image and a horizontal flip.
struct AugmentDraw {
  std::size_t crop_y = 0;
  std::size_t crop_x = 0;
  bool flip = false;
};

// Training images of exactly the target size are reflect-padded by
// `pad` pixels before cropping; smaller ones are first rescaled up.
struct AugmentConfig {
  std::size_t size = 64;
  std::size_t pad = 4;
};

Image flip_horizontal(const Image& image);
Image reflect_pad(const Image& image, std::size_t pad);
Image crop(const Image& image, std::size_t y, std::size_t x, std::size_t h, std::size_t w);
// Bilinear resize (align_corners = false).
Image resize_bilinear(const Image& image, std::size_t width, std::size_t height);

// Image the crop is drawn from (padded or rescaled).
Image augment_canvas(const Image& image, const AugmentConfig& config);
AugmentDraw draw_augment(const Image& canvas, const AugmentConfig& config, Rng& rng);
Image apply_augment(const Image& canvas, const AugmentDraw& draw, const AugmentConfig& config);

// kEval returns the image unchanged when it already has the target size
// (otherwise it is resized); kTrain crops and flips with draws from rng.
Image augment(const Image& image, AugmentMode mode, const AugmentConfig& config, Rng& rng);

}  // namespace wscl

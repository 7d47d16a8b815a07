#include "wscl/data/augment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace wscl {

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

Image flip_horizontal(const Image& image) {
  Image out(image.width, image.height, image.channels);
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      for (std::size_t c = 0; c < image.channels; ++c) {
        out.at(y, x, c) = image.at(y, image.width - 1 - x, c);
      }
    }
  }
  return out;
}

Image reflect_pad(const Image& image, std::size_t pad) {
  if (pad == 0) return image;
  Image out(image.width + 2 * pad, image.height + 2 * pad, image.channels);
  const auto p = static_cast<std::ptrdiff_t>(pad);
  for (std::size_t y = 0; y < out.height; ++y) {
    const std::size_t sy = reflect(static_cast<std::ptrdiff_t>(y) - p, image.height);
    for (std::size_t x = 0; x < out.width; ++x) {
      const std::size_t sx = reflect(static_cast<std::ptrdiff_t>(x) - p, image.width);
      for (std::size_t c = 0; c < image.channels; ++c) out.at(y, x, c) = image.at(sy, sx, c);
    }
  }
  return out;
}

Image crop(const Image& image, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) {
  if (y0 + h > image.height || x0 + w > image.width) {
    throw std::invalid_argument("crop: window exceeds image bounds");
  }
  Image out(w, h, image.channels);
  for (std::size_t y = 0; y < h; ++y) {
    const auto* src = image.pixels.data() + ((y0 + y) * image.width + x0) * image.channels;
    std::copy(src, src + w * image.channels, out.pixels.data() + y * w * image.channels);
  }
  return out;
}

Image resize_bilinear(const Image& image, std::size_t width, std::size_t height) {
  if (width == image.width && height == image.height) return image;
  Image out(width, height, image.channels);
  const double sy = static_cast<double>(image.height) / static_cast<double>(height);
  const double sx = static_cast<double>(image.width) / static_cast<double>(width);
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::max(0.0, (static_cast<double>(y) + 0.5) * sy - 0.5);
    const std::size_t y0 = std::min(static_cast<std::size_t>(fy), image.height - 1);
    const std::size_t y1 = std::min(y0 + 1, image.height - 1);
    const double ty = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::max(0.0, (static_cast<double>(x) + 0.5) * sx - 0.5);
      const std::size_t x0 = std::min(static_cast<std::size_t>(fx), image.width - 1);
      const std::size_t x1 = std::min(x0 + 1, image.width - 1);
      const double tx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < image.channels; ++c) {
        const double v = (1 - ty) * ((1 - tx) * image.at(y0, x0, c) + tx * image.at(y0, x1, c)) +
                         ty * ((1 - tx) * image.at(y1, x0, c) + tx * image.at(y1, x1, c));
        out.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return out;
}

Image augment_canvas(const Image& image, const AugmentConfig& config) {
  Image base = image;
  if (base.width < config.size || base.height < config.size) {
    const double s = static_cast<double>(config.size) /
                     static_cast<double>(std::min(base.width, base.height));
    base = resize_bilinear(base, static_cast<std::size_t>(std::ceil(base.width * s)),
                           static_cast<std::size_t>(std::ceil(base.height * s)));
  }
  if (base.width == config.size && base.height == config.size) base = reflect_pad(base, config.pad);
  return base;
}

AugmentDraw draw_augment(const Image& canvas, const AugmentConfig& config, Rng& rng) {
  AugmentDraw d;
  d.crop_y = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(canvas.height - config.size)));
  d.crop_x = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(canvas.width - config.size)));
  d.flip = rng.bernoulli(0.5);
  return d;
}

Image apply_augment(const Image& canvas, const AugmentDraw& draw, const AugmentConfig& config) {
  Image out = crop(canvas, draw.crop_y, draw.crop_x, config.size, config.size);
  return draw.flip ? flip_horizontal(out) : out;
}

Image augment(const Image& image, AugmentMode mode, const AugmentConfig& config, Rng& rng) {
  if (mode == AugmentMode::kEval) {
    if (image.width == config.size && image.height == config.size) return image;
    return resize_bilinear(image, config.size, config.size);
  }
  const Image canvas = augment_canvas(image, config);
  return apply_augment(canvas, draw_augment(canvas, config, rng), config);
}

}  // namespace wscl

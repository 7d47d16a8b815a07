#include "wscl/data/weak_loader.hpp"

#include <stdexcept>

namespace wscl {

template <typename T>
Tensor<T> images_to_tensor(std::span<const Image> images) {
  if (images.empty()) throw std::invalid_argument("images_to_tensor: empty batch");
  const std::size_t h = images[0].height, w = images[0].width;
  std::vector<T> out(images.size() * 3 * h * w);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Image& im = images[i];
    if (im.channels != 3 || im.height != h || im.width != w) {
      throw std::invalid_argument("images_to_tensor: image " + std::to_string(i) +
                                  " has a different size or channel count");
    }
    T* dst = out.data() + i * 3 * h * w;
    for (std::size_t q = 0; q < h * w; ++q) {
      for (std::size_t c = 0; c < 3; ++c) dst[c * h * w + q] = static_cast<T>(im.pixels[q * 3 + c]);
    }
  }
  return Tensor<T>(Shape{images.size(), 3, h, w}, std::move(out));
}

WeakLoader::WeakLoader(WeakManifest manifest, std::size_t image_size)
    : manifest_(std::move(manifest)), cache_(manifest_.records.size()) {
  augment_.size = image_size;
}

const Image& WeakLoader::image(std::size_t i) {
  if (i >= cache_.size()) {
    throw std::out_of_range("weak loader: index " + std::to_string(i) + " out of range (size " +
                            std::to_string(cache_.size()) + ")");
  }
  if (cache_[i].empty()) cache_[i] = read_image(manifest_.records[i].image_path);
  return cache_[i];
}

template <typename T>
WeakBatch<T> WeakLoader::batch(std::span<const std::size_t> indices, Rng* augment_rng) {
  WeakBatch<T> b;
  std::vector<Image> images;
  images.reserve(indices.size());
  Rng unused(0);
  const AugmentMode mode = augment_rng ? AugmentMode::kTrain : AugmentMode::kEval;
  for (std::size_t i : indices) {
    images.push_back(augment(image(i), mode, augment_, augment_rng ? *augment_rng : unused));
    b.labels.push_back(static_cast<double>(manifest_.records[i].label));
    b.ids.push_back(manifest_.records[i].id);
  }
  b.images = images_to_tensor<T>(images);
  return b;
}

template <typename T>
WeakBatch<T> load_weak_batch(const WeakManifest& manifest, std::span<const std::size_t> indices,
                             std::size_t image_size) {
  WeakLoader loader(manifest, image_size);
  return loader.batch<T>(indices);
}

template Tensor<float> images_to_tensor(std::span<const Image>);
template Tensor<double> images_to_tensor(std::span<const Image>);
template WeakBatch<float> WeakLoader::batch(std::span<const std::size_t>, Rng*);
template WeakBatch<double> WeakLoader::batch(std::span<const std::size_t>, Rng*);
template WeakBatch<float> load_weak_batch(const WeakManifest&, std::span<const std::size_t>, std::size_t);
template WeakBatch<double> load_weak_batch(const WeakManifest&, std::span<const std::size_t>, std::size_t);

}  // namespace wscl

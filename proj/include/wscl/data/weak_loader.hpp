#pragma once

#include <span>
#include <string>
#include <vector>

#include "wscl/data/augment.hpp"
#include "wscl/data/image.hpp"
#include "wscl/data/record.hpp"
#include "wscl/tensor.hpp"

namespace wscl {

// Training batch: images and image-level labels only.
template <typename T>
struct WeakBatch {
  Tensor<T> images;  // [B,3,H,W], [0,255] scale
  std::vector<double> labels;
  std::vector<std::string> ids;
};

// Stacks equally sized RGB images into [B,3,H,W].
template <typename T>
Tensor<T> images_to_tensor(std::span<const Image> images);

// Decodes each image once and serves batches in the requested order.
class WeakLoader {
 public:
  WeakLoader(WeakManifest manifest, std::size_t image_size);

  std::size_t size() const { return manifest_.records.size(); }
  int label(std::size_t i) const { return manifest_.records.at(i).label; }
  const WeakRecord& record(std::size_t i) const { return manifest_.records.at(i); }

  // Throws std::out_of_range on a bad index. With rng == nullptr the
  // evaluation (identity) transform is used.
  template <typename T>
  WeakBatch<T> batch(std::span<const std::size_t> indices, Rng* augment_rng = nullptr);

 private:
  const Image& image(std::size_t i);

  WeakManifest manifest_;
  AugmentConfig augment_;
  std::vector<Image> cache_;
};

// One-shot form of WeakLoader::batch.
template <typename T>
WeakBatch<T> load_weak_batch(const WeakManifest& manifest, std::span<const std::size_t> indices,
                             std::size_t image_size);

}  // namespace wscl

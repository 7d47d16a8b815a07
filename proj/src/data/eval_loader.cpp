#include "wscl/data/eval_loader.hpp"

#include <stdexcept>

#include "wscl/data/augment.hpp"
#include "wscl/data/weak_loader.hpp"

namespace wscl {

EvalLoader::EvalLoader(DatasetManifest manifest, std::filesystem::path dir, std::size_t image_size)
    : manifest_(std::move(manifest)),
      dir_(std::move(dir)),
      size_(image_size),
      images_(manifest_.records.size()),
      masks_(manifest_.records.size()) {}

EvalLoader::EvalLoader(const std::filesystem::path& dataset, std::size_t image_size)
    : EvalLoader(read_manifest(dataset), manifest_dir(dataset), image_size) {}

template <typename T>
EvalBatch<T> EvalLoader::batch(std::span<const std::size_t> indices, const Perturbation& perturbation) {
  perturbation.validate();
  EvalBatch<T> b;
  std::vector<Image> images;
  for (std::size_t i : indices) {
    if (i >= manifest_.records.size()) {
      throw std::out_of_range("eval loader: index " + std::to_string(i) + " out of range (size " +
                              std::to_string(manifest_.records.size()) + ")");
    }
    const auto& r = manifest_.records[i];
    if (images_[i].empty()) {
      images_[i] = resize_bilinear(read_image(dir_ / r.image_path), size_, size_);
    }
    if (r.mask_path && masks_[i].empty()) {
      const auto path = dir_ / *r.mask_path;
      if (!std::filesystem::exists(path)) throw IoError("missing mask file " + path.string());
      Image m = read_image(path, true);
      if (m.width != size_ || m.height != size_) m = resize_bilinear(m, size_, size_);
      for (auto& v : m.pixels) v = v >= 128 ? 255 : 0;
      masks_[i] = std::move(m);
    }
    images.push_back(perturb(images_[i], perturbation));
    b.labels.push_back(static_cast<double>(r.label));
    b.masks.push_back(r.mask_path ? masks_[i] : Image());
    b.kinds.push_back(r.kind);
    b.ids.push_back(r.id);
  }
  b.images = images_to_tensor<T>(images);
  return b;
}

template EvalBatch<float> EvalLoader::batch(std::span<const std::size_t>, const Perturbation&);
template EvalBatch<double> EvalLoader::batch(std::span<const std::size_t>, const Perturbation&);

}  // namespace wscl

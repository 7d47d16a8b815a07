#pragma once

#include <span>
#include <string>
#include <vector>

#include "wscl/data/image.hpp"
#include "wscl/data/manifest.hpp"
#include "wscl/data/perturb.hpp"
#include "wscl/tensor.hpp"

namespace wscl {

// Evaluation batch: everything in the weak batch plus ground-truth masks.
template <typename T>
struct EvalBatch {
  Tensor<T> images;             // [B,3,H,W], [0,255]
  std::vector<double> labels;
  std::vector<Image> masks;     // 1-channel {0,255}; empty image for authentic samples
  std::vector<ManipulationKind> kinds;
  std::vector<std::string> ids;
};

class EvalLoader {
 public:
  // `dir` is the manifest directory; paths in records are relative to it.
  EvalLoader(DatasetManifest manifest, std::filesystem::path dir, std::size_t image_size);
  explicit EvalLoader(const std::filesystem::path& dataset, std::size_t image_size);

  std::size_t size() const { return manifest_.records.size(); }
  const DatasetManifest& manifest() const { return manifest_; }

  // Throws std::out_of_range for bad indices and IoError for missing mask files.
  // The perturbation is applied to the image only.
  template <typename T>
  EvalBatch<T> batch(std::span<const std::size_t> indices,
                     const Perturbation& perturbation = Perturbation::none());

 private:
  DatasetManifest manifest_;
  std::filesystem::path dir_;
  std::size_t size_;
  std::vector<Image> images_;
  std::vector<Image> masks_;
};

}  // namespace wscl

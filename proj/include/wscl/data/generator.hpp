#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wscl/data/image.hpp"
#include "wscl/data/manifest.hpp"

namespace wscl {

// kTextured: value noise plus geometric shapes. kPlain: value noise only.
enum class BaseStyle { kTextured, kPlain };

std::string_view to_string(BaseStyle style);
BaseStyle parse_base_style(std::string_view name);

struct GeneratorConfig {
  std::uint64_t seed = 0;
  std::size_t n_per_class = 100;  // authentic count == tampered count
  std::size_t size = 64;
  std::vector<ManipulationKind> kinds{ManipulationKind::kCopyMove, ManipulationKind::kSplice};
  BaseStyle style = BaseStyle::kTextured;
  std::string split = "train";
  double mask_min = 0.05;  // tampered-area bounds as fractions of the image
  double mask_max = 0.40;
  int inpaint_passes = 50;

  // Throws std::invalid_argument.
  void validate() const;
};

// Per-image acquisition model baked into every authentic render.
struct CameraResponse {
  double gain[3] = {1, 1, 1};
  double gamma = 1.0;
  double noise_sigma = 2.0;  // additive Gaussian, 8-bit units
  double blur = 0.0;         // weight of a 3x3 binomial pre-blur
};

struct Region {
  enum class Shape { kRect, kEllipse };
  Shape shape = Shape::kRect;
  double cy = 0, cx = 0;  // centre
  double ry = 0, rx = 0;  // half extents
};

// Everything needed to regenerate one sample.
struct Provenance {
  std::string id;
  ManipulationKind kind = ManipulationKind::kNone;
  std::uint64_t base_seed = 0;
  std::uint64_t donor_seed = 0;  // splice only
  std::string donor_id;          // splice only; never equal to id
  Region region;
  double source_cy = 0, source_cx = 0;  // copy-move source centre / splice donor centre
  double scale = 1.0, angle = 0.0;      // copy-move resampling
  CameraResponse camera;
  CameraResponse donor_camera;
};

struct GeneratedSample {
  Image image;
  Image mask;  // 1-channel {0,255}; empty for authentic
  Image base;  // image before manipulation
  Provenance provenance;
};

CameraResponse draw_camera(std::uint64_t seed);
Image render_authentic(std::uint64_t seed, std::size_t size, BaseStyle style, CameraResponse* camera = nullptr);
Image rasterize(const Region& region, std::size_t size);

// Deterministic in (config.seed, index).
GeneratedSample make_sample(const GeneratorConfig& config, std::size_t index, ManipulationKind kind);

// The record ordering generate_dataset uses: n authentic then n tampered,
// tampered kinds cycling through config.kinds.
ManipulationKind kind_for_index(const GeneratorConfig& config, std::size_t index);
std::string sample_id(const GeneratorConfig& config, std::size_t index);

// Writes images/, masks/, manifest.jsonl, dataset.json and provenance.jsonl.
DatasetManifest generate_dataset(const GeneratorConfig& config, const std::filesystem::path& out_dir);

}  // namespace wscl

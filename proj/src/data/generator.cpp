#include "wscl/data/generator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "json.hpp"
#include "wscl/rng.hpp"

namespace wscl {

std::string_view to_string(BaseStyle style) { return style == BaseStyle::kPlain ? "plain" : "textured"; }

BaseStyle parse_base_style(std::string_view name) {
  if (name == "textured") return BaseStyle::kTextured;
  if (name == "plain") return BaseStyle::kPlain;
  throw std::invalid_argument("unknown base style '" + std::string(name) + "'");
}

void GeneratorConfig::validate() const {
  if (size < 32) throw std::invalid_argument("generator: size must be >= 32");
  if (kinds.empty()) throw std::invalid_argument("generator: no manipulation kinds");
  for (auto k : kinds) {
    if (k == ManipulationKind::kNone) throw std::invalid_argument("generator: 'none' is not a manipulation kind");
  }
  if (!(mask_min > 0 && mask_min < mask_max && mask_max < 1)) {
    throw std::invalid_argument("generator: need 0 < mask_min < mask_max < 1");
  }
  if (inpaint_passes < 1) throw std::invalid_argument("generator: inpaint passes must be >= 1");
}

namespace {

using Plane = std::vector<double>;  // size*size*3, interleaved RGB

double smooth(double t) { return t * t * (3 - 2 * t); }

// Bilinear value noise on a lattice of `cell` pixels, values in [0,1].
std::vector<double> value_noise(Rng& rng, std::size_t size, std::size_t cell) {
  const std::size_t g = size / cell + 2;
  std::vector<double> lattice(g * g);
  for (auto& v : lattice) v = rng.uniform();
  std::vector<double> out(size * size);
  for (std::size_t y = 0; y < size; ++y) {
    const double fy = static_cast<double>(y) / static_cast<double>(cell);
    const auto iy = static_cast<std::size_t>(fy);
    const double ty = smooth(fy - static_cast<double>(iy));
    for (std::size_t x = 0; x < size; ++x) {
      const double fx = static_cast<double>(x) / static_cast<double>(cell);
      const auto ix = static_cast<std::size_t>(fx);
      const double tx = smooth(fx - static_cast<double>(ix));
      const double a = lattice[iy * g + ix], b = lattice[iy * g + ix + 1];
      const double c = lattice[(iy + 1) * g + ix], d = lattice[(iy + 1) * g + ix + 1];
      out[y * size + x] = (1 - ty) * ((1 - tx) * a + tx * b) + ty * ((1 - tx) * c + tx * d);
    }
  }
  return out;
}

Plane render_content(Rng& rng, std::size_t size, BaseStyle style) {
  const std::size_t n = size * size;
  std::vector<double> field(n, 0.0);
  double amp = 1.0, total = 0.0;
  for (std::size_t cell : {32, 16, 8}) {
    const auto layer = value_noise(rng, size, std::min(cell, size / 2));
    for (std::size_t q = 0; q < n; ++q) field[q] += amp * layer[q];
    total += amp;
    amp *= 0.5;
  }
  double a[3], b[3];
  for (int c = 0; c < 3; ++c) {
    a[c] = rng.uniform(30, 225);
    b[c] = rng.uniform(30, 225);
  }
  Plane px(n * 3);
  for (int c = 0; c < 3; ++c) {
    const auto detail = value_noise(rng, size, 4);
    for (std::size_t q = 0; q < n; ++q) {
      const double f = field[q] / total;
      px[q * 3 + c] = a[c] + (b[c] - a[c]) * f + 24.0 * (detail[q] - 0.5);
    }
  }
  if (style == BaseStyle::kPlain) return px;

  const auto shapes = rng.uniform_int(2, 5);
  const double s = static_cast<double>(size);
  for (std::int64_t k = 0; k < shapes; ++k) {
    const auto type = rng.uniform_int(0, 2);
    double col[3];
    for (auto& v : col) v = rng.uniform(10, 245);
    const double alpha = rng.uniform(0.7, 1.0);
    const double cy = rng.uniform(0, s), cx = rng.uniform(0, s);
    const double ry = rng.uniform(0.06, 0.25) * s, rx = rng.uniform(0.06, 0.25) * s;
    double tri[6];
    for (auto& v : tri) v = rng.uniform(-0.3, 0.3) * s;
    auto inside = [&](double y, double x) {
      if (type == 0) return ((y - cy) * (y - cy)) / (ry * ry) + ((x - cx) * (x - cx)) / (rx * rx) <= 1.0;
      if (type == 1) return std::abs(y - cy) <= ry && std::abs(x - cx) <= rx;
      // triangle from three offsets around the centre
      const double y0 = cy + tri[0], x0 = cx + tri[1], y1 = cy + tri[2], x1 = cx + tri[3];
      const double y2 = cy + tri[4], x2 = cx + tri[5];
      const double d0 = (x1 - x0) * (y - y0) - (y1 - y0) * (x - x0);
      const double d1 = (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1);
      const double d2 = (x0 - x2) * (y - y2) - (y0 - y2) * (x - x2);
      return (d0 >= 0 && d1 >= 0 && d2 >= 0) || (d0 <= 0 && d1 <= 0 && d2 <= 0);
    };
    for (std::size_t y = 0; y < size; ++y) {
      for (std::size_t x = 0; x < size; ++x) {
        if (!inside(static_cast<double>(y) + 0.5, static_cast<double>(x) + 0.5)) continue;
        for (int c = 0; c < 3; ++c) {
          double& v = px[(y * size + x) * 3 + static_cast<std::size_t>(c)];
          v = (1 - alpha) * v + alpha * col[c];
        }
      }
    }
  }
  return px;
}

Image quantize(const Plane& px, std::size_t size) {
  Image out(size, size, 3);
  for (std::size_t q = 0; q < px.size(); ++q) {
    out.pixels[q] = static_cast<std::uint8_t>(std::clamp(std::lround(px[q]), 0L, 255L));
  }
  return out;
}

void apply_camera(Plane& px, std::size_t size, const CameraResponse& cam, Rng& rng) {
  if (cam.blur > 0) {
    Plane src = px;
    const double w[3] = {0.25, 0.5, 0.25};
    for (std::size_t y = 0; y < size; ++y) {
      for (std::size_t x = 0; x < size; ++x) {
        for (std::size_t c = 0; c < 3; ++c) {
          double acc = 0.0;
          for (int dy = -1; dy <= 1; ++dy) {
            const auto sy = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(
                static_cast<std::ptrdiff_t>(y) + dy, 0, static_cast<std::ptrdiff_t>(size) - 1));
            for (int dx = -1; dx <= 1; ++dx) {
              const auto sx = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(
                  static_cast<std::ptrdiff_t>(x) + dx, 0, static_cast<std::ptrdiff_t>(size) - 1));
              acc += w[dy + 1] * w[dx + 1] * src[(sy * size + sx) * 3 + c];
            }
          }
          double& v = px[(y * size + x) * 3 + c];
          v = (1 - cam.blur) * v + cam.blur * acc;
        }
      }
    }
  }
  for (std::size_t q = 0; q < size * size; ++q) {
    // Shared luminance component plus per-channel noise.
    const double shared = rng.normal();
    for (std::size_t c = 0; c < 3; ++c) {
      double v = std::clamp(px[q * 3 + c] * cam.gain[c] / 255.0, 0.0, 1.0);
      v = 255.0 * std::pow(v, cam.gamma);
      px[q * 3 + c] = v + cam.noise_sigma * (0.6 * shared + 0.8 * rng.normal());
    }
  }
}

Region draw_region(Rng& rng, std::size_t size, const GeneratorConfig& cfg) {
  const double s = static_cast<double>(size);
  const double lo = cfg.mask_min + 0.01, hi = std::min(cfg.mask_max - 0.02, 0.32);
  for (int attempt = 0; attempt < 200; ++attempt) {
    Region r;
    r.shape = rng.bernoulli(0.5) ? Region::Shape::kEllipse : Region::Shape::kRect;
    const double area = rng.uniform(lo, std::max(lo, hi)) * s * s;
    const double aspect = std::exp(rng.uniform(std::log(0.6), std::log(1.6)));
    const double k = r.shape == Region::Shape::kEllipse ? std::numbers::pi : 4.0;
    r.ry = std::sqrt(area / k * aspect);
    r.rx = area / k / r.ry;
    if (2 * r.ry + 2 > s || 2 * r.rx + 2 > s) continue;
    r.cy = rng.uniform(r.ry + 1, s - r.ry - 1);
    r.cx = rng.uniform(r.rx + 1, s - r.rx - 1);
    const Image m = rasterize(r, size);
    std::size_t on = 0;
    for (auto v : m.pixels) on += v ? 1 : 0;
    const double frac = static_cast<double>(on) / (s * s);
    if (frac >= cfg.mask_min && frac <= cfg.mask_max) return r;
  }
  throw std::logic_error("generator: could not draw a region within the mask bounds");
}

double bilinear(const Image& im, double y, double x, std::size_t c) {
  const double maxy = static_cast<double>(im.height - 1), maxx = static_cast<double>(im.width - 1);
  y = std::clamp(y, 0.0, maxy);
  x = std::clamp(x, 0.0, maxx);
  const auto y0 = static_cast<std::size_t>(y), x0 = static_cast<std::size_t>(x);
  const std::size_t y1 = std::min(y0 + 1, im.height - 1), x1 = std::min(x0 + 1, im.width - 1);
  const double ty = y - static_cast<double>(y0), tx = x - static_cast<double>(x0);
  return (1 - ty) * ((1 - tx) * im.at(y0, x0, c) + tx * im.at(y0, x1, c)) +
         ty * ((1 - tx) * im.at(y1, x0, c) + tx * im.at(y1, x1, c));
}

// Copy-move source: resampled (scaled + rotated) content centred elsewhere.
void copy_move(Rng& rng, const Image& base, const Image& mask, Provenance& p, Image& out) {
  const double s = static_cast<double>(base.width);
  const Region& r = p.region;
  double scale = std::exp(rng.uniform(std::log(1.15), std::log(1.45)));
  if (rng.bernoulli(0.5)) scale = 1.0 / scale;
  p.scale = scale;
  p.angle = rng.uniform(-25.0, 25.0) * std::numbers::pi / 180.0;
  const double reach = std::max(r.ry, r.rx) / std::min(scale, 1.0);
  for (int attempt = 0; attempt < 100; ++attempt) {
    p.source_cy = rng.uniform(reach * 0.5, s - reach * 0.5);
    p.source_cx = rng.uniform(reach * 0.5, s - reach * 0.5);
    if (std::hypot(p.source_cy - r.cy, p.source_cx - r.cx) >= std::max(r.ry, r.rx)) break;
  }
  const double ca = std::cos(p.angle), sa = std::sin(p.angle);
  for (std::size_t y = 0; y < base.height; ++y) {
    for (std::size_t x = 0; x < base.width; ++x) {
      if (!mask.at(y, x)) continue;
      const double dy = (static_cast<double>(y) - r.cy) / scale;
      const double dx = (static_cast<double>(x) - r.cx) / scale;
      const double sy = p.source_cy + ca * dy - sa * dx;
      const double sx = p.source_cx + sa * dy + ca * dx;
      for (std::size_t c = 0; c < 3; ++c) {
        out.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(std::lround(bilinear(base, sy, sx, c)), 0L, 255L));
      }
    }
  }
}

// Splice: same-shape region copied pixel-for-pixel from a different image.
void splice(Rng& rng, const Image& donor, const Image& mask, Provenance& p, Image& out) {
  const double s = static_cast<double>(donor.width);
  const Region& r = p.region;
  p.source_cy = std::round(rng.uniform(r.ry + 1, s - r.ry - 1));
  p.source_cx = std::round(rng.uniform(r.rx + 1, s - r.rx - 1));
  const auto oy = static_cast<std::ptrdiff_t>(p.source_cy - std::round(r.cy));
  const auto ox = static_cast<std::ptrdiff_t>(p.source_cx - std::round(r.cx));
  const auto last = static_cast<std::ptrdiff_t>(donor.width) - 1;
  for (std::size_t y = 0; y < out.height; ++y) {
    for (std::size_t x = 0; x < out.width; ++x) {
      if (!mask.at(y, x)) continue;
      const auto sy = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(y) + oy, 0, last));
      const auto sx = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(x) + ox, 0, last));
      for (std::size_t c = 0; c < 3; ++c) out.at(y, x, c) = donor.at(sy, sx, c);
    }
  }
}

// Fill the masked region from its boundary by repeated 4-neighbour averaging.
void inpaint(const Image& mask, int passes, Image& out) {
  const std::size_t w = out.width, h = out.height;
  std::vector<double> px(w * h * 3);
  for (std::size_t q = 0; q < px.size(); ++q) px[q] = out.pixels[q];
  double ring[3] = {0, 0, 0};
  std::size_t ring_n = 0;
  auto masked = [&](std::ptrdiff_t y, std::ptrdiff_t x) {
    return y >= 0 && x >= 0 && y < static_cast<std::ptrdiff_t>(h) && x < static_cast<std::ptrdiff_t>(w) &&
           mask.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) != 0;
  };
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if (mask.at(y, x)) continue;
      const auto iy = static_cast<std::ptrdiff_t>(y), ix = static_cast<std::ptrdiff_t>(x);
      if (masked(iy - 1, ix) || masked(iy + 1, ix) || masked(iy, ix - 1) || masked(iy, ix + 1)) {
        for (std::size_t c = 0; c < 3; ++c) ring[c] += px[(y * w + x) * 3 + c];
        ++ring_n;
      }
    }
  }
  for (std::size_t q = 0; q < w * h; ++q) {
    if (!mask.pixels[q]) continue;
    for (std::size_t c = 0; c < 3; ++c) px[q * 3 + c] = ring_n ? ring[c] / static_cast<double>(ring_n) : 127.5;
  }
  std::vector<double> next = px;
  for (int pass = 0; pass < passes; ++pass) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        if (!mask.at(y, x)) continue;
        const std::size_t ys[4] = {y > 0 ? y - 1 : y, y + 1 < h ? y + 1 : y, y, y};
        const std::size_t xs[4] = {x, x, x > 0 ? x - 1 : x, x + 1 < w ? x + 1 : x};
        for (std::size_t c = 0; c < 3; ++c) {
          double acc = 0.0;
          for (int k = 0; k < 4; ++k) acc += px[(ys[k] * w + xs[k]) * 3 + c];
          next[(y * w + x) * 3 + c] = acc / 4.0;
        }
      }
    }
    px.swap(next);
  }
  for (std::size_t q = 0; q < w * h; ++q) {
    if (!mask.pixels[q]) continue;
    for (std::size_t c = 0; c < 3; ++c) {
      out.pixels[q * 3 + c] = static_cast<std::uint8_t>(std::clamp(std::lround(px[q * 3 + c]), 0L, 255L));
    }
  }
}

nlohmann::json camera_json(const CameraResponse& c) {
  return {{"gain", {c.gain[0], c.gain[1], c.gain[2]}},
          {"gamma", c.gamma},
          {"noise_sigma", c.noise_sigma},
          {"blur", c.blur}};
}

}  // namespace

CameraResponse draw_camera(std::uint64_t seed) {
  Rng rng(Rng::derive(seed, 0xCA11));
  CameraResponse c;
  for (auto& g : c.gain) g = rng.uniform(0.85, 1.15);
  c.gamma = rng.uniform(0.75, 1.35);
  c.noise_sigma = std::exp(rng.uniform(std::log(1.5), std::log(12.0)));
  c.blur = rng.bernoulli(0.5) ? rng.uniform(0.0, 0.6) : 0.0;
  return c;
}

Image render_authentic(std::uint64_t seed, std::size_t size, BaseStyle style, CameraResponse* camera) {
  Rng rng(seed);
  Plane px = render_content(rng, size, style);
  const CameraResponse cam = draw_camera(seed);
  Rng noise(Rng::derive(seed, 0x0015E));
  apply_camera(px, size, cam, noise);
  if (camera) *camera = cam;
  return quantize(px, size);
}

Image rasterize(const Region& r, std::size_t size) {
  Image m(size, size, 1);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double dy = (static_cast<double>(y) + 0.5 - r.cy) / r.ry;
      const double dx = (static_cast<double>(x) + 0.5 - r.cx) / r.rx;
      const bool in = r.shape == Region::Shape::kEllipse ? dy * dy + dx * dx <= 1.0
                                                         : std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0;
      m.at(y, x) = in ? 255 : 0;
    }
  }
  return m;
}

ManipulationKind kind_for_index(const GeneratorConfig& config, std::size_t index) {
  if (index < config.n_per_class) return ManipulationKind::kNone;
  return config.kinds[(index - config.n_per_class) % config.kinds.size()];
}

std::string sample_id(const GeneratorConfig& config, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05zu", index);
  return config.split + "_" + buf;
}

GeneratedSample make_sample(const GeneratorConfig& config, std::size_t index, ManipulationKind kind) {
  config.validate();
  GeneratedSample out;
  Provenance& p = out.provenance;
  p.id = sample_id(config, index);
  p.kind = kind;
  p.base_seed = Rng::derive(config.seed, index, 1);
  out.base = render_authentic(p.base_seed, config.size, config.style, &p.camera);
  out.image = out.base;
  if (kind == ManipulationKind::kNone) return out;

  Rng rng(Rng::derive(config.seed, index, 3));
  p.region = draw_region(rng, config.size, config);
  out.mask = rasterize(p.region, config.size);
  switch (kind) {
    case ManipulationKind::kCopyMove: copy_move(rng, out.base, out.mask, p, out.image); break;
    case ManipulationKind::kSplice: {
      // Donor from a different camera: noise levels at least 2.5x apart.
      for (std::uint64_t k = 0;; ++k) {
        p.donor_seed = Rng::derive(config.seed, index, 100 + k);
        p.donor_camera = draw_camera(p.donor_seed);
        const double ratio = p.donor_camera.noise_sigma / p.camera.noise_sigma;
        if (ratio >= 2.5 || ratio <= 1.0 / 2.5) break;
      }
      p.donor_id = p.id + "_donor";
      const Image donor = render_authentic(p.donor_seed, config.size, config.style);
      splice(rng, donor, out.mask, p, out.image);
      break;
    }
    case ManipulationKind::kInpaint: inpaint(out.mask, config.inpaint_passes, out.image); break;
    case ManipulationKind::kNone: break;
  }
  return out;
}

DatasetManifest generate_dataset(const GeneratorConfig& config, const std::filesystem::path& out_dir) {
  config.validate();
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir / "images", ec);
  fs::create_directories(out_dir / "masks", ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  DatasetManifest m;
  m.split = config.split;
  m.seed = config.seed;
  m.image_size = config.size;
  std::ofstream prov(out_dir / "provenance.jsonl");
  if (!prov) throw IoError("cannot write provenance log in " + out_dir.string());
  const std::size_t total = 2 * config.n_per_class;
  for (std::size_t i = 0; i < total; ++i) {
    const auto kind = kind_for_index(config, i);
    const auto s = make_sample(config, i, kind);
    SampleRecord r;
    r.id = s.provenance.id;
    r.image_path = "images/" + r.id + ".png";
    r.label = kind == ManipulationKind::kNone ? 0 : 1;
    r.kind = kind;
    write_png(out_dir / r.image_path, s.image);
    if (r.label) {
      r.mask_path = "masks/" + r.id + ".png";
      write_png(out_dir / *r.mask_path, s.mask);
    }
    const auto& p = s.provenance;
    nlohmann::json j{{"id", p.id},
                     {"kind", std::string(to_string(p.kind))},
                     {"base_seed", p.base_seed},
                     {"camera", camera_json(p.camera)}};
    if (r.label) {
      j["region"] = {{"shape", p.region.shape == Region::Shape::kRect ? "rect" : "ellipse"},
                     {"cy", p.region.cy}, {"cx", p.region.cx}, {"ry", p.region.ry}, {"rx", p.region.rx}};
    }
    if (kind == ManipulationKind::kCopyMove) {
      j["source"] = {{"cy", p.source_cy}, {"cx", p.source_cx}, {"scale", p.scale}, {"angle", p.angle}};
    }
    if (kind == ManipulationKind::kSplice) {
      j["donor"] = {{"id", p.donor_id}, {"seed", p.donor_seed}, {"cy", p.source_cy},
                    {"cx", p.source_cx}, {"camera", camera_json(p.donor_camera)}};
    }
    prov << j.dump() << '\n';
    m.records.push_back(std::move(r));
  }
  write_manifest(out_dir, m);
  if (!prov) throw IoError("write failed for provenance log");
  return m;
}

}  // namespace wscl

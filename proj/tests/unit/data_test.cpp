#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "test_util.hpp"
#include "wscl/data/augment.hpp"
#include "wscl/data/eval_loader.hpp"
#include "wscl/data/generator.hpp"
#include "wscl/data/manifest.hpp"
#include "wscl/data/perturb.hpp"
#include "wscl/data/weak_loader.hpp"

using namespace wscl;
namespace fs = std::filesystem;

namespace {

GeneratorConfig small_config(std::uint64_t seed) {
  GeneratorConfig c;
  c.seed = seed;
  c.n_per_class = 6;
  c.size = 64;
  c.kinds = {ManipulationKind::kCopyMove, ManipulationKind::kSplice, ManipulationKind::kInpaint};
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Image noise_image(std::uint64_t seed, std::size_t w, std::size_t h) {
  Rng rng(seed);
  Image img(w, h, 3);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
  return img;
}

double variance(const Image& img) {
  double s = 0, s2 = 0;
  for (auto p : img.pixels) {
    s += p;
    s2 += static_cast<double>(p) * p;
  }
  const double n = static_cast<double>(img.pixels.size());
  return s2 / n - (s / n) * (s / n);
}

}  // namespace

TEST(Generator, DeterministicFiles) {
  test::TempDir a("gen_a"), b("gen_b");
  generate_dataset(small_config(5), a.path());
  generate_dataset(small_config(5), b.path());
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a.path())) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), a.path());
    ASSERT_TRUE(fs::exists(b.path() / rel)) << rel;
    EXPECT_EQ(slurp(e.path()), slurp(b.path() / rel)) << rel;
    ++files;
  }
  EXPECT_GT(files, 12u);
  const auto c = make_sample(small_config(6), 7, ManipulationKind::kCopyMove);
  const auto d = make_sample(small_config(5), 7, ManipulationKind::kCopyMove);
  EXPECT_NE(c.image, d.image);
}

TEST(Generator, MaskAreaWithinBounds) {
  const auto cfg = small_config(9);
  for (auto kind : cfg.kinds) {
    for (std::size_t i = 0; i < 20; ++i) {
      const auto s = make_sample(cfg, cfg.n_per_class + i, kind);
      ASSERT_EQ(s.mask.channels, 1u);
      std::size_t on = 0;
      for (auto p : s.mask.pixels) {
        EXPECT_TRUE(p == 0 || p == 255);
        on += p != 0;
      }
      const double frac = static_cast<double>(on) / static_cast<double>(s.mask.pixels.size());
      EXPECT_GE(frac, cfg.mask_min) << to_string(kind) << " " << i;
      EXPECT_LE(frac, cfg.mask_max) << to_string(kind) << " " << i;
    }
  }
}

TEST(Generator, TamperedPixelsCoveredByMask) {
  const auto cfg = small_config(10);
  for (auto kind : cfg.kinds) {
    for (std::size_t i = 0; i < 10; ++i) {
      const auto s = make_sample(cfg, cfg.n_per_class + i, kind);
      ASSERT_FALSE(s.base.empty());
      std::size_t changed = 0;
      for (std::size_t y = 0; y < s.image.height; ++y) {
        for (std::size_t x = 0; x < s.image.width; ++x) {
          bool diff = false;
          for (std::size_t c = 0; c < 3; ++c) diff |= s.image.at(y, x, c) != s.base.at(y, x, c);
          if (diff) {
            ++changed;
            EXPECT_EQ(s.mask.at(y, x), 255) << to_string(kind) << " at " << y << "," << x;
          }
        }
      }
      EXPECT_GT(changed, 0u) << to_string(kind);
    }
  }
}

TEST(Generator, SpliceDonorIsAnotherImage) {
  const auto cfg = small_config(11);
  for (std::size_t i = 0; i < 20; ++i) {
    const auto s = make_sample(cfg, cfg.n_per_class + i, ManipulationKind::kSplice);
    EXPECT_FALSE(s.provenance.donor_id.empty());
    EXPECT_NE(s.provenance.donor_id, s.provenance.id);
    EXPECT_NE(s.provenance.donor_seed, s.provenance.base_seed);
  }
}

TEST(Generator, ManifestLayout) {
  test::TempDir dir("gen_layout");
  const auto cfg = small_config(12);
  const auto m = generate_dataset(cfg, dir.path());
  EXPECT_EQ(m.records.size(), 12u);
  EXPECT_NO_THROW(m.validate());
  const auto counts = m.counts();
  EXPECT_EQ(counts.at("none"), 6u);
  for (const auto& r : m.records) {
    EXPECT_TRUE(fs::exists(dir.path() / r.image_path));
    EXPECT_EQ(r.mask_path.has_value(), r.label == 1);
    if (r.mask_path) {
      EXPECT_TRUE(fs::exists(dir.path() / *r.mask_path));
    }
  }
  EXPECT_EQ(read_manifest(dir.path()).records, m.records);
  EXPECT_TRUE(fs::exists(dir.path() / "provenance.jsonl"));
}

TEST(Generator, InvalidConfigRejected) {
  auto c = small_config(0);
  c.mask_min = 0.5;
  c.mask_max = 0.2;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = small_config(0);
  c.kinds = {ManipulationKind::kNone};
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Manifest, RoundTripAndValidation) {
  test::TempDir dir("manifest");
  DatasetManifest m;
  m.split = "test";
  m.seed = 3;
  m.image_size = 64;
  m.records.push_back({"a", "images/a.png", 0, ManipulationKind::kNone, std::nullopt});
  m.records.push_back({"b", "images/b.png", 1, ManipulationKind::kSplice, "masks/b.png"});
  write_manifest(dir.path(), m);
  const auto back = read_manifest(dir.path() / "manifest.jsonl");
  EXPECT_EQ(back.records, m.records);
  EXPECT_EQ(back.split, "test");
  EXPECT_EQ(back.seed, 3u);
  EXPECT_EQ(back.image_size, 64u);
  auto bad = m;
  bad.records[1].mask_path.reset();
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = m;
  bad.records[1].id = "a";
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  EXPECT_THROW(read_manifest(dir.path() / "missing"), IoError);
}

TEST(Augment, EvalIdentityAndShapes) {
  Rng rng(51);
  const auto img = noise_image(1, 64, 64);
  AugmentConfig cfg;
  EXPECT_EQ(augment(img, AugmentMode::kEval, cfg, rng), img);
  for (int i = 0; i < 20; ++i) {
    const auto out = augment(img, AugmentMode::kTrain, cfg, rng);
    EXPECT_EQ(out.width, 64u);
    EXPECT_EQ(out.height, 64u);
  }
  const auto small = augment(noise_image(2, 40, 48), AugmentMode::kTrain, cfg, rng);
  EXPECT_EQ(small.width, 64u);
  EXPECT_EQ(small.height, 64u);
  EXPECT_EQ(flip_horizontal(flip_horizontal(img)), img);
  const auto canvas = augment_canvas(img, cfg);
  const auto draw = draw_augment(canvas, cfg, rng);
  EXPECT_EQ(apply_augment(canvas, draw, cfg), apply_augment(canvas, draw, cfg));
}

TEST(Augment, PadAndCropAreInverse) {
  const auto img = noise_image(3, 16, 12);
  EXPECT_EQ(crop(reflect_pad(img, 4), 4, 4, 12, 16), img);
  const auto p = reflect_pad(img, 1);
  EXPECT_EQ(p.at(0, 1, 0), img.at(1, 0, 0));
}

TEST(Perturb, BlurIdentityAndVariance) {
  const auto img = noise_image(4, 48, 48);
  EXPECT_EQ(gaussian_blur(img, 1, 0.0), img);
  EXPECT_EQ(perturb(img, Perturbation::blur(1)), img);
  EXPECT_EQ(perturb(img, Perturbation::none()), img);
  double prev = variance(img);
  for (double sigma : {0.5, 1.0, 1.5, 2.5}) {
    const double v = variance(gaussian_blur(img, 9, sigma));
    EXPECT_LT(v, prev) << sigma;
    prev = v;
  }
  EXPECT_NEAR(default_blur_sigma(3), 0.8, 1e-12);
  EXPECT_NEAR(default_blur_sigma(9), 1.7, 1e-12);
}

TEST(Perturb, JpegLossyKeepsShape) {
  const auto img = noise_image(5, 32, 24);
  const auto q10 = perturb(img, Perturbation::jpeg(10));
  EXPECT_NE(q10, img);
  for (int q : {100, 90, 50, 10}) {
    const auto out = perturb(img, Perturbation::jpeg(q));
    EXPECT_EQ(out.width, img.width);
    EXPECT_EQ(out.height, img.height);
    EXPECT_EQ(out.channels, 3u);
  }
  EXPECT_THROW(Perturbation::jpeg(5).validate(), std::invalid_argument);
  EXPECT_THROW(Perturbation::blur(4).validate(), std::invalid_argument);
  EXPECT_EQ(Perturbation::jpeg(90).label(), "jpeg_q90");
  EXPECT_EQ(Perturbation::blur(5).label(), "blur_k5");
}

TEST(Loaders, WeakBatchMatchesManifest) {
  test::TempDir dir("loaders");
  const auto m = generate_dataset(small_config(13), dir.path());
  const auto weak = load_weak_manifest(dir.path());
  ASSERT_EQ(weak.records.size(), m.records.size());
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    EXPECT_EQ(weak.records[i].id, m.records[i].id);
    EXPECT_EQ(weak.records[i].label, m.records[i].label);
  }
  WeakLoader loader(weak, 64);
  const std::vector<std::size_t> idx{11, 0, 7};
  const auto b = loader.batch<float>(idx);
  EXPECT_EQ(b.images.shape(), (Shape{3, 3, 64, 64}));
  for (std::size_t k = 0; k < idx.size(); ++k) {
    EXPECT_EQ(b.labels[k], m.records[idx[k]].label);
    EXPECT_EQ(b.ids[k], m.records[idx[k]].id);
  }
  const std::vector<std::size_t> bad{99};
  EXPECT_THROW(loader.batch<float>(bad), std::out_of_range);

  EvalLoader eval(dir.path(), 64);
  const auto e = eval.batch<float>(idx);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    EXPECT_EQ(e.masks[k].empty(), m.records[idx[k]].label == 0);
    EXPECT_EQ(e.kinds[k], m.records[idx[k]].kind);
  }
  for (std::size_t i = 0; i < b.images.numel(); ++i) ASSERT_EQ(b.images.at(i), e.images.at(i));
}

TEST(Loaders, MissingMaskIsIoError) {
  test::TempDir dir("missing_mask");
  const auto m = generate_dataset(small_config(14), dir.path());
  fs::remove(dir.path() / *m.records.back().mask_path);
  EXPECT_THROW(
      {
        EvalLoader eval(dir.path(), 64);
        const std::vector<std::size_t> idx{m.records.size() - 1};
        eval.batch<float>(idx);
      },
      IoError);
}

#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"
#include "wscl/consistency.hpp"
#include "wscl/detector.hpp"
#include "wscl/ops.hpp"

using namespace wscl;

namespace {

Tensor<double> filled(Shape s, double v) { return Tensor<double>(std::move(s), v); }

const double kLn2 = std::log(2.0);

}  // namespace

TEST(EnsembleMap, WeightedMean) {
  const std::vector<double> w{1, 2, 2};
  const auto m = ensemble_map<double>({filled({1, 2, 2}, 0.9), filled({1, 2, 2}, 0.5), filled({1, 2, 2}, 0.5)}, w);
  for (double v : test::values(m)) EXPECT_NEAR(v, 0.58, 1e-12);
  const std::vector<double> ones{1, 1, 1};
  const auto p = ensemble_map<double>({filled({1, 1, 1}, 0.0), filled({1, 1, 1}, 0.5), filled({1, 1, 1}, 1.0)}, ones);
  EXPECT_NEAR(p.at(0), 0.5, 1e-12);
}

TEST(EnsembleMap, IdenticalMapsAndScaleInvariance) {
  Rng rng(31);
  const auto a = test::random_tensor<double>(rng, {2, 4, 4}, 0.01, 0.99);
  const auto b = test::random_tensor<double>(rng, {2, 4, 4}, 0.01, 0.99);
  const auto c = test::random_tensor<double>(rng, {2, 4, 4}, 0.01, 0.99);
  const std::vector<double> w{1, 2, 2};
  const auto same = ensemble_map<double>({a, a, a}, w);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(same.at(i), a.at(i), 1e-15);
  const auto m1 = ensemble_map<double>({a, b, c}, w);
  for (double k : {0.001, 3.0, 1e6}) {
    const std::vector<double> wk{k, 2 * k, 2 * k};
    const auto mk = ensemble_map<double>({a, b, c}, wk);
    for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(mk.at(i), m1.at(i), 1e-15);
  }
}

TEST(EnsembleMap, Rejections) {
  const std::vector<double> w{1, 1};
  EXPECT_THROW(ensemble_map<double>({filled({1, 2, 2}, 0.5), filled({1, 2, 3}, 0.5)}, w), std::invalid_argument);
  const std::vector<double> bad{1, 0};
  EXPECT_THROW(ensemble_map<double>({filled({1, 2, 2}, 0.5), filled({1, 2, 2}, 0.5)}, bad), std::invalid_argument);
}

TEST(PseudoGt, ThresholdAndDetach) {
  for (double v : test::values(pseudo_gt(filled({1, 3, 3}, 0.58), 0.5))) EXPECT_EQ(v, 1.0);
  for (double v : test::values(pseudo_gt(filled({1, 3, 3}, 0.49), 0.5))) EXPECT_EQ(v, 0.0);
  Rng rng(32);
  const auto m = test::random_tensor<double>(rng, {2, 5, 5}, 0, 1, true);
  const auto g = pseudo_gt(m, 0.5);
  EXPECT_FALSE(g.requires_grad());
  for (std::size_t i = 0; i < m.numel(); ++i) EXPECT_EQ(g.at(i), m.at(i) >= 0.5 ? 1.0 : 0.0);
  EXPECT_EQ(pseudo_gt(filled({1, 1, 1}, 0.5), 0.5).at(0), 1.0);
}

TEST(Msc, Values) {
  EXPECT_NEAR(msc_loss(filled({1, 4, 4}, 1.0), filled({1, 4, 4}, 0.5)).item(), kLn2, 1e-12);
  Rng rng(33);
  const auto src = test::random_tensor<double>(rng, {1, 4, 4}, 0, 1);
  const auto gt = pseudo_gt(src, 0.5);
  EXPECT_LT(msc_loss(gt, gt).item(), 1e-5);
  EXPECT_THROW(msc_loss(filled({1, 4, 4}, 1.0), filled({1, 4, 5}, 0.5)), std::invalid_argument);
}

TEST(Msc, GradientOnlyIntoSource) {
  auto src = test::param<double>({1, 1, 2}, {0.3, 0.7});
  auto gt = test::param<double>({1, 1, 2}, {1.0, 0.0});
  msc_loss(gt, src).backward();
  EXPECT_NE(src.grad()[0], 0.0);
  EXPECT_TRUE(gt.grad().empty() || (gt.grad()[0] == 0.0 && gt.grad()[1] == 0.0));
}

TEST(ConsistencyVolume, SpotValues) {
  const std::size_t c = 16;
  // e1 . e2 / sqrt(16) = 1 with e1 = (4,0,...), e2 = (1,0,...).
  Tensor<double> e1(Shape{1, 1, 2, 2}, std::vector<double>{4, 0, 0, 0});
  Tensor<double> e2(Shape{1, 1, 2, 2}, std::vector<double>{1, 0, 0, 0});
  const auto v = consistency_volume(e1, e2, c);
  ASSERT_EQ(v.shape(), (Shape{1, 1, 2, 1, 2}));
  EXPECT_NEAR(v.at(0), 1.0 - 1.0 / (1.0 + std::exp(-1.0)), 1e-12);
  EXPECT_NEAR(v.at(0), 0.268941, 1e-6);
  EXPECT_NEAR(v.at(1), 0.5, 1e-12);
  EXPECT_NEAR(v.at(2), 0.5, 1e-12);
  Tensor<double> big(Shape{1, 1, 1, 1}, std::vector<double>{1e4});
  const auto near0 = consistency_volume(big, big, c);
  EXPECT_LT(near0.at(0), 1e-5);
  EXPECT_GT(near0.at(0), 0.0);
}

TEST(ConsistencyVolume, MatchesDirectFormula) {
  Rng rng(34);
  const auto e1 = test::random_tensor<double>(rng, {2, 3, 2, 5}, -2, 2);
  const auto e2 = test::random_tensor<double>(rng, {2, 3, 2, 5}, -2, 2);
  const auto v = consistency_volume(e1, e2, 16);
  const std::size_t p = 6;
  for (std::size_t n = 0; n < 2; ++n) {
    for (std::size_t a = 0; a < p; ++a) {
      for (std::size_t b = 0; b < p; ++b) {
        double dot = 0;
        for (std::size_t k = 0; k < 5; ++k) dot += e1.at((n * p + a) * 5 + k) * e2.at((n * p + b) * 5 + k);
        EXPECT_NEAR(v.at((n * p + a) * p + b), 1.0 - 1.0 / (1.0 + std::exp(-dot / 4.0)), 1e-12);
      }
    }
  }
  EXPECT_THROW(consistency_volume(e1, test::random_tensor<double>(rng, {2, 3, 2, 4}), 16), std::invalid_argument);
}

TEST(TargetVolume, WorkedExample) {
  const Tensor<double> m(Shape{1, 2, 2}, std::vector<double>{0, 1, 0, 0});
  const auto v = target_volume(m, 2, 2);
  ASSERT_EQ(v.shape(), (Shape{1, 2, 2, 2, 2}));
  EXPECT_EQ(v.at(0 * 4 + 1), 1.0);  // (0,0) vs (0,1)
  EXPECT_EQ(v.at(0 * 4 + 2), 0.0);  // (0,0) vs (1,0)
  EXPECT_FALSE(v.requires_grad());
}

TEST(TargetVolume, NearestDownsample) {
  // 4x4 -> 2x2 samples source pixels 1 and 3 along each axis.
  std::vector<double> src(16, 0.0);
  src[1 * 4 + 3] = 1.0;
  const auto d = downsample_nearest(Tensor<double>(Shape{1, 4, 4}, src), 2, 2);
  EXPECT_EQ(d.at(0), 0.0);
  EXPECT_EQ(d.at(1), 1.0);
  EXPECT_EQ(d.at(2), 0.0);
  EXPECT_EQ(d.at(3), 0.0);
  EXPECT_THROW(downsample_nearest(Tensor<double>(Shape{1, 4, 4}), 8, 8), std::invalid_argument);
}

TEST(TargetVolume, SymmetricZeroDiagonal) {
  Rng rng(35);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> v(64);
    for (auto& x : v) x = rng.bernoulli(0.4) ? 1.0 : 0.0;
    const auto t = target_volume(Tensor<double>(Shape{1, 8, 8}, v), 4, 4);
    for (std::size_t a = 0; a < 16; ++a) {
      EXPECT_EQ(t.at(a * 16 + a), 0.0);
      for (std::size_t b = 0; b < 16; ++b) EXPECT_EQ(t.at(a * 16 + b), t.at(b * 16 + a));
    }
  }
  for (double c : {0.0, 1.0}) {
    for (double x : test::values(target_volume(filled({1, 8, 8}, c), 4, 4))) EXPECT_EQ(x, 0.0);
  }
}

TEST(Ipc, Values) {
  EXPECT_NEAR(ipc_loss(filled({1, 2, 2, 2, 2}, 0.0), filled({1, 2, 2, 2, 2}, 0.5)).item(), kLn2, 1e-12);
  Rng rng(36);
  std::vector<double> bits(16);
  for (auto& b : bits) b = rng.bernoulli(0.5);
  const auto tgt = target_volume(Tensor<double>(Shape{1, 4, 4}, bits), 2, 2);
  EXPECT_LT(ipc_loss(tgt, tgt).item(), 1e-5);
  // Consistent patch relabelling leaves the loss unchanged.
  const auto vol = test::random_tensor<double>(rng, {1, 2, 2, 2, 2}, 0.05, 0.95);
  const std::array<std::size_t, 4> perm{2, 0, 3, 1};
  std::vector<double> pv(16), pt(16);
  for (std::size_t a = 0; a < 4; ++a) {
    for (std::size_t b = 0; b < 4; ++b) {
      pv[perm[a] * 4 + perm[b]] = vol.at(a * 4 + b);
      pt[perm[a] * 4 + perm[b]] = tgt.at(a * 4 + b);
    }
  }
  EXPECT_NEAR(ipc_loss(Tensor<double>(tgt.shape(), pt), Tensor<double>(vol.shape(), pv)).item(),
              ipc_loss(tgt, vol).item(), 1e-14);
}

TEST(Warmup, Values) {
  EXPECT_DOUBLE_EQ(warmup(30, 30), 1.0);
  EXPECT_NEAR(warmup(0, 30), std::exp(-5.0), 1e-15);
  EXPECT_NEAR(warmup(0, 30), 0.006738, 1e-6);
  EXPECT_NEAR(warmup(15, 30), 0.286505, 1e-6);
  double prev = -1;
  for (int i = 0; i <= 1000; ++i) {
    const double w = warmup(30.0 * i / 1000.0, 30);
    EXPECT_GT(w, prev);
    prev = w;
  }
}

TEST(TotalLoss, PlugIn) {
  auto one = [] { return Tensor<double>::scalar(1.0); };
  std::vector<StreamLossTerms<double>> terms(3);
  for (auto& s : terms) {
    s.stream = "s";
    s.acls = one();
    s.msc = one();
    s.ipc = one();
  }
  EXPECT_NEAR(total_loss(terms, 30, 30, 0.1, 0.1).item(), 3 * 1.2, 1e-12);
  EXPECT_NEAR(total_loss(terms, 0, 30, 0.0, 0.0).item(), 3.0, 1e-15);
  EXPECT_NEAR(total_loss(terms, 0, 30, 0.1, 0.1).item(), 3 * (1 + 0.2 * std::exp(-5.0)), 1e-12);
  terms[1].ipc = Tensor<double>::scalar(std::nan(""));
  try {
    total_loss(terms, 30, 30, 0.1, 0.1);
    FAIL() << "expected NonFiniteLoss";
  } catch (const NonFiniteLoss& e) {
    EXPECT_EQ(e.term(), "s.ipc");
  }
}

TEST(IpcTarget, SelfVersusEnsembleWiring) {
  const auto own = filled({1, 2, 2}, 0.9);
  const auto ens = filled({1, 2, 2}, 0.0);
  for (double v : test::values(select_ipc_target(IpcMode::kSelf, own, ens, 0.5))) EXPECT_EQ(v, 1.0);
  for (double v : test::values(select_ipc_target(IpcMode::kEnsemble, own, ens, 0.5))) EXPECT_EQ(v, 0.0);
}

TEST(EnsembleConfig, Validation) {
  EnsembleConfig c;
  EXPECT_NO_THROW(c.validate());
  c.theta = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.w_srm = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.total_epochs = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_EQ(parse_ipc_mode("self"), IpcMode::kSelf);
  EXPECT_THROW(parse_ipc_mode("both"), std::invalid_argument);
}

namespace {

DetectorSpec tiny_spec() {
  DetectorSpec spec;
  spec.arch.image_size = 16;
  spec.arch.channels = {8, 8, 8, 8};
  spec.arch.norm_group = 4;
  spec.arch.embed_hidden = 6;
  spec.arch.embed_dim = 4;
  spec.arch.bayar_kernel = 3;
  spec.ensemble.total_epochs = 4;
  return spec;
}

}  // namespace

TEST(Detector, InferWeightedScores) {
  Detector<double> det(tiny_spec(), 3);
  Rng rng(37);
  const auto img = test::random_tensor<double>(rng, {2, 3, 16, 16}, 0, 255);
  const auto inf = det.infer(img);
  ASSERT_EQ(inf.stream_scores.size(), 3u);
  for (std::size_t k = 0; k < 2; ++k) {
    const double want = (inf.stream_scores[0][k] + 2 * inf.stream_scores[1][k] + 2 * inf.stream_scores[2][k]) / 5;
    EXPECT_NEAR(inf.scores[k], want, 1e-12);
  }
  for (double v : test::values(inf.mask)) EXPECT_TRUE(v == 0.0 || v == 1.0);
  ASSERT_EQ(inf.mask.shape(), (Shape{2, 16, 16}));
}

TEST(Detector, LossTermsFollowConfiguration) {
  Rng rng(38);
  const auto img = test::random_tensor<double>(rng, {2, 3, 16, 16}, 0, 255);
  const std::vector<double> labels{0, 1};
  auto spec = tiny_spec();
  {
    Detector<double> det(spec, 4);
    const auto r = det.training_loss(img, labels, 0);
    ASSERT_EQ(r.terms.size(), 3u);
    for (const auto& t : r.terms) {
      EXPECT_TRUE(t.msc.defined());
      EXPECT_TRUE(t.ipc.defined());
      EXPECT_NEAR(t.acls.item(), std::log(2.0), 0.3);
    }
  }
  spec.ensemble.lambda_ipc = 0;
  spec.ensemble.lambda_msc = 0;
  {
    Detector<double> det(spec, 4);
    const auto r = det.training_loss(img, labels, 0);
    double sum = 0;
    for (const auto& t : r.terms) {
      EXPECT_FALSE(t.msc.defined());
      EXPECT_FALSE(t.ipc.defined());
      sum += t.acls.item();
    }
    EXPECT_NEAR(r.total.item(), sum, 1e-12);
    for (const auto& [name, p] : det.named_trainable_parameters()) EXPECT_EQ(name.find("/phi"), std::string::npos);
  }
  spec = tiny_spec();
  spec.ensemble.fusion = FusionMode::kEarly;
  {
    Detector<double> det(spec, 4);
    EXPECT_EQ(det.streams().size(), 1u);
    EXPECT_FALSE(det.msc_enabled());
    EXPECT_FALSE(det.ipc_enabled());
  }
  EXPECT_THROW(Detector<double>(tiny_spec(), 1).training_loss(img, std::vector<double>{1}, 0), std::invalid_argument);
}

TEST(Detector, EnsembleIpcUsesEnsembleTarget) {
  // With identical configuration the two modes differ only in the IPC teacher.
  Rng rng(39);
  const auto img = test::random_tensor<double>(rng, {2, 3, 16, 16}, 0, 255);
  const std::vector<double> labels{0, 1};
  auto spec = tiny_spec();
  Detector<double> ens(spec, 5);
  spec.ensemble.ipc_mode = IpcMode::kSelf;
  Detector<double> self(spec, 5);
  const auto re = ens.training_loss(img, labels, 4);
  const auto rs = self.training_loss(img, labels, 4);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(re.terms[i].acls.item(), rs.terms[i].acls.item());
    EXPECT_EQ(re.terms[i].msc.item(), rs.terms[i].msc.item());
    // Recompute both teachers from the stream maps.
    auto& s = ens.streams()[i];
    const auto out = s.forward(img, true);
    std::vector<Tensor<double>> maps;
    for (auto& st : ens.streams()) maps.push_back(st.forward(img, false).map);
    const auto eb = pseudo_gt(ensemble_map(maps, ens.weights()), 0.5);
    const auto vol = consistency_volume(out.embed1, out.embed2, s.tap_channels());
    const std::size_t h = out.tap.dim(1), w = out.tap.dim(2);
    EXPECT_NEAR(re.terms[i].ipc.item(), ipc_loss(target_volume(eb, h, w), vol).item(), 1e-12);
    EXPECT_NEAR(rs.terms[i].ipc.item(), ipc_loss(target_volume(binarize(out.map, 0.5), h, w), vol).item(), 1e-12);
  }
}

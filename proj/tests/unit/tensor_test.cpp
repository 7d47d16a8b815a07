#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"
#include "wscl/gradcheck.hpp"
#include "wscl/ops.hpp"
#include "wscl/optim.hpp"

using namespace wscl;
using test::param;
using test::random_tensor;

TEST(Tensor, ShapeMustMatchData) {
  EXPECT_THROW(Tensor<float>(Shape{2, 3}, std::vector<float>(5)), std::invalid_argument);
  Tensor<float> t(Shape{2, 3});
  EXPECT_EQ(t.numel(), 6u);
}

TEST(Tensor, OpResultsAreImmutable) {
  auto a = param<double>({2}, {1, 2});
  auto b = ops::scale(a, 2.0);
  EXPECT_THROW(b.mutable_data(), std::logic_error);
}

TEST(Conv2d, IdentityKernel) {
  Rng rng(1);
  auto x = random_tensor<double>(rng, {1, 1, 3, 3});
  const Tensor<double> k(Shape{1, 1, 1, 1}, std::vector<double>{1.0});
  const auto y = ops::conv2d(x, k, Tensor<double>(), 1, 0);
  ASSERT_EQ(y.shape(), x.shape());
  for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(y.at(i), x.at(i));
}

TEST(Conv2d, HandSum) {
  const Tensor<double> x(Shape{1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  const Tensor<double> k(Shape{1, 1, 2, 2}, 1.0);
  const auto y = ops::conv2d(x, k, Tensor<double>(), 1, 0);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_DOUBLE_EQ(y.item(), 10.0);
}

TEST(Conv2d, OutputSizeFormula) {
  const Tensor<float> x(Shape{2, 3, 9, 7});
  const Tensor<float> k(Shape{4, 3, 3, 3});
  const auto y = ops::conv2d(x, k, Tensor<float>(), 2, 1);
  EXPECT_EQ(y.shape(), (Shape{2, 4, (9 + 2 - 3) / 2 + 1, (7 + 2 - 3) / 2 + 1}));
}

TEST(Conv2d, ChannelMismatchNamesDimension) {
  const Tensor<float> x(Shape{1, 2, 5, 5});
  const Tensor<float> k(Shape{3, 4, 3, 3});
  try {
    ops::conv2d(x, k, Tensor<float>(), 1, 0);
    FAIL() << "expected rejection";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("channel"), std::string::npos) << e.what();
  }
}

TEST(Conv2d, GradientMatchesFiniteDifferencesAt32Bit) {
  Rng rng(2);
  auto x = random_tensor<float>(rng, {1, 2, 5, 5}, -1, 1, true);
  auto k = random_tensor<float>(rng, {3, 2, 3, 3}, -1, 1, true);
  std::function<Tensor<float>()> loss = [&] { return ops::mean(ops::conv2d(x, k, Tensor<float>(), 1, 1)); };
  EXPECT_LT(grad_check_params<float>(loss, {x, k}, 1e-2f, 0, rng), 1e-3);
}

TEST(Elementwise, SigmoidValues) {
  const Tensor<double> z(Shape{2}, std::vector<double>{0.0, 1.0});
  const auto s = ops::sigmoid(z);
  EXPECT_DOUBLE_EQ(s.at(0), 0.5);
  EXPECT_NEAR(s.at(1), 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
}

TEST(Elementwise, SigmoidIsClamped) {
  const Tensor<double> z(Shape{2}, std::vector<double>{-100.0, 100.0});
  const auto s = ops::sigmoid(z);
  EXPECT_DOUBLE_EQ(s.at(0), kProbEps);
  EXPECT_DOUBLE_EQ(s.at(1), 1.0 - kProbEps);
}

TEST(Elementwise, ReluNegativeHasZeroGradient) {
  auto x = param<double>({1}, {-3.0});
  const auto y = ops::relu(x);
  EXPECT_EQ(y.item(), 0.0);
  ops::sum(ops::add(y, x)).backward();  // keep x reachable
  EXPECT_EQ(x.grad()[0], 1.0);           // only the identity branch contributes
}

TEST(Elementwise, BroadcastAdd) {
  const Tensor<double> a(Shape{2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  const Tensor<double> b(Shape{3}, std::vector<double>{10, 20, 30});
  const auto c = ops::add(a, b);
  const std::vector<double> want{11, 22, 33, 14, 25, 36};
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(c.at(i), want[i]);
}

TEST(Elementwise, NonBroadcastableRejected) {
  const Tensor<double> a(Shape{2, 3});
  const Tensor<double> b(Shape{2});
  EXPECT_THROW(ops::add(a, b), std::invalid_argument);
  EXPECT_THROW(ops::mul(a, b), std::invalid_argument);
}

TEST(Bce, ReferenceValues) {
  auto bce1 = [](double y, double p) {
    return ops::bce(Tensor<double>(Shape{1}, std::vector<double>{y}), Tensor<double>(Shape{1}, std::vector<double>{p}))
        .item();
  };
  EXPECT_NEAR(bce1(1, 1 - kProbEps), 0.0, 1e-6);
  EXPECT_NEAR(bce1(1, 0.5), std::log(2.0), 1e-12);
  EXPECT_NEAR(bce1(0, 0.9), -std::log(0.1), 1e-12);
}

TEST(Bce, MeanReducedAndNonNegative) {
  Rng rng(3);
  const auto p = random_tensor<double>(rng, {50}, 0, 1);
  std::vector<double> y(50);
  for (auto& v : y) v = rng.bernoulli(0.5) ? 1 : 0;
  const Tensor<double> target(Shape{50}, y);
  double oracle = 0;
  for (std::size_t i = 0; i < 50; ++i) {
    const double q = std::clamp(p.at(i), kProbEps, 1 - kProbEps);
    oracle += -(y[i] * std::log(q) + (1 - y[i]) * std::log(1 - q));
  }
  const double loss = ops::bce(target, p).item();
  EXPECT_NEAR(loss, oracle / 50, 1e-12);
  EXPECT_GE(loss, 0.0);
}

TEST(Bce, NaNRejected) {
  const Tensor<double> y(Shape{1}, std::vector<double>{1});
  const Tensor<double> p(Shape{1}, std::vector<double>{std::nan("")});
  EXPECT_THROW(ops::bce(y, p), std::domain_error);
}

TEST(Backward, SquareGradient) {
  auto x = param<double>({}, {3.0});
  ops::mul(x, x).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
}

TEST(Backward, BceThroughSigmoidAtZero) {
  auto z = param<double>({1}, {0.0});
  ops::bce(Tensor<double>(Shape{1}, 1.0), ops::sigmoid(z)).backward();
  EXPECT_NEAR(z.grad()[0], -0.5, 1e-12);
}

TEST(Backward, FanOutAccumulates) {
  auto x = param<double>({}, {1.5});
  ops::add(x, x).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 2.0);
}

TEST(Backward, NonScalarRejected) {
  auto x = param<double>({2}, {1, 2});
  EXPECT_THROW(ops::scale(x, 2.0).backward(), std::invalid_argument);
}

TEST(Backward, SiblingOrderDoesNotMatter) {
  Rng rng(4);
  auto x = random_tensor<double>(rng, {4}, -1, 1, true);
  auto y = x.detach();
  y.set_requires_grad(true);
  const auto a = ops::sum(ops::mul(x, x)), b = ops::sum(ops::sigmoid(x));
  ops::add(a, b).backward();
  const auto c = ops::sum(ops::sigmoid(y)), d = ops::sum(ops::mul(y, y));
  ops::add(c, d).backward();
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(x.grad()[i], y.grad()[i], 1e-15);
}

TEST(Backward, NoGradGuardRecordsNothing) {
  auto x = param<double>({2}, {1, 2});
  NoGradGuard guard;
  const auto y = ops::sum(ops::mul(x, x));
  EXPECT_FALSE(y.requires_grad());
}

TEST(AdamW, ZeroGradZeroDecayIsIdentity) {
  auto w = param<double>({3}, {0.5, -1.0, 2.0});
  AdamWConfig cfg;
  cfg.weight_decay = 0;
  AdamW<double> opt({w}, cfg);
  w.mutable_grad();  // zeros
  opt.step();
  EXPECT_EQ(w.at(0), 0.5);
  EXPECT_EQ(w.at(1), -1.0);
  EXPECT_EQ(w.at(2), 2.0);
}

TEST(AdamW, FirstStepMovesByLearningRate) {
  auto w = param<double>({1}, {1.0});
  AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0;
  AdamW<double> opt({w}, cfg);
  w.mutable_grad()[0] = 1.0;
  opt.step();
  // m_hat = 1, v_hat = 1: w -= lr * 1 / (1 + eps)
  EXPECT_NEAR(w.at(0), 1.0 - 0.1 / (1.0 + 1e-8), 1e-15);
  EXPECT_EQ(opt.step_count(), 1);
  EXPECT_FALSE(w.has_grad());
}

TEST(AdamW, DecoupledDecay) {
  auto w = param<double>({1}, {1.0});
  AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.01;
  AdamW<double> opt({w}, cfg);
  w.mutable_grad();
  opt.step();
  EXPECT_NEAR(w.at(0), 0.999, 1e-15);
}

TEST(AdamW, MissingGradRejected) {
  auto w = param<double>({1}, {1.0});
  AdamW<double> opt({w}, AdamWConfig{});
  EXPECT_THROW(opt.step(), std::logic_error);
}

TEST(GradCheck, SumHasExactGradient) {
  Rng rng(5);
  const auto x = random_tensor<double>(rng, {3, 4});
  std::function<Tensor<double>(const Tensor<double>&)> f = [](const Tensor<double>& v) { return ops::sum(v); };
  EXPECT_LT(grad_check(f, x, 1e-6), 1e-9);
}

TEST(GradCheck, DenseLayerBceAt32Bit) {
  Rng rng(6);
  const auto w = random_tensor<float>(rng, {4, 1});
  const auto x = random_tensor<float>(rng, {3, 4});
  std::function<Tensor<float>(const Tensor<float>&)> f = [&](const Tensor<float>& wv) {
    return ops::bce(Tensor<float>(Shape{3, 1}, 1.0f), ops::sigmoid(ops::matmul(x, wv)));
  };
  EXPECT_LT(grad_check(f, w, 1e-2f), 1e-3);
}

TEST(GradCheck, MeanConvAt32Bit) {
  Rng rng(7);
  const auto x = random_tensor<float>(rng, {1, 2, 5, 5});
  const auto k = random_tensor<float>(rng, {2, 2, 3, 3});
  std::function<Tensor<float>(const Tensor<float>&)> f = [&](const Tensor<float>& kv) {
    return ops::mean(ops::conv2d(x, kv, Tensor<float>(), 1, 0));
  };
  EXPECT_LT(grad_check(f, k, 1e-2f), 1e-3);
}

// An op whose backward is deliberately wrong must be caught by the checker.
TEST(GradCheck, CorruptedOpFails) {
  Rng rng(8);
  const auto x = random_tensor<double>(rng, {5});
  std::function<Tensor<double>(const Tensor<double>&)> f = [](const Tensor<double>& v) {
    std::vector<double> sq(v.numel());
    for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = v.at(i) * v.at(i);
    auto bad = Tensor<double>::from_op(
        v.shape(), std::move(sq), {v},
        [](Node<double>& self) {
          auto& g = self.parents[0]->ensure_grad();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += 3.0 * self.parents[0]->data[i] * self.grad[i];
        },
        "bad_square");
    return ops::sum(bad);
  };
  EXPECT_GT(grad_check(f, x, 1e-6), 1e-2);
}

TEST(Ops, UpsampleBilinearAlignCornersFalse) {
  const Tensor<double> x(Shape{1, 1, 1, 2}, std::vector<double>{0.0, 1.0});
  const auto y = ops::upsample_bilinear(x, 1, 4);
  // source coordinates (i + 0.5) / 2 - 0.5 = -0.25, 0.25, 0.75, 1.25 (edge-clamped)
  EXPECT_DOUBLE_EQ(y.at(0), 0.0);
  EXPECT_DOUBLE_EQ(y.at(1), 0.25);
  EXPECT_DOUBLE_EQ(y.at(2), 0.75);
  EXPECT_DOUBLE_EQ(y.at(3), 1.0);
}

TEST(Ops, GroupNormNormalizesEachGroup) {
  Rng rng(9);
  const auto x = random_tensor<double>(rng, {2, 4, 3, 3}, -5, 5);
  const auto y = ops::group_norm(x, 2, Tensor<double>(Shape{4}, 1.0), Tensor<double>(Shape{4}, 0.0));
  for (std::size_t n = 0; n < 2; ++n) {
    for (std::size_t g = 0; g < 2; ++g) {
      double s = 0, s2 = 0;
      for (std::size_t i = 0; i < 18; ++i) {
        const double v = y.at(n * 36 + g * 18 + i);
        s += v;
        s2 += v * v;
      }
      EXPECT_NEAR(s / 18, 0.0, 1e-12);
      EXPECT_NEAR(s2 / 18, 1.0, 1e-4);  // eps in the denominator
    }
  }
}

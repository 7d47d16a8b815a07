#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "test_util.hpp"
#include "wscl/pooling.hpp"
#include "wscl/ops.hpp"

using namespace wscl;

namespace {

// Exhaustive candidate evaluation with sums of squared deviations.
double otsu_oracle(const std::vector<double>& v) {
  std::vector<double> cands = v;
  std::sort(cands.begin(), cands.end());
  cands.erase(std::unique(cands.begin(), cands.end()), cands.end());
  double best = std::numeric_limits<double>::infinity(), best_w = cands.front();
  for (double w : cands) {
    double sl = 0, sh = 0;
    std::size_t nl = 0, nh = 0;
    for (double x : v) (x < w ? (sl += x, ++nl) : (sh += x, ++nh));
    const double ml = nl ? sl / nl : 0, mh = nh ? sh / nh : 0;
    double obj = 0;
    for (double x : v) obj += x < w ? (x - ml) * (x - ml) : (x - mh) * (x - mh);
    if (std::isinf(best) || obj < best - 1e-12 * (1 + best)) {
      best = obj;
      best_w = w;
    }
  }
  return best_w;
}

Tensor<double> map_of(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor<double>(Shape{1, n}, std::move(v));
}

}  // namespace

TEST(Otsu, WorkedExample) {
  const std::vector<double> v{0.1, 0.2, 0.8, 0.9};
  EXPECT_DOUBLE_EQ(otsu_threshold<double>(v), 0.8);
  EXPECT_NEAR(otsu_split(v).objective, 0.01, 1e-12);
  EXPECT_NEAR(adaptive_pool(map_of(v)).item(), 0.85, 1e-12);
}

TEST(Otsu, ConstantValues) {
  const std::vector<double> v{0.7, 0.7, 0.7};
  EXPECT_DOUBLE_EQ(otsu_threshold<double>(v), 0.7);
  const auto mask = high_group_mask(map_of(v));
  EXPECT_EQ(std::count(mask.begin(), mask.end(), 1), 3);
}

TEST(Otsu, EmptyRejected) {
  EXPECT_THROW(otsu_threshold<double>(std::vector<double>{}), std::invalid_argument);
}

TEST(Otsu, MatchesBruteForce) {
  Rng rng(21);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = static_cast<std::size_t>(rng.uniform_int(1, 64));
    std::vector<double> v(n);
    const int mode = trial % 3;
    for (auto& x : v) {
      x = mode == 0 ? rng.uniform(0.01, 0.99) : mode == 1 ? (rng.bernoulli(0.5) ? 0.3 : 0.6) : 0.42;
    }
    EXPECT_DOUBLE_EQ(otsu_threshold<double>(v), otsu_oracle(v)) << "trial " << trial;
  }
}

TEST(AdaptivePool, Examples) {
  EXPECT_DOUBLE_EQ(adaptive_pool(map_of({0.8, 0.8, 0.8})).item(), 0.8);
  EXPECT_DOUBLE_EQ(adaptive_pool(map_of({0.3})).item(), 0.3);
}

TEST(Pool, Kinds) {
  const auto m = map_of({0.1, 0.9});
  EXPECT_DOUBLE_EQ(pool(m, PoolKind::kMax).item(), 0.9);
  EXPECT_DOUBLE_EQ(pool(m, PoolKind::kAvg).item(), 0.5);
  EXPECT_DOUBLE_EQ(pool(m, PoolKind::kAdaptive).item(), 0.9);
}

TEST(Pool, Properties) {
  Rng rng(22);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> v(static_cast<std::size_t>(rng.uniform_int(2, 40)));
    for (auto& x : v) x = rng.uniform(0.01, 0.99);
    const double lo = *std::min_element(v.begin(), v.end()), hi = *std::max_element(v.begin(), v.end());
    double mean = 0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    const double a = adaptive_pool(map_of(v)).item();
    EXPECT_GE(a, lo);
    EXPECT_LE(a, hi);
    EXPECT_GE(a, mean - 1e-12);
    auto perm = v;
    rng.shuffle(perm.begin(), perm.end());
    EXPECT_DOUBLE_EQ(adaptive_pool(map_of(perm)).item(), a);
  }
  const auto flat = map_of({0.4, 0.4, 0.4, 0.4});
  for (auto k : {PoolKind::kMax, PoolKind::kAvg, PoolKind::kAdaptive}) EXPECT_DOUBLE_EQ(pool(flat, k).item(), 0.4);
}

TEST(Pool, GradientSupport) {
  std::vector<double> v{0.1, 0.15, 0.2, 0.7, 0.8, 0.9};
  auto m = test::param<double>({1, 6}, v);
  ops::bce(Tensor<double>(Shape{1}, 1.0), pool(m, PoolKind::kAdaptive)).backward();
  EXPECT_EQ(std::count_if(m.grad().begin(), m.grad().end(), [](double g) { return g != 0; }), 3);
  auto m2 = test::param<double>({1, 6}, v);
  ops::bce(Tensor<double>(Shape{1}, 1.0), pool(m2, PoolKind::kMax)).backward();
  EXPECT_EQ(std::count_if(m2.grad().begin(), m2.grad().end(), [](double g) { return g != 0; }), 1);
}

TEST(Pool, MapsAreRowWise) {
  const Tensor<double> m(Shape{2, 2, 2}, std::vector<double>{0.1, 0.2, 0.8, 0.9, 0.5, 0.5, 0.5, 0.5});
  const auto s = adaptive_pool(m);
  ASSERT_EQ(s.shape(), (Shape{2}));
  EXPECT_NEAR(s.at(0), 0.85, 1e-12);
  EXPECT_DOUBLE_EQ(s.at(1), 0.5);
}

TEST(PoolKind, ParseRoundTrip) {
  for (auto k : {PoolKind::kMax, PoolKind::kAvg, PoolKind::kAdaptive}) EXPECT_EQ(parse_pool_kind(to_string(k)), k);
  EXPECT_THROW(parse_pool_kind("gem"), std::invalid_argument);
}

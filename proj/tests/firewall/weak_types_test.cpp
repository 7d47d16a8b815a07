#include <gtest/gtest.h>

#include "wscl/data/record.hpp"
#include "wscl/data/weak_loader.hpp"
#include "wscl/train/trainer.hpp"

using namespace wscl;

template <typename R>
concept HasMask = requires(R r) { r.mask; } || requires(R r) { r.mask_path; } || requires(R r) { r.masks; };

template <typename R>
concept HasKind = requires(R r) { r.kind; } || requires(R r) { r.kinds; };

static_assert(!HasMask<WeakRecord> && !HasKind<WeakRecord>);
static_assert(!HasMask<WeakBatch<float>> && !HasKind<WeakBatch<float>>);
static_assert(!HasMask<WeakBatch<double>> && !HasKind<WeakBatch<double>>);

TEST(Firewall, WeakTypesCarryNoMasks) {
  const WeakRecord r{"x", "img.png", 1};
  EXPECT_EQ(r.label, 1);
}

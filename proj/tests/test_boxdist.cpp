#include <gtest/gtest.h>

#include <cmath>

#include "kdlab/boxdist.hpp"
#include "support.hpp"

using namespace kdlab::boxdist;
using kdlab::Rng;

namespace {
const BinLattice k04(0.0, 4.0, 5);
}

TEST(Lattice, Values) {
  const BinLattice l(1.0, 3.0, 5);
  EXPECT_EQ(l.values(), (std::vector<double>{1.0, 1.5, 2.0, 2.5, 3.0}));
  EXPECT_EQ(BinLattice::unit(8).e_max(), 7.0);
  EXPECT_THROW(BinLattice(0, 1, 1), std::invalid_argument);
  EXPECT_THROW(BinLattice(1, 1, 4), std::invalid_argument);
}

TEST(Decode, Examples) {
  EXPECT_EQ(decode_expectation({k04, {0, 0, 1, 0, 0}}), 2.0);
  EXPECT_DOUBLE_EQ(decode_expectation({k04, {0.2, 0.2, 0.2, 0.2, 0.2}}), 2.0);
  EXPECT_EQ(decode_expectation({k04, {0.5, 0, 0, 0, 0.5}}), 2.0);
}

TEST(Decode, BoundedForRandomDistributions) {
  Rng rng(1);
  const BinLattice l(-3.0, 5.0, 8);
  for (int i = 0; i < 1000; ++i) {
    const auto logits = testsupport::random_tensor({8}, rng, -20, 20);
    const EdgeDistribution d = logits_to_distribution(logits.data(), l, rng.uniform(0.1, 50));
    const double e = decode_expectation(d);
    EXPECT_GE(e, l.e_min());
    EXPECT_LE(e, l.e_max());
  }
}

TEST(Validate, RejectsMalformed) {
  EXPECT_THROW(validate({k04, {1, 0, 0}}), std::invalid_argument);
  EXPECT_THROW(validate({k04, {0.5, 0.6, 0, 0, -0.1}}), std::invalid_argument);
  EXPECT_THROW(validate({k04, {0.5, 0.4, 0, 0, 0}}), std::invalid_argument);
  EXPECT_NO_THROW(validate({k04, {0.5, 0, 0, 0, 0.5}}));
}

TEST(LogitsToDistribution, Examples) {
  const std::vector<double> flat(5, 1.5);
  for (double p : logits_to_distribution(flat, k04, 3.0).probs) EXPECT_NEAR(p, 0.2, 1e-15);
  const std::vector<double> spike{0, 0, 50, 0, 0};
  EXPECT_GE(logits_to_distribution(spike, k04, 1.0).probs[2], 1.0 - 1e-20);
  EXPECT_THROW(logits_to_distribution(spike, k04, 0.0), std::invalid_argument);
  EXPECT_THROW(logits_to_distribution(std::vector<double>{1, 2}, k04, 1.0), std::invalid_argument);
}

TEST(LogitsToDistribution, HigherTemperatureIsFlatter) {
  Rng rng(2);
  for (int i = 0; i < 20; ++i) {
    const auto logits = testsupport::random_tensor({8}, rng, -5, 5);
    EXPECT_LT(sharpness(logits_to_distribution(logits.data(), BinLattice::unit(8), 5.0)),
              sharpness(logits_to_distribution(logits.data(), BinLattice::unit(8), 1.0)));
  }
}

TEST(LogitsToDistribution, SharpnessNonIncreasingInTemperature) {
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const auto logits = testsupport::random_tensor({8}, rng, -10, 10);
    double prev = 2.0;
    for (double t = 0.5; t <= 50.0; t += 0.5) {
      const double s = sharpness(logits_to_distribution(logits.data(), BinLattice::unit(8), t));
      EXPECT_LE(s, prev + 1e-15);
      prev = s;
    }
  }
}

TEST(Encode, Examples) {
  EXPECT_EQ(encode_target(2.0, k04).dist.probs, (std::vector<double>{0, 0, 1, 0, 0}));
  const EncodedTarget t = encode_target(2.3, k04);
  EXPECT_FALSE(t.clamped);
  EXPECT_NEAR(t.dist.probs[2], 0.7, 1e-15);
  EXPECT_NEAR(t.dist.probs[3], 0.3, 1e-15);
  EXPECT_EQ(t.dist.probs[0] + t.dist.probs[1] + t.dist.probs[4], 0.0);
  EXPECT_NEAR(decode_expectation(t.dist), 2.3, 1e-15);
}

TEST(Encode, OutOfRangeIsClampedAndFlagged) {
  const EncodedTarget hi = encode_target(9.5, k04);
  EXPECT_TRUE(hi.clamped);
  EXPECT_EQ(decode_expectation(hi.dist), 4.0);
  const EncodedTarget lo = encode_target(-0.1, k04);
  EXPECT_TRUE(lo.clamped);
  EXPECT_EQ(decode_expectation(lo.dist), 0.0);
}

TEST(Encode, RoundTrip) {
  Rng rng(4);
  const BinLattice l(-2.0, 9.0, 8);
  for (int i = 0; i < 1000; ++i) {
    const double e = rng.uniform(l.e_min(), l.e_max());
    const EncodedTarget t = encode_target(e, l);
    EXPECT_NO_THROW(validate(t.dist));
    EXPECT_LE(std::fabs(decode_expectation(t.dist) - e), 1e-12);
  }
}

TEST(Sharpness, Examples) {
  EXPECT_EQ(sharpness({k04, {0, 0, 1, 0, 0}}), 1.0);
  EXPECT_DOUBLE_EQ(sharpness({BinLattice::unit(8), std::vector<double>(8, 0.125)}), 0.125);
  EXPECT_EQ(sharpness({k04, {0.5, 0.5, 0, 0, 0}}), 0.5);
}

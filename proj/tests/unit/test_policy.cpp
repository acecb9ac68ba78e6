#include <gtest/gtest.h>

#include <boost/multiprecision/cpp_dec_float.hpp>
#include <random>

#include "bspft/policy.hpp"

using namespace bspft;
using Big = boost::multiprecision::cpp_dec_float_50;

namespace {

double oracle(double mu, double d, double r, double c) {
  Big v = sqrt(Big(2) * (Big(mu) - (Big(d) + Big(r))) * Big(c));
  return v.convert_to<double>();
}

constexpr std::int64_t kSec = 1'000'000'000;

}  // namespace

TEST(YoungDaly, ReferenceCase) {
  const double got = young_daly_interval({86400, 30, 30, 30});
  const double want = oracle(86400, 30, 30, 30);
  EXPECT_NEAR(got / want, 1.0, 1e-12);
  // Independently evaluated to 20 digits ahead of time.
  EXPECT_NEAR(got, 2276.04920860687895629, 2276.0 * 1e-12);
}

TEST(YoungDaly, Boundaries) {
  EXPECT_EQ(young_daly_interval({86400, 30, 30, 0}), 0.0);
  EXPECT_EQ(young_daly_interval({60, 30, 30, 30}), 0.0);
  try {
    young_daly_interval({59.9, 30, 30, 30});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MtbfTooSmall);
  }
}

TEST(YoungDaly, AgreesWithHighPrecisionOnRandomModels) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    double d = 100 * u(rng), r = 100 * u(rng), c = 1000 * u(rng);
    double mu = d + r + 1e6 * u(rng);
    double want = oracle(mu, d, r, c);
    ASSERT_NEAR(young_daly_interval({mu, d, r, c}), want, want * 1e-12 + 1e-300);
  }
}

TEST(YoungDaly, MonotoneAndSquareRootScaling) {
  const CostModel base{10000, 10, 20, 40};
  const double t = young_daly_interval(base);
  EXPECT_LT(young_daly_interval({base.mu_s, 10, 20, 30}), t);
  EXPECT_GT(young_daly_interval({20000, 10, 20, 40}), t);
  EXPECT_LT(young_daly_interval({base.mu_s, 50, 20, 40}), t);
  EXPECT_NEAR(young_daly_interval({base.mu_s, 10, 20, 160}), 2 * t, 1e-9);
}

TEST(Strategy, EveryK) {
  for (std::uint64_t s = 1; s <= 20; ++s) EXPECT_TRUE(should_checkpoint(EveryKSupersteps{1}, s, 0, 0));
  EXPECT_FALSE(should_checkpoint(EveryKSupersteps{1}, 0, 0, 0));
  EXPECT_FALSE(should_checkpoint(EveryKSupersteps{3}, 4, 0, 0));
  EXPECT_TRUE(should_checkpoint(EveryKSupersteps{3}, 6, 0, 0));
}

TEST(Strategy, NeverAndInterval) {
  for (std::uint64_t s = 0; s < 50; ++s) EXPECT_FALSE(should_checkpoint(Never{}, s, 1000 * kSec, 0));
  const TimeInterval ti{2276.05};
  EXPECT_FALSE(should_checkpoint(ti, 1, static_cast<std::int64_t>(2276.04 * 1e9), 0));
  EXPECT_TRUE(should_checkpoint(ti, 1, static_cast<std::int64_t>(2276.06 * 1e9), 0));
  EXPECT_TRUE(should_checkpoint(ti, 1, 5000 * kSec, 5000 * kSec - static_cast<std::int64_t>(2276.06 * 1e9)));
}

TEST(Strategy, YoungDalyResolvesToInterval) {
  CheckpointStrategy s = YoungDaly{{86400, 30, 30, 30}};
  auto r = resolve(s);
  ASSERT_TRUE(std::holds_alternative<TimeInterval>(r));
  EXPECT_NEAR(std::get<TimeInterval>(r).seconds, 2276.0492086, 1e-6);
  EXPECT_FALSE(should_checkpoint(s, 1, 2276 * kSec, 0));
  EXPECT_TRUE(should_checkpoint(s, 1, 2277 * kSec, 0));
}

TEST(Strategy, ParseAndPrint) {
  EXPECT_EQ(to_string(parse_strategy("every_k:1")), "every_k:1");
  EXPECT_EQ(to_string(parse_strategy("interval:600")), "interval:600");
  EXPECT_EQ(to_string(parse_strategy("never")), "never");
  EXPECT_EQ(to_string(parse_strategy("young_daly", {86400, 30, 30, 30})), "young_daly");
  for (const char* bad : {"every_k:0", "every_k:", "interval:-1", "interval:x", "sometimes", ""})
    EXPECT_THROW(parse_strategy(bad), Error) << bad;
  EXPECT_THROW(parse_strategy("young_daly", {10, 30, 30, 30}), Error);
}

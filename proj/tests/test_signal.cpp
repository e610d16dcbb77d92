#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "pbnlc/qam.hpp"
#include "pbnlc/signal.hpp"

using namespace pbnlc;

namespace {

DualPolWaveform random_waveform(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  DualPolWaveform w;
  w.sample_rate_hz = 64e9;
  w.samples_per_symbol = 2;
  for (std::size_t i = 0; i < n; ++i) {
    w.x.emplace_back(g(rng), g(rng));
    w.y.emplace_back(g(rng), g(rng));
  }
  return w;
}

}  // namespace

TEST(DbConversion, KnownValues) {
  EXPECT_DOUBLE_EQ(db_to_linear(0.0), 1.0);
  EXPECT_NEAR(db_to_linear(16.0), 39.810717055349734, 1e-12);
  EXPECT_NEAR(db_to_amplitude(-15.0), 0.17782794100389229, 1e-15);
  EXPECT_NEAR(dbm_to_watts(0.0), 1e-3, 1e-18);
  EXPECT_NEAR(watts_to_dbm(2e-3), 3.0102999566398121, 1e-12);
}

TEST(DbConversion, SumIsProduct) {
  for (double a : {-30.0, -3.0, 0.5, 7.0, 16.0})
    for (double b : {-12.0, 0.0, 2.5, 9.0}) {
      const double lhs = db_to_linear(a + b), rhs = db_to_linear(a) * db_to_linear(b);
      EXPECT_NEAR(lhs / rhs, 1.0, 1e-12);
    }
}

TEST(MeanPower, Examples) {
  DualPolWaveform w;
  w.x.assign(16, cplx{});
  w.y.assign(16, cplx{});
  EXPECT_EQ(mean_power(w), 0.0);
  w.x.assign(16, cplx{1.0, 0.0});
  EXPECT_DOUBLE_EQ(mean_power(w), 1.0);
  EXPECT_THROW(mean_power(DualPolWaveform{}), std::invalid_argument);
}

TEST(MeanPower, QamStreamNearUnity) {
  const std::size_t n = 1 << 14;
  const cvec s = map_qam64_rail(random_bits(6 * n, 3));
  EXPECT_NEAR(mean_power(s), 1.0, 2.0 / std::sqrt(static_cast<double>(n)));
}

TEST(MeanPower, InvariantUnderPolarizationSwap) {
  DualPolWaveform w = random_waveform(256, 1);
  const double p = mean_power(w);
  std::swap(w.x, w.y);
  EXPECT_DOUBLE_EQ(mean_power(w), p);
}

TEST(ScaleToPower, HitsTarget) {
  DualPolWaveform w = random_waveform(512, 2);
  w = scale_to_power(w, 0.0);
  EXPECT_NEAR(mean_power(w), 1e-3, 1e-15);
  w = scale_to_power(w, 3.0);
  EXPECT_NEAR(mean_power(w), 1.9952623149688797e-3, 1e-15);
}

TEST(ScaleToPower, ShapePreservedAndIdempotent) {
  const DualPolWaveform w0 = scale_to_power(random_waveform(128, 4), 3.0103);
  const DualPolWaveform w1 = scale_to_power(w0, 3.0);
  const double ratio = std::abs(w1.x[0] / w0.x[0]);
  for (std::size_t i = 0; i < w0.size(); ++i) {
    EXPECT_NEAR(std::abs(w1.x[i] - ratio * w0.x[i]), 0.0, 1e-14);
    EXPECT_NEAR(std::abs(w1.y[i] - ratio * w0.y[i]), 0.0, 1e-14);
  }
  const DualPolWaveform w2 = scale_to_power(w1, 3.0);
  for (std::size_t i = 0; i < w1.size(); ++i) EXPECT_LE(std::abs(w2.x[i] - w1.x[i]), 1e-12 * std::abs(w1.x[i]) + 1e-300);
}

TEST(ScaleToPower, RejectsZeroPower) {
  DualPolWaveform w;
  w.x.assign(8, cplx{});
  w.y.assign(8, cplx{});
  EXPECT_THROW(scale_to_power(w, 0.0), std::invalid_argument);
}

TEST(Waveform, Validation) {
  DualPolWaveform w = random_waveform(10, 5);
  w.samples_per_symbol = 3;
  EXPECT_THROW(w.validate(), std::invalid_argument);
  w.samples_per_symbol = 2;
  w.y.pop_back();
  EXPECT_THROW(w.validate(), std::invalid_argument);
}

TEST(SymbolBlockValidation, RejectsNonFinite) {
  SymbolBlock s{{cplx{1, 0}}, {cplx{std::nan(""), 0}}, 1.0};
  EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(Configs, Validation) {
  LinkConfig l;
  EXPECT_NO_THROW(l.validate());
  l.n_spans = -1;
  EXPECT_THROW(l.validate(), std::invalid_argument);
  l = LinkConfig{};
  l.manakov_factor = 1.5;
  EXPECT_THROW(l.validate(), std::invalid_argument);

  DspConfig d;
  EXPECT_DOUBLE_EQ(d.cdc_pre_fraction + d.cdc_post_fraction(), 1.0);
  d.rolloff = 0.0;
  EXPECT_THROW(d.validate(), std::invalid_argument);

  TrainConfig t;
  t.validation_fraction = 0.6;
  EXPECT_THROW(t.validate(), std::invalid_argument);
}

TEST(LinkConfig, SiConversions) {
  LinkConfig l;
  EXPECT_NEAR(l.alpha_per_m() * 80e3, 16.0 * std::log(10.0) / 10.0, 1e-12);
  EXPECT_DOUBLE_EQ(l.total_length_km(), 1200.0);
  EXPECT_NEAR(l.beta2_s2_per_m(), -21.6826e-27, 1e-40);
}

TEST(Evm, ZeroForIdenticalBlocks) {
  const SymbolBlock a{map_qam64_rail(random_bits(600, 1)), map_qam64_rail(random_bits(600, 2)), 1.0};
  EXPECT_EQ(evm(a, a), 0.0);
}

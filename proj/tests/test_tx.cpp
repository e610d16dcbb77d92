#include <gtest/gtest.h>

#include <bitset>
#include <cmath>

#include "pbnlc/qam.hpp"
#include "pbnlc/rx.hpp"
#include "pbnlc/tx.hpp"

using namespace pbnlc;

namespace {

Bits label_bits(unsigned label) {
  Bits b(6);
  for (int i = 0; i < 6; ++i) b[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>((label >> (5 - i)) & 1u);
  return b;
}

BitBlock random_block(std::size_t n_sym, std::uint64_t seed) {
  return {random_bits(6 * n_sym, seed), random_bits(6 * n_sym, seed + 1)};
}

DspConfig small_dsp() {
  DspConfig d;
  d.oversampling = 4;
  return d;
}

double max_abs_diff(const cvec& a, const cvec& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST(Qam64, CornerPoint) {
  const cvec s = map_qam64_rail(label_bits(0));
  ASSERT_EQ(s.size(), 1u);
  EXPECT_NEAR(std::abs(s[0] - cplx{-7.0, -7.0} / std::sqrt(42.0)), 0.0, 1e-15);
}

TEST(Qam64, AverageEnergyIsOne) {
  double e = 0.0;
  for (const cplx& p : qam64::constellation()) e += std::norm(p);
  EXPECT_NEAR(e / 64.0, 1.0, 1e-15);
}

TEST(Qam64, ExhaustiveRoundTrip) {
  for (unsigned l = 0; l < 64; ++l) {
    const Bits b = label_bits(l);
    EXPECT_EQ(demap_qam64_rail(map_qam64_rail(b)), b) << l;
  }
}

TEST(Qam64, GrayNeighboursDifferInOneBit) {
  const auto c = qam64::constellation();
  const double d = 2.0 / std::sqrt(42.0);
  int pairs = 0;
  for (unsigned a = 0; a < 64; ++a)
    for (unsigned b = a + 1; b < 64; ++b) {
      if (std::abs(std::abs(c[a] - c[b]) - d) > 1e-12) continue;
      ++pairs;
      EXPECT_EQ(std::bitset<6>(a ^ b).count(), 1u) << a << " " << b;
    }
  EXPECT_EQ(pairs, 2 * 8 * 7);
}

TEST(Qam64, RejectsPartialSymbol) {
  EXPECT_THROW(map_qam64_rail(Bits(7, 0)), std::invalid_argument);
}

TEST(RrcShape, ImpulsePeaksAtFilterCentre) {
  DspConfig d = small_dsp();
  d.rrc_span_symbols = 32;
  SymbolBlock s{cvec(128), cvec(128), d.baud_rate_hz};
  s.x[0] = 1.0;
  s.y[0] = 1.0;
  const DualPolWaveform w = rrc_shape(s, d);
  ASSERT_TRUE(w.filter_delay.has_value());
  std::size_t peak = 0;
  for (std::size_t i = 0; i < w.size(); ++i)
    if (std::abs(w.x[i]) > std::abs(w.x[peak])) peak = i;
  EXPECT_EQ(peak, *w.filter_delay);
  const auto taps = rrc_taps(d.rolloff, 32, d.oversampling);
  for (std::size_t i = 0; i < taps.size(); ++i)
    EXPECT_NEAR(w.x[i].real(), taps[i] * std::sqrt(static_cast<double>(d.oversampling)), 1e-14);
}

TEST(RrcShape, CascadeIsNyquistForLongSpans) {
  for (int span : {32, 64}) {
    const int sps = 8;
    const auto h = rrc_taps(0.1, span, sps);
    std::vector<double> c(2 * h.size() - 1, 0.0);
    for (std::size_t i = 0; i < h.size(); ++i)
      for (std::size_t j = 0; j < h.size(); ++j) c[i + j] += h[i] * h[j];
    const std::size_t mid = h.size() - 1;
    double isi = 0.0;
    for (std::size_t k = mid % sps; k < c.size(); k += sps)
      if (k != mid) isi += c[k] * c[k];
    EXPECT_LT(10.0 * std::log10(isi / (c[mid] * c[mid])), -40.0) << span;
  }
}

TEST(RrcShape, PreservesPower) {
  for (int span : {0, 64}) {
    DspConfig d = small_dsp();
    d.rrc_span_symbols = span;
    const SymbolBlock s = map_qam64(random_block(8192, 11), d.baud_rate_hz);
    const DualPolWaveform w = rrc_shape(s, d);
    EXPECT_NEAR(mean_power(w) / (mean_power(s.x) + mean_power(s.y)), 1.0, 1e-3) << span;
  }
}

TEST(RrcShape, RejectsBadRolloff) {
  DspConfig d = small_dsp();
  d.rolloff = 1.5;
  const SymbolBlock s = map_qam64(random_block(16, 1));
  EXPECT_THROW(rrc_shape(s, d), std::invalid_argument);
  EXPECT_THROW(rrc_taps(0.0, 32, 8), std::invalid_argument);
}

TEST(CdcFilter, ZeroLengthIsIdentity) {
  const DualPolWaveform w = rrc_shape(map_qam64(random_block(256, 2), 32e9), small_dsp());
  const DualPolWaveform o = cdc_filter(w, LinkConfig{}, 0.0, -1);
  EXPECT_LE(max_abs_diff(o.x, w.x), 1e-12);
  EXPECT_LE(max_abs_diff(o.y, w.y), 1e-12);
}

TEST(CdcFilter, InverseAndPowerPreserving) {
  const DualPolWaveform w = rrc_shape(map_qam64(random_block(512, 3), 32e9), small_dsp());
  const LinkConfig link;
  const DualPolWaveform f = cdc_filter(w, link, 600.0, 1);
  EXPECT_NEAR(mean_power(f) / mean_power(w), 1.0, 1e-12);
  const DualPolWaveform b = cdc_filter(f, link, 600.0, -1);
  double err = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    err += std::norm(b.x[i] - w.x[i]) + std::norm(b.y[i] - w.y[i]);
    ref += std::norm(w.x[i]) + std::norm(w.y[i]);
  }
  EXPECT_LT(std::sqrt(err / ref), 1e-9);
  EXPECT_THROW(cdc_filter(w, link, -1.0, 1), std::invalid_argument);
  EXPECT_THROW(cdc_filter(w, link, 1.0, 2), std::invalid_argument);
}

TEST(CdcFilter, CommutesWithShapingFilter) {
  // Dispersing the shaped waveform equals shaping then dispersing a second copy
  // with the same matched filter on the receive side.
  DspConfig d = small_dsp();
  const SymbolBlock s = map_qam64(random_block(512, 4), d.baud_rate_hz);
  const LinkConfig link;
  DualPolWaveform a = cdc_filter(rrc_shape(s, d), link, 300.0, 1);
  a = cdc_filter(std::move(a), link, 300.0, -1);
  const SymbolBlock ra = matched_filter_decimate(a, d);
  EXPECT_LT(evm(s, ra), 1e-9);
}

TEST(BuildTx, HitsLaunchPower) {
  for (double p : {-4.0, 0.0, 3.0}) {
    const DualPolWaveform w = build_tx(random_block(1024, 5), small_dsp(), LinkConfig{}, p);
    EXPECT_NEAR(watts_to_dbm(mean_power(w)), p, 1e-6);
  }
}

TEST(BuildTx, ZeroPreCompensationIsScaledShaping) {
  DspConfig d = small_dsp();
  d.cdc_pre_fraction = 0.0;
  const BitBlock bits = random_block(256, 6);
  const DualPolWaveform w = build_tx(bits, d, LinkConfig{}, 1.0);
  const DualPolWaveform ref = scale_to_power(rrc_shape(map_qam64(bits, d.baud_rate_hz), d), 1.0);
  EXPECT_LE(max_abs_diff(w.x, ref.x), 1e-15);
  EXPECT_LE(max_abs_diff(w.y, ref.y), 1e-15);
}

TEST(BuildTx, Deterministic) {
  const BitBlock bits = random_block(256, 7);
  const DualPolWaveform a = build_tx(bits, small_dsp(), LinkConfig{}, 0.0);
  const DualPolWaveform b = build_tx(bits, small_dsp(), LinkConfig{}, 0.0);
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(a.y, b.y);
}

TEST(BuildTx, BackToBackRecoversSymbols) {
  DspConfig d = small_dsp();
  LinkConfig link;
  link.n_spans = 0;
  const BitBlock bits = random_block(2048, 8);
  const SymbolBlock tx = map_qam64(bits, d.baud_rate_hz);
  const DualPolWaveform w = build_tx(bits, d, link, 0.0);
  const AlignedPairs p = receive(w, tx, link, d, d.cdc_post_fraction());
  EXPECT_EQ(p.lag, 0);
  EXPECT_LT(evm(p.tx, p.rx), 1e-6);
}

#ifndef PBNLC_RX_HPP
#define PBNLC_RX_HPP

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "pbnlc/fft.hpp"
#include "pbnlc/signal.hpp"
#include "pbnlc/tx.hpp"

namespace pbnlc {

/// Raised when the transmitted and received streams cannot be synchronized.
class DesyncError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct AlignedPairs {
  SymbolBlock tx;
  SymbolBlock rx;
  int lag = 0;
  double phase_rad[2] = {0.0, 0.0};  // accumulated derotation per polarization
  double scale[2] = {1.0, 1.0};      // accumulated normalization per polarization

  std::size_t size() const { return tx.size(); }
};

/// Receiver-side dispersion compensation over `fraction` of the link length.
inline DualPolWaveform post_cdc(DualPolWaveform w, const LinkConfig& link, double fraction) {
  if (!(fraction >= 0 && fraction <= 1)) throw std::invalid_argument("post_cdc: fraction outside [0, 1]");
  return cdc_filter(std::move(w), link, link.total_length_km() * fraction, -1);
}

/// Matched RRC filter, then one sample per symbol at the cascaded filter delay.
inline SymbolBlock matched_filter_decimate(const DualPolWaveform& w, const DspConfig& cfg) {
  w.validate();
  if (!w.filter_delay) throw std::invalid_argument("matched_filter_decimate: filter delay metadata missing");
  if (w.samples_per_symbol != cfg.oversampling)
    throw std::invalid_argument("matched_filter_decimate: oversampling does not match the waveform");
  const auto sps = static_cast<std::size_t>(cfg.oversampling);
  const std::size_t n = w.size();
  const std::size_t n_sym = n / sps;
  const std::size_t delay = 2 * *w.filter_delay;
  SymbolBlock out;
  out.baud_rate_hz = w.baud_rate_hz();
  out.x.resize(n_sym);
  out.y.resize(n_sym);
  if (cfg.rrc_span_symbols == 0) {
    const auto g = rrc_spectrum(n, cfg.oversampling, cfg.rolloff);
    cvec h(n);
    for (std::size_t k = 0; k < n; ++k) h[k] = g[k];
    Fft fft(n);
    cvec v;
    for (int p = 0; p < 2; ++p) {
      v = p == 0 ? w.x : w.y;
      fft.filter(v, h);
      for (std::size_t k = 0; k < n_sym; ++k) out.pol(p)[k] = v[(k * sps + delay) % n];
    }
  } else {
    const auto taps = rrc_taps(cfg.rolloff, cfg.rrc_span_symbols, cfg.oversampling);
    const double g = 1.0 / std::sqrt(static_cast<double>(sps));
    for (int p = 0; p < 2; ++p) {
      const cvec& v = p == 0 ? w.x : w.y;
      for (std::size_t k = 0; k < n_sym; ++k) {
        const std::size_t t = k * sps + delay;
        cplx acc{};
        for (std::size_t i = 0; i < taps.size(); ++i) acc += taps[i] * v[(t + n - (i % n)) % n];
        out.pol(p)[k] = acc * g;
      }
    }
  }
  return out;
}

namespace detail {

inline cplx correlate(const cvec& tx, const cvec& rx, long lag) {
  cplx acc{};
  for (long k = 0; k < static_cast<long>(tx.size()); ++k) {
    const long j = k + lag;
    if (j < 0 || j >= static_cast<long>(rx.size())) continue;
    acc += tx[static_cast<std::size_t>(k)] * std::conj(rx[static_cast<std::size_t>(j)]);
  }
  return acc;
}

}  // namespace detail

/// Finds the integer lag d with rx[k + d] ~ tx[k] by maximizing the summed
/// cross-correlation magnitude of both polarizations over |d| <= max_lag, then
/// trims both streams to their common support minus `edge_guard` symbols at
/// each end.
inline AlignedPairs align(const SymbolBlock& tx, const SymbolBlock& rx, int max_lag = 64,
                          std::size_t edge_guard = 0, double min_peak = 0.2) {
  tx.validate();
  rx.validate();
  if (max_lag < 0) throw std::invalid_argument("align: max_lag < 0");
  if (rx.size() + static_cast<std::size_t>(max_lag) < tx.size())
    throw std::invalid_argument("align: rx shorter than tx - max_lag");
  double best = -1.0;
  long best_lag = 0;
  for (long d = -max_lag; d <= max_lag; ++d) {
    const double c = std::abs(detail::correlate(tx.x, rx.x, d)) + std::abs(detail::correlate(tx.y, rx.y, d));
    if (c > best) {
      best = c;
      best_lag = d;
    }
  }
  // Normalized peak per polarization over the overlapping support.
  const long n_tx = static_cast<long>(tx.size());
  const long n_rx = static_cast<long>(rx.size());
  const long k0 = std::max(0L, -best_lag);
  const long k1 = std::min(n_tx, n_rx - best_lag);
  if (k1 <= k0) throw DesyncError("align: no overlap at the detected lag");
  for (int p = 0; p < 2; ++p) {
    double et = 0.0, er = 0.0;
    for (long k = k0; k < k1; ++k) {
      et += std::norm(tx.pol(p)[static_cast<std::size_t>(k)]);
      er += std::norm(rx.pol(p)[static_cast<std::size_t>(k + best_lag)]);
    }
    const double c = std::abs(detail::correlate(tx.pol(p), rx.pol(p), best_lag));
    const double rho = (et > 0 && er > 0) ? c / std::sqrt(et * er) : 0.0;
    if (rho < min_peak) throw DesyncError("align: correlation peak below threshold");
  }
  const long g = static_cast<long>(edge_guard);
  if (k1 - k0 <= 2 * g) throw std::invalid_argument("align: edge guard exceeds the common support");
  AlignedPairs out;
  out.lag = static_cast<int>(best_lag);
  out.tx.baud_rate_hz = tx.baud_rate_hz;
  out.rx.baud_rate_hz = rx.baud_rate_hz;
  for (int p = 0; p < 2; ++p) {
    for (long k = k0 + g; k < k1 - g; ++k) {
      out.tx.pol(p).push_back(tx.pol(p)[static_cast<std::size_t>(k)]);
      out.rx.pol(p).push_back(rx.pol(p)[static_cast<std::size_t>(k + best_lag)]);
    }
  }
  return out;
}

/// Data-aided constant phase per polarization: rx <- rx * exp(j theta),
/// theta = arg(sum tx * conj(rx)).
inline AlignedPairs derotate(AlignedPairs pairs) {
  for (int p = 0; p < 2; ++p) {
    cplx acc{};
    const cvec& t = pairs.tx.pol(p);
    cvec& r = pairs.rx.pol(p);
    for (std::size_t k = 0; k < t.size(); ++k) acc += t[k] * std::conj(r[k]);
    if (std::abs(acc) == 0.0) throw std::invalid_argument("derotate: zero cross-power");
    const double theta = std::arg(acc);
    const cplx rot = std::polar(1.0, theta);
    for (auto& v : r) v *= rot;
    pairs.phase_rad[p] = std::remainder(pairs.phase_rad[p] + theta, 2.0 * kPi);
  }
  return pairs;
}

/// Real positive scaling so that mean |rx|^2 = mean |tx|^2 per polarization.
inline AlignedPairs normalize_pairs(AlignedPairs pairs) {
  for (int p = 0; p < 2; ++p) {
    const double pt = mean_power(pairs.tx.pol(p));
    const double pr = mean_power(pairs.rx.pol(p));
    if (!(pr > 0)) throw std::invalid_argument("normalize_pairs: zero rx power");
    const double s = std::sqrt(pt / pr);
    for (auto& v : pairs.rx.pol(p)) v *= s;
    pairs.scale[p] *= s;
  }
  return pairs;
}

/// post-CDC -> matched filter -> alignment -> derotation -> normalization.
inline AlignedPairs receive(DualPolWaveform w, const SymbolBlock& tx, const LinkConfig& link, const DspConfig& cfg,
                            double post_fraction, int max_lag = 64) {
  w = post_cdc(std::move(w), link, post_fraction);
  const SymbolBlock rx = matched_filter_decimate(w, cfg);
  return normalize_pairs(derotate(align(tx, rx, max_lag)));
}

}  // namespace pbnlc

#endif  // PBNLC_RX_HPP

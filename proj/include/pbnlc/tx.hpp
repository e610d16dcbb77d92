#ifndef PBNLC_TX_HPP
#define PBNLC_TX_HPP

#include <cmath>
#include <memory>
#include <stdexcept>
#include <vector>

#include "pbnlc/fft.hpp"
#include "pbnlc/qam.hpp"
#include "pbnlc/signal.hpp"

namespace pbnlc {

/// Unit-energy root-raised-cosine taps over `span_symbols` symbols, length
/// span_symbols * sps + 1, peak at the centre tap.
inline std::vector<double> rrc_taps(double rolloff, int span_symbols, int sps) {
  if (!(rolloff > 0 && rolloff <= 1)) throw std::invalid_argument("rrc_taps: rolloff outside (0, 1]");
  if (span_symbols < 1 || sps < 1) throw std::invalid_argument("rrc_taps: span and sps must be positive");
  const int half = span_symbols * sps / 2;
  std::vector<double> h(static_cast<std::size_t>(2 * half + 1));
  const double b = rolloff;
  for (int i = -half; i <= half; ++i) {
    const double t = static_cast<double>(i) / sps;
    double v;
    if (i == 0) {
      v = 1.0 - b + 4.0 * b / kPi;
    } else if (std::abs(std::abs(t) - 1.0 / (4.0 * b)) < 1e-9) {
      v = b / std::sqrt(2.0) *
          ((1.0 + 2.0 / kPi) * std::sin(kPi / (4.0 * b)) + (1.0 - 2.0 / kPi) * std::cos(kPi / (4.0 * b)));
    } else {
      v = (std::sin(kPi * t * (1.0 - b)) + 4.0 * b * t * std::cos(kPi * t * (1.0 + b))) /
          (kPi * t * (1.0 - (4.0 * b * t) * (4.0 * b * t)));
    }
    h[static_cast<std::size_t>(i + half)] = v;
  }
  double e = 0.0;
  for (double v : h) e += v * v;
  for (double& v : h) v /= std::sqrt(e);
  return h;
}

/// Square root of the raised-cosine spectrum (peak 1) on the FFT grid of an
/// n-sample block at `sps` samples per symbol.
inline std::vector<double> rrc_spectrum(std::size_t n, int sps, double rolloff) {
  std::vector<double> h(n);
  const double f1 = (1.0 - rolloff) / 2.0;  // in units of the symbol rate
  const double f2 = (1.0 + rolloff) / 2.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double kk = (k < (n + 1) / 2) ? static_cast<double>(k) : static_cast<double>(k) - static_cast<double>(n);
    const double f = std::abs(kk) * sps / static_cast<double>(n);
    double p;
    if (f <= f1) p = 1.0;
    else if (f > f2) p = 0.0;
    else p = 0.5 * (1.0 + std::cos(kPi / rolloff * (f - f1)));
    h[k] = std::sqrt(p);
  }
  return h;
}

namespace detail {

inline void rrc_shape_rail(const cvec& sym, cvec& out, const DspConfig& cfg, const Fft* fft) {
  const auto sps = static_cast<std::size_t>(cfg.oversampling);
  const std::size_t n = sym.size() * sps;
  out.assign(n, cplx{});
  if (cfg.rrc_span_symbols == 0) {
    for (std::size_t k = 0; k < sym.size(); ++k) out[k * sps] = sym[k];
    // |H|^2 = sps^2 * RC keeps the sample power equal to the symbol power.
    const auto g = rrc_spectrum(n, cfg.oversampling, cfg.rolloff);
    cvec h(n);
    for (std::size_t k = 0; k < n; ++k) h[k] = g[k] * static_cast<double>(sps);
    fft->filter(out, h);
  } else {
    const auto taps = rrc_taps(cfg.rolloff, cfg.rrc_span_symbols, cfg.oversampling);
    const double g = std::sqrt(static_cast<double>(sps));
    for (std::size_t k = 0; k < sym.size(); ++k) {
      const cplx s = sym[k] * g;
      std::size_t t = k * sps;
      for (double tap : taps) {
        out[t % n] += s * tap;
        ++t;
      }
    }
  }
}

}  // namespace detail

/// Zero-insertion upsampling followed by circular RRC shaping.
inline DualPolWaveform rrc_shape(const SymbolBlock& sym, const DspConfig& cfg) {
  cfg.validate();
  if (cfg.oversampling < 2) throw std::invalid_argument("rrc_shape: oversampling must be >= 2");
  if (sym.x.size() != sym.y.size()) throw std::invalid_argument("rrc_shape: polarization lengths differ");
  if (sym.x.empty()) throw std::invalid_argument("rrc_shape: empty symbol block");
  DualPolWaveform w;
  w.samples_per_symbol = cfg.oversampling;
  w.sample_rate_hz = cfg.baud_rate_hz * cfg.oversampling;
  w.filter_delay = cfg.rrc_span_symbols == 0
                       ? std::size_t{0}
                       : static_cast<std::size_t>(cfg.rrc_span_symbols * cfg.oversampling / 2);
  std::unique_ptr<Fft> fft;
  if (cfg.rrc_span_symbols == 0) fft = std::make_unique<Fft>(sym.size() * cfg.oversampling);
  detail::rrc_shape_rail(sym.x, w.x, cfg, fft.get());
  detail::rrc_shape_rail(sym.y, w.y, cfg, fft.get());
  return w;
}

/// All-pass dispersion filter exp(j * sign * beta2/2 * w^2 * L), both polarizations.
/// sign = +1 reproduces the fiber's dispersion, sign = -1 compensates it.
///
/// The block is treated as one period of a periodic signal; the transmitter
/// builds it that way, so no guard interval is inserted and edge symbols stay
/// valid. Receivers still discard an edge guard for the feature windows.
inline DualPolWaveform cdc_filter(DualPolWaveform w, const LinkConfig& link, double length_km, int sign) {
  if (!(length_km >= 0)) throw std::invalid_argument("cdc_filter: negative length");
  if (sign != 1 && sign != -1) throw std::invalid_argument("cdc_filter: sign must be +1 or -1");
  w.validate();
  if (length_km == 0.0 || w.empty()) return w;
  const auto omega = angular_frequencies(w.size(), w.sample_rate_hz);
  const double k = sign * link.beta2_s2_per_m() / 2.0 * length_km * 1e3;
  cvec h(w.size());
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = std::polar(1.0, k * omega[i] * omega[i]);
  Fft fft(w.size());
  fft.filter(w.x, h);
  fft.filter(w.y, h);
  return w;
}

/// Mapper -> RRC -> pre-compensation of cdc_pre_fraction of the link dispersion -> launch power.
inline DualPolWaveform build_tx(const BitBlock& bits, const DspConfig& cfg, const LinkConfig& link, double p_dbm) {
  link.validate();
  const SymbolBlock sym = map_qam64(bits, cfg.baud_rate_hz);
  DualPolWaveform w = rrc_shape(sym, cfg);
  w = cdc_filter(std::move(w), link, link.total_length_km() * cfg.cdc_pre_fraction, -1);
  return scale_to_power(std::move(w), p_dbm);
}

}  // namespace pbnlc

#endif  // PBNLC_TX_HPP

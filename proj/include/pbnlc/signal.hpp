#ifndef PBNLC_SIGNAL_HPP
#define PBNLC_SIGNAL_HPP

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pbnlc {

using cplx = std::complex<double>;
using cvec = std::vector<cplx>;

inline constexpr double kPlanck = 6.62607015e-34;        // J s
inline constexpr double kSpeedOfLight = 299792458.0;      // m/s
inline constexpr double kPi = std::numbers::pi;

/// Raised when a propagation or training run produces NaN/Inf.
class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Oversampled dual-polarization baseband field, samples in sqrt(W).
struct DualPolWaveform {
  cvec x;
  cvec y;
  double sample_rate_hz = 0.0;
  int samples_per_symbol = 1;
  // Circular pulse-shaping delay in samples; empty until a shaping filter ran.
  std::optional<std::size_t> filter_delay;
  // Real scalar applied by the last scale_to_power.
  double tx_scale = 1.0;

  std::size_t size() const { return x.size(); }
  bool empty() const { return x.empty(); }
  double baud_rate_hz() const { return sample_rate_hz / samples_per_symbol; }

  void validate() const {
    if (x.size() != y.size())
      throw std::invalid_argument("DualPolWaveform: x and y lengths differ");
    if (samples_per_symbol < 1)
      throw std::invalid_argument("DualPolWaveform: samples_per_symbol must be positive");
    if (x.size() % static_cast<std::size_t>(samples_per_symbol) != 0)
      throw std::invalid_argument("DualPolWaveform: length is not a multiple of samples_per_symbol");
  }
};

/// Symbol-rate sequences, one per polarization.
struct SymbolBlock {
  cvec x;
  cvec y;
  double baud_rate_hz = 0.0;

  std::size_t size() const { return x.size(); }

  cvec& pol(int p) { return p == 0 ? x : y; }
  const cvec& pol(int p) const { return p == 0 ? x : y; }

  void validate() const {
    if (x.size() != y.size())
      throw std::invalid_argument("SymbolBlock: x and y lengths differ");
    for (const auto* v : {&x, &y})
      for (const cplx& s : *v)
        if (!std::isfinite(s.real()) || !std::isfinite(s.imag()))
          throw std::invalid_argument("SymbolBlock: non-finite symbol");
  }
};

// Standard SSMF with 80 km spans and loss-balancing amplifiers.
struct LinkConfig {
  double span_length_km = 80.0;
  int n_spans = 15;
  double alpha_db_per_km = 0.2;
  double beta2_ps2_per_km = -21.6826;  // D = 17 ps/nm/km at 1550 nm
  double gamma_per_w_per_km = 1.3;
  double amp_gain_db = 16.0;
  double noise_figure_db = 6.0;
  double center_wavelength_nm = 1550.0;
  double manakov_factor = 8.0 / 9.0;
  bool ase_enabled = true;

  double total_length_km() const { return span_length_km * n_spans; }
  double carrier_frequency_hz() const { return kSpeedOfLight / (center_wavelength_nm * 1e-9); }

  // SI conversions used by the propagation kernels.
  double alpha_per_m() const { return alpha_db_per_km * std::log(10.0) / 10.0 * 1e-3; }
  double beta2_s2_per_m() const { return beta2_ps2_per_km * 1e-27; }
  double gamma_per_w_per_m() const { return gamma_per_w_per_km * 1e-3; }

  void validate() const {
    if (n_spans < 0) throw std::invalid_argument("LinkConfig: n_spans < 0");
    if (!(span_length_km > 0)) throw std::invalid_argument("LinkConfig: span_length_km must be > 0");
    if (amp_gain_db < 0) throw std::invalid_argument("LinkConfig: amp_gain_db < 0");
    if (!(manakov_factor > 0 && manakov_factor <= 1))
      throw std::invalid_argument("LinkConfig: manakov_factor outside (0, 1]");
  }
};

/// Transmit/receive DSP parameters.
///
/// `rrc_span_symbols == 0` selects the exact frequency-domain root-raised-cosine
/// on the circular block; a positive value selects a truncated FIR of that span.
struct DspConfig {
  double rolloff = 0.1;
  int oversampling = 8;
  double cdc_pre_fraction = 0.5;
  int rrc_span_symbols = 0;
  double baud_rate_hz = 32e9;

  double cdc_post_fraction() const { return 1.0 - cdc_pre_fraction; }

  void validate() const {
    if (!(rolloff > 0 && rolloff <= 1)) throw std::invalid_argument("DspConfig: rolloff outside (0, 1]");
    if (oversampling < 1) throw std::invalid_argument("DspConfig: oversampling must be positive");
    if (!(cdc_pre_fraction >= 0 && cdc_pre_fraction <= 1))
      throw std::invalid_argument("DspConfig: cdc_pre_fraction outside [0, 1]");
    if (rrc_span_symbols < 0) throw std::invalid_argument("DspConfig: rrc_span_symbols < 0");
    if (!(baud_rate_hz > 0)) throw std::invalid_argument("DspConfig: baud_rate_hz must be > 0");
  }
};

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 1024;
  int max_epochs = 500;
  int patience = 10;
  std::uint64_t seed = 1;
  double validation_fraction = 0.2;

  void validate() const {
    if (!(learning_rate > 0) || batch_size <= 0 || max_epochs <= 0 || patience <= 0)
      throw std::invalid_argument("TrainConfig: learning_rate, batch_size, max_epochs, patience must be positive");
    if (!(validation_fraction > 0 && validation_fraction <= 0.5))
      throw std::invalid_argument("TrainConfig: validation_fraction outside (0, 0.5]");
  }
};

inline double db_to_linear(double v_db) { return std::pow(10.0, v_db / 10.0); }
inline double db_to_amplitude(double v_db) { return std::pow(10.0, v_db / 20.0); }
inline double linear_to_db(double v) { return 10.0 * std::log10(v); }
inline double dbm_to_watts(double p_dbm) { return db_to_linear(p_dbm - 30.0); }
inline double watts_to_dbm(double p_w) { return linear_to_db(p_w) + 30.0; }

/// Mean of |x|^2 + |y|^2 over samples, i.e. total power over both polarizations.
inline double mean_power(const DualPolWaveform& w) {
  if (w.empty()) throw std::invalid_argument("mean_power: empty waveform");
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i)
    acc += std::norm(w.x[i]) + std::norm(w.y[i]);
  return acc / static_cast<double>(w.size());
}

inline double mean_power(std::span<const cplx> v) {
  if (v.empty()) throw std::invalid_argument("mean_power: empty sequence");
  double acc = 0.0;
  for (const cplx& s : v) acc += std::norm(s);
  return acc / static_cast<double>(v.size());
}

/// Scales both polarizations by one real factor so the total launch power is p_dbm.
inline DualPolWaveform scale_to_power(DualPolWaveform w, double p_dbm) {
  const double p = mean_power(w);
  if (!(p > 0)) throw std::invalid_argument("scale_to_power: zero-power input");
  const double s = std::sqrt(dbm_to_watts(p_dbm) / p);
  for (auto& v : w.x) v *= s;
  for (auto& v : w.y) v *= s;
  w.tx_scale *= s;
  return w;
}

/// Angular frequency grid (rad/s) matching the unshifted FFT bin order.
inline std::vector<double> angular_frequencies(std::size_t n, double sample_rate_hz) {
  std::vector<double> w(n);
  const double df = sample_rate_hz / static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto kk = static_cast<double>(k);
    const double f = (k < (n + 1) / 2) ? kk * df : (kk - static_cast<double>(n)) * df;
    w[k] = 2.0 * kPi * f;
  }
  return w;
}

/// Error vector magnitude as an rms ratio (not percent) over both polarizations.
inline double evm(const SymbolBlock& ref, const SymbolBlock& meas) {
  if (ref.size() != meas.size()) throw std::invalid_argument("evm: length mismatch");
  double err = 0.0, pw = 0.0;
  for (int p = 0; p < 2; ++p)
    for (std::size_t i = 0; i < ref.size(); ++i) {
      err += std::norm(meas.pol(p)[i] - ref.pol(p)[i]);
      pw += std::norm(ref.pol(p)[i]);
    }
  if (!(pw > 0)) throw std::invalid_argument("evm: zero reference power");
  return std::sqrt(err / pw);
}

}  // namespace pbnlc

#endif  // PBNLC_SIGNAL_HPP

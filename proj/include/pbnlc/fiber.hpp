#ifndef PBNLC_FIBER_HPP
#define PBNLC_FIBER_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <stdexcept>
#include <vector>

#include "pbnlc/fft.hpp"
#include "pbnlc/seed.hpp"
#include "pbnlc/signal.hpp"

namespace pbnlc {

enum class StepLayout { uniform, logarithmic };

struct SsfmPlan {
  int steps_per_span = 100;
  StepLayout step_layout = StepLayout::uniform;
  std::uint64_t noise_seed = 0;

  void validate() const {
    if (steps_per_span < 1) throw std::invalid_argument("SsfmPlan: steps_per_span must be >= 1");
  }
};

struct RailSeeds {
  std::uint64_t x = 0;
  std::uint64_t y = 0;
};

inline RailSeeds rail_seeds(std::uint64_t seed) {
  return {derive_seed(seed, {0}), derive_seed(seed, {1})};
}

/// Amplifier noise seeds for span `span` (0-based) of a link driven by `plan_seed`.
inline RailSeeds span_noise_seeds(std::uint64_t plan_seed, int span) {
  return rail_seeds(derive_seed(plan_seed, {static_cast<std::uint64_t>(SeedRole::noise),
                                            static_cast<std::uint64_t>(span)}));
}

/// Step lengths (m) for one span. The logarithmic layout gives every step the
/// same effective length, i.e. the same nonlinear phase on a decaying signal.
inline std::vector<double> step_lengths(double span_m, int steps, StepLayout layout, double alpha_per_m) {
  if (steps < 1) throw std::invalid_argument("step_lengths: steps must be >= 1");
  std::vector<double> h(static_cast<std::size_t>(steps));
  if (layout == StepLayout::uniform || alpha_per_m <= 0.0) {
    for (auto& v : h) v = span_m / steps;
    return h;
  }
  const double total = 1.0 - std::exp(-alpha_per_m * span_m);
  double prev = 0.0;
  for (int i = 1; i <= steps; ++i) {
    const double z = (i == steps) ? span_m : -std::log(1.0 - total * i / steps) / alpha_per_m;
    h[static_cast<std::size_t>(i - 1)] = z - prev;
    prev = z;
  }
  return h;
}

namespace detail {

struct MediumParams {
  double alpha = 0.0;   // power attenuation, 1/m
  double beta2 = 0.0;   // s^2/m
  double gamma = 0.0;   // manakov-scaled Kerr coefficient, 1/(W m)
};

// Symmetric split step over the given step lengths. Adjacent linear half steps
// are merged, so K steps cost K+1 linear operators and K nonlinear ones.
inline void split_step(DualPolWaveform& w, const std::vector<double>& steps, const MediumParams& m) {
  const std::size_t n = w.size();
  if (n == 0 || steps.empty()) return;
  const auto omega = angular_frequencies(n, w.sample_rate_hz);
  std::map<double, cvec> cache;
  auto linear = [&](double len) -> const cvec& {
    auto it = cache.find(len);
    if (it != cache.end()) return it->second;
    cvec h(n);
    const double amp = std::exp(-m.alpha / 2.0 * len);
    for (std::size_t k = 0; k < n; ++k) h[k] = std::polar(amp, m.beta2 / 2.0 * omega[k] * omega[k] * len);
    return cache.emplace(len, std::move(h)).first->second;
  };
  Fft fft(n);
  for (std::size_t i = 0; i <= steps.size(); ++i) {
    double len;
    if (i == 0) len = steps.front() / 2.0;
    else if (i == steps.size()) len = steps.back() / 2.0;
    else len = (steps[i - 1] + steps[i]) / 2.0;
    const cvec& h = linear(len);
    fft.filter(w.x, h);
    fft.filter(w.y, h);
    if (i == steps.size()) break;

    // Power at the step midpoint integrated against its exponential profile.
    const double hs = steps[i];
    const double leff = (m.alpha == 0.0) ? hs : 2.0 * std::sinh(m.alpha * hs / 2.0) / m.alpha;
    const double k = m.gamma * leff;
    double acc = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      const double p = std::norm(w.x[s]) + std::norm(w.y[s]);
      acc += p;
      const cplx r = std::polar(1.0, k * p);
      w.x[s] *= r;
      w.y[s] *= r;
    }
    if (!std::isfinite(acc)) throw NumericError("split_step: non-finite field (step too coarse?)");
  }
}

}  // namespace detail

/// One fiber span by symmetric split-step integration of the Manakov equation.
inline DualPolWaveform ssfm_span(DualPolWaveform w, const LinkConfig& link, const SsfmPlan& plan) {
  link.validate();
  plan.validate();
  w.validate();
  if (w.samples_per_symbol < 2) throw std::invalid_argument("ssfm_span: oversampling must be >= 2");
  const double span_m = link.span_length_km * 1e3;
  const detail::MediumParams m{link.alpha_per_m(), link.beta2_s2_per_m(),
                               link.manakov_factor * link.gamma_per_w_per_m()};
  detail::split_step(w, step_lengths(span_m, plan.steps_per_span, plan.step_layout, m.alpha), m);
  return w;
}

/// ASE noise power per polarization over the full simulation bandwidth (W).
inline double ase_noise_power(double gain_db, double nf_db, double carrier_hz, double bandwidth_hz) {
  const double g = db_to_linear(gain_db);
  const double nsp = db_to_linear(nf_db) / 2.0;
  return (g - 1.0) * nsp * kPlanck * carrier_hz * bandwidth_hz;
}

/// Lumped amplifier: amplitude gain 10^(gain_db/20) plus circular complex
/// Gaussian ASE drawn independently per rail.
inline DualPolWaveform edfa(DualPolWaveform w, double gain_db, double nf_db, RailSeeds seeds,
                            double carrier_hz = kSpeedOfLight / 1550e-9) {
  if (gain_db < 0) throw std::invalid_argument("edfa: gain_db < 0");
  const double a = db_to_amplitude(gain_db);
  for (auto& v : w.x) v *= a;
  for (auto& v : w.y) v *= a;
  const double pn = ase_noise_power(gain_db, nf_db, carrier_hz, w.sample_rate_hz);
  if (!(pn > 0)) return w;
  const double sigma = std::sqrt(pn / 2.0);
  auto add = [sigma](cvec& v, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, sigma);
    for (auto& s : v) {
      const double re = nd(rng);
      const double im = nd(rng);
      s += cplx{re, im};
    }
  };
  add(w.x, seeds.x);
  add(w.y, seeds.y);
  return w;
}

inline DualPolWaveform edfa(DualPolWaveform w, double gain_db, double nf_db, std::uint64_t seed,
                            double carrier_hz = kSpeedOfLight / 1550e-9) {
  return edfa(std::move(w), gain_db, nf_db, rail_seeds(seed), carrier_hz);
}

/// n_spans x (fiber span, amplifier). Span s draws its noise from
/// span_noise_seeds(plan.noise_seed, s).
inline DualPolWaveform propagate_link(DualPolWaveform w, const LinkConfig& link, const SsfmPlan& plan) {
  link.validate();
  plan.validate();
  for (int s = 0; s < link.n_spans; ++s) {
    w = ssfm_span(std::move(w), link, plan);
    if (link.ase_enabled)
      w = edfa(std::move(w), link.amp_gain_db, link.noise_figure_db, span_noise_seeds(plan.noise_seed, s),
               link.carrier_frequency_hz());
    else
      w = edfa(std::move(w), link.amp_gain_db, -std::numeric_limits<double>::infinity(), RailSeeds{},
               link.carrier_frequency_hz());
  }
  return w;
}

/// Digital back-propagation: spans in reverse order, each undoing the
/// amplifier gain and then integrating with negated loss, dispersion and
/// nonlinearity over `steps_per_span` uniform steps. Noise is not modelled.
inline DualPolWaveform dbp(DualPolWaveform w, const LinkConfig& link, int steps_per_span) {
  link.validate();
  w.validate();
  if (steps_per_span < 1) throw std::invalid_argument("dbp: steps_per_span must be >= 1");
  if (link.n_spans == 0) return w;
  if (w.samples_per_symbol < 2) throw std::invalid_argument("dbp: oversampling must be >= 2");
  const double span_m = link.span_length_km * 1e3;
  const detail::MediumParams m{-link.alpha_per_m(), -link.beta2_s2_per_m(),
                               -link.manakov_factor * link.gamma_per_w_per_m()};
  const auto steps = step_lengths(span_m, steps_per_span, StepLayout::uniform, 0.0);
  const double inv_gain = 1.0 / db_to_amplitude(link.amp_gain_db);
  for (int s = link.n_spans - 1; s >= 0; --s) {
    for (auto& v : w.x) v *= inv_gain;
    for (auto& v : w.y) v *= inv_gain;
    detail::split_step(w, steps, m);
  }
  return w;
}

}  // namespace pbnlc

#endif  // PBNLC_FIBER_HPP

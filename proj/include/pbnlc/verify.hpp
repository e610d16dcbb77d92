#ifndef PBNLC_VERIFY_HPP
#define PBNLC_VERIFY_HPP

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "pbnlc/complexity.hpp"
#include "pbnlc/experiment.hpp"
#include "pbnlc/fiber.hpp"
#include "pbnlc/io.hpp"
#include "pbnlc/metrics.hpp"
#include "pbnlc/mlp.hpp"

namespace pbnlc {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

namespace detail {

inline CheckResult run_check(const std::string& name, const std::function<std::string(bool&)>& fn) {
  CheckResult r{name, false, ""};
  try {
    r.detail = fn(r.passed);
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("exception: ") + e.what();
  }
  return r;
}

inline DualPolWaveform cw_waveform(std::size_t n, double per_rail_w, double fs, int sps) {
  DualPolWaveform w;
  w.x.assign(n, cplx(std::sqrt(per_rail_w), 0.0));
  w.y.assign(n, cplx(std::sqrt(per_rail_w), 0.0));
  w.sample_rate_hz = fs;
  w.samples_per_symbol = sps;
  w.filter_delay = 0;
  return w;
}

}  // namespace detail

/// Fast invariant checks: complexity arithmetic, split-step closed forms,
/// gradient agreement, linear-chain identity and persistence round trips.
inline std::vector<CheckResult> verify_invariants() {
  std::vector<CheckResult> out;

  out.push_back(detail::run_check("complexity-arithmetic", [](bool& ok) {
    const std::int64_t a = rm_dnn(138), b = rm_dnn(268), c = rm_dnn(1314);
    const std::int64_t dbp = rm_dbp(DbpCostParams{15, 1, 8, 7, 21, 1});
    const double pct = 100.0 * static_cast<double>(dbp - (a + b)) / static_cast<double>(dbp);
    ok = a == 592 && a + b == 1704 && c == 5296 && 2 * c == 10592 && dbp == 2235 && dbp - (a + b) == 531 &&
         std::abs(pct - 23.75) <= 0.05;
    return "592/1704/5296/10592/2235 -> " + std::to_string(a) + "/" + std::to_string(a + b) + "/" +
           std::to_string(c) + "/" + std::to_string(2 * c) + "/" + std::to_string(dbp) + ", reduction " +
           fmt_num(pct) + "%";
  }));

  out.push_back(detail::run_check("ssfm-cw-phase", [](bool& ok) {
    LinkConfig link;
    link.alpha_db_per_km = 0.0;
    link.beta2_ps2_per_km = 0.0;
    link.n_spans = 1;
    const DualPolWaveform in = detail::cw_waveform(64, 0.5e-3, 256e9, 8);
    const DualPolWaveform w = ssfm_span(in, link, SsfmPlan{});
    const double phi = std::arg(w.x[0] / in.x[0]);
    const double expect = link.manakov_factor * link.gamma_per_w_per_m() * 1e-3 * 80e3;
    ok = std::abs(phi - expect) <= 1e-9 * expect;
    return "phase " + fmt_num(phi) + " rad, closed form " + fmt_num(expect);
  }));

  out.push_back(detail::run_check("ssfm-energy", [](bool& ok) {
    LinkConfig link;
    link.alpha_db_per_km = 0.0;
    link.n_spans = 1;
    DualPolWaveform w;
    w.sample_rate_hz = 256e9;
    w.samples_per_symbol = 8;
    w.filter_delay = 0;
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g(0.0, std::sqrt(0.5e-3));
    for (int i = 0; i < 1024; ++i) {
      w.x.emplace_back(g(rng), g(rng));
      w.y.emplace_back(g(rng), g(rng));
    }
    const double e0 = mean_power(w);
    const double e1 = mean_power(ssfm_span(w, link, SsfmPlan{}));
    const double rel = std::abs(e1 - e0) / e0;
    ok = rel <= 1e-10;
    return "relative energy change " + fmt_num(rel);
  }));

  out.push_back(detail::run_check("mlp-gradient", [](bool& ok) {
    MlpSpec spec;
    spec.n_inputs = 6;
    MlpModel m = init_model(spec, 11);
    std::vector<std::complex<float>> f{{0.3f, -0.2f}, {0.1f, 0.5f}, {-0.4f, 0.2f}};
    const cvec t{{0.05, -0.1}};
    const TrainingView v{f, 3, t};
    const std::vector<std::size_t> rows{0};
    Gradient g(m);
    loss_and_gradient(m, v, rows, g);
    double worst = 0.0;
    for (std::size_t l = 0; l < m.layers.size(); ++l)
      for (std::size_t i = 0; i < m.layers[l].w.size(); ++i) {
        const double h = 1e-6, w0 = m.layers[l].w[i];
        Gradient tmp(m);
        m.layers[l].w[i] = w0 + h;
        const double lp = loss_and_gradient(m, v, rows, tmp);
        m.layers[l].w[i] = w0 - h;
        const double lm = loss_and_gradient(m, v, rows, tmp);
        m.layers[l].w[i] = w0;
        const double fd = (lp - lm) / (2 * h);
        const double err = std::abs(fd - g.w[l][i]) / std::max(1e-8, std::abs(fd) + std::abs(g.w[l][i]));
        worst = std::max(worst, err);
      }
    ok = worst <= 1e-5;
    return "worst relative error " + fmt_num(worst);
  }));

  out.push_back(detail::run_check("linear-chain-evm", [](bool& ok) {
    ExperimentConfig cfg;
    cfg.link.gamma_per_w_per_km = 0.0;
    cfg.link.ase_enabled = false;
    cfg.link.n_spans = 3;
    cfg.n_symbols = 1024;
    cfg.ssfm.steps_per_span = 2;
    const SimulatedLink s = simulate_link(cfg, 1, DataRole::test, 0.0);
    const AlignedPairs p = receive_cdc(s, cfg);
    const double e = evm(p.tx, p.rx);
    ok = e < 1e-6;
    return "EVM " + fmt_num(e);
  }));

  out.push_back(detail::run_check("checkpoint-roundtrip", [](bool& ok) {
    MlpSpec spec;
    spec.n_inputs = 10;
    MlpModel m = prune(init_model(spec, 3), -6.0).model;
    m.input_scale = 1.0 / 3.0;
    m.output_scale = 0.1;
    const Bytes b = checkpoint_bytes(m, json{{"k", 1}});
    const Bytes b2 = checkpoint_bytes(parse_checkpoint(b).model, json{{"k", 1}});
    ok = b == b2;
    return ok ? "bit-exact" : "bytes differ";
  }));

  out.push_back(detail::run_check("q-from-ber", [](bool& ok) {
    const double q = q_from_ber(1e-3);
    ok = std::abs(q - 9.80) < 0.005 && std::abs(ber_from_q(q) - 1e-3) <= 1e-13;
    return "Q(1e-3) = " + fmt_num(q) + " dB";
  }));

  return out;
}

}  // namespace pbnlc

#endif  // PBNLC_VERIFY_HPP

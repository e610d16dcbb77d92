#ifndef PBNLC_EXPERIMENT_HPP
#define PBNLC_EXPERIMENT_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "pbnlc/complexity.hpp"
#include "pbnlc/config.hpp"
#include "pbnlc/features.hpp"
#include "pbnlc/fiber.hpp"
#include "pbnlc/metrics.hpp"
#include "pbnlc/mlp.hpp"
#include "pbnlc/qam.hpp"
#include "pbnlc/rx.hpp"
#include "pbnlc/seed.hpp"
#include "pbnlc/tx.hpp"

namespace pbnlc {

// ---- simulation ----------------------------------------------------------

/// Transmitted symbols and the received waveform before any receiver DSP.
struct SimulatedLink {
  SymbolBlock tx;
  DualPolWaveform rx;
};

inline std::uint64_t power_label(double p_dbm) {
  return static_cast<std::uint64_t>(std::llround(p_dbm * 1000.0));
}

inline BitBlock experiment_bits(const ExperimentConfig& cfg, std::uint64_t seed, DataRole role) {
  const std::size_t n = static_cast<std::size_t>(cfg.n_symbols) * qam64::kBitsPerSymbol;
  const auto r = static_cast<std::uint64_t>(role);
  const auto b = static_cast<std::uint64_t>(SeedRole::bits);
  return {random_bits(n, derive_seed(seed, {b, r, 0})), random_bits(n, derive_seed(seed, {b, r, 1}))};
}

/// tx -> link for one (seed, role, launch power). The bits depend on seed and
/// role only, so every power of a sweep carries the same data.
inline SimulatedLink simulate_link(const ExperimentConfig& cfg, std::uint64_t seed, DataRole role, double p_dbm) {
  const BitBlock bits = experiment_bits(cfg, seed, role);
  SimulatedLink s;
  s.tx = map_qam64(bits, cfg.dsp.baud_rate_hz);
  DualPolWaveform w = build_tx(bits, cfg.dsp, cfg.link, p_dbm);
  SsfmPlan plan = cfg.ssfm;
  plan.noise_seed = derive_seed(seed, {static_cast<std::uint64_t>(SeedRole::noise), static_cast<std::uint64_t>(role),
                                       power_label(p_dbm), cfg.ssfm.noise_seed});
  s.rx = propagate_link(std::move(w), cfg.link, plan);
  return s;
}

/// Linear receiver: remaining dispersion compensation, matched filter,
/// alignment, derotation, normalization.
inline AlignedPairs receive_cdc(const SimulatedLink& s, const ExperimentConfig& cfg) {
  return receive(s.rx, s.tx, cfg.link, cfg.dsp, cfg.dsp.cdc_post_fraction(), cfg.max_lag);
}

/// Back-propagation receiver. DBP inverts the whole link, after which the
/// transmitter's dispersion pre-compensation is undone.
inline AlignedPairs receive_dbp(const SimulatedLink& s, const ExperimentConfig& cfg, int steps_per_span) {
  DualPolWaveform w = dbp(s.rx, cfg.link, steps_per_span);
  w = cdc_filter(std::move(w), cfg.link, cfg.link.total_length_km() * cfg.dsp.cdc_pre_fraction, +1);
  const SymbolBlock rx = matched_filter_decimate(w, cfg.dsp);
  return normalize_pairs(derotate(align(s.tx, rx, cfg.max_lag)));
}

// ---- techniques ----------------------------------------------------------

inline QReport q_interior(const AlignedPairs& p, std::size_t guard) {
  return evaluate_q(interior(p.tx, guard), interior(p.rx, guard));
}

/// LS-fitted conventional PB-NLC on the configured conventional index sets.
inline LsFit fit_conv(const AlignedPairs& train, const ExperimentConfig& cfg, FitTerms terms) {
  const QuintupleSet none;
  const FeatureTable t = extract_features(train, cfg.features.conv_fo_set(),
                                          terms == FitTerms::fo_so ? cfg.features.conv_so_set() : none,
                                          cfg.features.guard());
  return fit_kernel_ls(t, terms);
}

inline SymbolBlock apply_conv(const AlignedPairs& test, const LsFit& fit, const ExperimentConfig& cfg) {
  return apply_conv_pbnlc(test, fit, cfg.features.conv_fo_set(), cfg.features.conv_so_set(), cfg.features.guard());
}

struct TrainedModels {
  MlpModel fo;
  std::optional<MlpModel> so;
  TrainReport fo_report;
  std::optional<TrainReport> so_report;
};

inline TrainConfig train_config_for(const ExperimentConfig& cfg, std::uint64_t seed) {
  TrainConfig tc = cfg.train;
  tc.seed = derive_seed(cfg.train.seed, {seed});
  return tc;
}

/// FO network on rx - tx, then (optionally) the SO network, either on the
/// residual left by the FO network or jointly with it. Starting models may be
/// given (pruned retraining); otherwise fresh models are initialized.
inline TrainedModels train_on_table(const FeatureTable& t, const ExperimentConfig& cfg, std::uint64_t seed,
                                    bool with_so, const MlpModel* fo_start = nullptr,
                                    const MlpModel* so_start = nullptr) {
  const TrainConfig tc = train_config_for(cfg, seed);
  TrainedModels out;
  MlpModel fo0 = fo_start ? *fo_start : init_model(cfg.mlp_spec(t.n_fo), derive_seed(tc.seed, {1}));
  auto [fo, fo_rep] = train(std::move(fo0), fo_view(t, t.target), tc);
  out.fo = std::move(fo);
  out.fo_report = std::move(fo_rep);
  if (!with_so) return out;
  if (t.n_so == 0) throw std::invalid_argument("train_on_table: SO model requested without SO features");
  MlpModel so0 = so_start ? *so_start : init_model(cfg.mlp_spec(t.n_so), derive_seed(tc.seed, {2}), true);
  if (cfg.so_objective == SoObjective::residual) {
    const cvec fo_est = predict(out.fo, t.fo, t.n_fo, t.rows);
    cvec resid(t.rows);
    for (std::size_t r = 0; r < t.rows; ++r) resid[r] = t.target[r] - fo_est[r];
    auto [so, so_rep] = train(std::move(so0), so_view(t, resid), tc);
    out.so = std::move(so);
    out.so_report = std::move(so_rep);
  } else {
    JointResult j = train_joint(std::move(out.fo), std::move(so0), fo_view(t, t.target), so_view(t, t.target), tc);
    out.fo = std::move(j.fo);
    out.so = std::move(j.so);
    out.so_report = std::move(j.report);
  }
  return out;
}

inline TrainedModels train_models(const AlignedPairs& train_pairs, const ExperimentConfig& cfg, std::uint64_t seed,
                                  bool with_so) {
  const QuintupleSet none;
  const FeatureTable t =
      extract_features(train_pairs, cfg.features.fo_set(), with_so ? cfg.features.so_set() : none, cfg.features.guard());
  return train_on_table(t, cfg, seed, with_so);
}

inline SymbolBlock apply_models(const AlignedPairs& test, const TrainedModels& m, const ExperimentConfig& cfg) {
  return compensate(test, m.fo, m.so ? &*m.so : nullptr, cfg.features.fo_set(), cfg.features.so_set(),
                    cfg.features.guard());
}

/// Feature counts and multiplications per symbol of a technique under `cfg`.
struct TechniqueCostInfo {
  std::optional<std::int64_t> fo_features;
  std::optional<std::int64_t> so_features;
  std::optional<std::int64_t> rm_per_symbol;
};

inline TechniqueCostInfo technique_cost(const std::string& technique, const ExperimentConfig& cfg) {
  TechniqueCostInfo c;
  const auto nfo = static_cast<std::int64_t>(cfg.features.fo_set().size());
  const auto nso = static_cast<std::int64_t>(cfg.features.so_set().size());
  const auto cfo = static_cast<std::int64_t>(cfg.features.conv_fo_set().size());
  const auto cso = static_cast<std::int64_t>(cfg.features.conv_so_set().size());
  const auto k = cfg.complexity.conv_mults_per_term;
  if (technique == "NN-NLC") {
    c.fo_features = nfo;
    c.rm_per_symbol = rm_dnn(nfo, cfg.mlp_spec(0));
  } else if (technique == "DNN-SO-PB-NLC") {
    c.fo_features = nfo;
    c.so_features = nso;
    c.rm_per_symbol = rm_dnn(nfo, cfg.mlp_spec(0)) + rm_dnn(nso, cfg.mlp_spec(0));
  } else if (technique == "CONV-FO-PB-NLC") {
    c.fo_features = cfo;
    c.rm_per_symbol = rm_conv_pbnlc(cfo, k);
  } else if (technique == "CONV-SO-PB-NLC") {
    c.fo_features = cfo;
    c.so_features = cso;
    c.rm_per_symbol = rm_conv_pbnlc(cfo + cso, k);
  } else if (technique == "CONV-DBP") {
    DbpCostParams p = cfg.complexity.dbp;
    p.n_spans = cfg.link.n_spans;
    p.steps_per_span = cfg.dbp_steps_per_span;
    c.rm_per_symbol = rm_dbp(p);
  }
  return c;
}

struct TechniqueResult {
  std::string technique;
  QReport q;
};

/// Data of one sweep point: training and held-out receptions.
struct PointData {
  AlignedPairs train;
  AlignedPairs test;
  std::optional<AlignedPairs> test_dbp;
};

inline bool wants(const std::vector<std::string>& techniques, const std::string& t) {
  return std::find(techniques.begin(), techniques.end(), t) != techniques.end();
}

inline PointData simulate_point(const ExperimentConfig& cfg, std::uint64_t seed, double p_dbm,
                                const std::vector<std::string>& techniques) {
  PointData d;
  const SimulatedLink test = simulate_link(cfg, seed, DataRole::test, p_dbm);
  d.test = receive_cdc(test, cfg);
  if (wants(techniques, "CONV-DBP")) d.test_dbp = receive_dbp(test, cfg, cfg.dbp_steps_per_span);
  const bool needs_train = std::any_of(techniques.begin(), techniques.end(),
                                       [](const std::string& t) { return t != "CDC" && t != "CONV-DBP"; });
  if (needs_train) d.train = receive_cdc(simulate_link(cfg, seed, DataRole::train, p_dbm), cfg);
  return d;
}

/// Q of every requested technique on the held-out reception, all measured
/// over the same interior symbols.
inline std::vector<TechniqueResult> evaluate_point(const PointData& d, const ExperimentConfig& cfg, std::uint64_t seed,
                                                   const std::vector<std::string>& techniques) {
  const std::size_t guard = cfg.features.guard();
  const SymbolBlock ref = interior(d.test.tx, guard);
  std::vector<TechniqueResult> out;
  std::optional<TrainedModels> nn, dnn;
  for (const auto& t : techniques) {
    QReport q;
    if (t == "CDC") {
      q = q_interior(d.test, guard);
    } else if (t == "CONV-DBP") {
      if (!d.test_dbp) throw std::invalid_argument("evaluate_point: no DBP reception");
      q = q_interior(*d.test_dbp, guard);
    } else if (t == "CONV-FO-PB-NLC") {
      q = evaluate_q(ref, apply_conv(d.test, fit_conv(d.train, cfg, FitTerms::fo), cfg));
    } else if (t == "CONV-SO-PB-NLC") {
      q = evaluate_q(ref, apply_conv(d.test, fit_conv(d.train, cfg, FitTerms::fo_so), cfg));
    } else if (t == "NN-NLC") {
      if (!nn) nn = train_models(d.train, cfg, seed, false);
      q = evaluate_q(ref, apply_models(d.test, *nn, cfg));
    } else if (t == "DNN-SO-PB-NLC") {
      if (!dnn) dnn = train_models(d.train, cfg, seed, true);
      q = evaluate_q(ref, apply_models(d.test, *dnn, cfg));
    } else {
      throw std::invalid_argument("unknown technique: " + t);
    }
    out.push_back({t, q});
  }
  return out;
}

// ---- parallel map --------------------------------------------------------

/// Runs fn(i) for i in [0, n) on `threads` workers. Results land in their own
/// slots, so the output order never depends on scheduling. The first
/// exception is rethrown after all workers stop.
template <typename T>
std::vector<T> parallel_map(std::size_t n, int threads, const std::function<T(std::size_t)>& fn) {
  std::vector<std::optional<T>> slots(n);
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      {
        std::lock_guard<std::mutex> lk(err_mu);
        if (err) return;
      }
      try {
        slots[i] = fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lk(err_mu);
        if (!err) err = std::current_exception();
      }
    }
  };
  const auto nt = static_cast<std::size_t>(std::max(1, threads));
  if (nt == 1 || n <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(nt, n); ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (err) std::rethrow_exception(err);
  std::vector<T> out;
  out.reserve(n);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

// ---- power sweep ---------------------------------------------------------

struct PowerRow {
  double launch_power_dbm = 0.0;
  std::uint64_t seed = 0;
  std::string technique;
  QReport q;
};

/// Seed-averaged row: q_db is the mean of the per-seed Q values, ber pools
/// the errors of all seeds.
struct PowerSummaryRow {
  double launch_power_dbm = 0.0;
  std::string technique;
  double q_db = 0.0;
  double ber = 0.0;
  std::uint64_t n_errors = 0;
  std::uint64_t n_bits = 0;
  bool low_confidence = false;
  double evm_snr_db = 0.0;
  std::size_t n_seeds = 0;
  TechniqueCostInfo cost;
};

struct PowerSweep {
  std::vector<PowerRow> rows;            // per (power, seed, technique)
  std::vector<PowerSummaryRow> summary;  // per (power, technique)
};

inline std::size_t technique_rank(const std::string& t) {
  const auto& k = known_techniques();
  return static_cast<std::size_t>(std::find(k.begin(), k.end(), t) - k.begin());
}

inline std::vector<PowerSummaryRow> summarize(const std::vector<PowerRow>& rows, const ExperimentConfig& cfg) {
  std::map<std::pair<double, std::size_t>, PowerSummaryRow> acc;
  for (const auto& r : rows) {
    auto& s = acc[{r.launch_power_dbm, technique_rank(r.technique)}];
    s.launch_power_dbm = r.launch_power_dbm;
    s.technique = r.technique;
    s.q_db += r.q.q_db;
    s.evm_snr_db += r.q.evm_snr_db;
    s.n_errors += r.q.n_errors;
    s.n_bits += r.q.n_bits;
    s.n_seeds += 1;
  }
  std::vector<PowerSummaryRow> out;
  for (auto& [key, s] : acc) {
    s.q_db /= static_cast<double>(s.n_seeds);
    s.evm_snr_db /= static_cast<double>(s.n_seeds);
    s.ber = static_cast<double>(s.n_errors) / static_cast<double>(s.n_bits);
    s.low_confidence = s.n_errors < QReport::kMinErrors;
    s.cost = technique_cost(s.technique, cfg);
    out.push_back(s);
  }
  return out;
}

inline PowerSweep sweep_power(const ExperimentConfig& cfg) {
  struct Task {
    double p;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (double p : cfg.powers_dbm)
    for (std::uint64_t s : cfg.seeds) tasks.push_back({p, s});
  const auto per_task = parallel_map<std::vector<TechniqueResult>>(tasks.size(), cfg.threads, [&](std::size_t i) {
    const PointData d = simulate_point(cfg, tasks[i].seed, tasks[i].p, cfg.techniques);
    return evaluate_point(d, cfg, tasks[i].seed, cfg.techniques);
  });
  PowerSweep out;
  for (std::size_t i = 0; i < tasks.size(); ++i)
    for (const auto& r : per_task[i]) out.rows.push_back({tasks[i].p, tasks[i].seed, r.technique, r.q});
  std::stable_sort(out.rows.begin(), out.rows.end(), [](const PowerRow& a, const PowerRow& b) {
    if (a.launch_power_dbm != b.launch_power_dbm) return a.launch_power_dbm < b.launch_power_dbm;
    if (a.seed != b.seed) return a.seed < b.seed;
    return technique_rank(a.technique) < technique_rank(b.technique);
  });
  out.summary = summarize(out.rows, cfg);
  return out;
}

// ---- prune sweep ---------------------------------------------------------

struct PruneRow {
  double threshold_db = 0.0;  // -infinity for the unpruned reference
  std::uint64_t seed = 0;
  std::size_t surviving_fo = 0;
  std::size_t surviving_so = 0;
  std::int64_t rm_per_symbol = 0;
  double q_db = 0.0;
  double delta_q_db = 0.0;
};

/// Prunes both networks of a trained pair at `threshold_db` and retrains the
/// surviving weights on the same training table.
inline TrainedModels prune_and_retrain(const TrainedModels& base, const FeatureTable& t, const ExperimentConfig& cfg,
                                       std::uint64_t seed, double threshold_db) {
  const MlpModel fo = prune(base.fo, threshold_db).model;
  if (!base.so) return train_on_table(t, cfg, seed, false, &fo);
  const MlpModel so = prune(*base.so, threshold_db).model;
  return train_on_table(t, cfg, seed, true, &fo, &so);
}

/// DNN-SO-PB-NLC at cfg.prune_power_dbm: the unpruned pair is trained once
/// per seed, then each threshold prunes it and retrains. Rows are sorted by
/// threshold then seed; the first row of each seed is the unpruned model.
inline std::vector<PruneRow> sweep_prune(const ExperimentConfig& cfg) {
  std::vector<double> thresholds = cfg.prune_thresholds_db;
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  const MlpSpec spec = cfg.mlp_spec(0);
  const auto per_seed = parallel_map<std::vector<PruneRow>>(cfg.seeds.size(), cfg.threads, [&](std::size_t i) {
    const std::uint64_t seed = cfg.seeds[i];
    const std::size_t guard = cfg.features.guard();
    const AlignedPairs train_pairs = receive_cdc(simulate_link(cfg, seed, DataRole::train, cfg.prune_power_dbm), cfg);
    const AlignedPairs test = receive_cdc(simulate_link(cfg, seed, DataRole::test, cfg.prune_power_dbm), cfg);
    const SymbolBlock ref = interior(test.tx, guard);
    const FeatureTable t = extract_features(train_pairs, cfg.features.fo_set(), cfg.features.so_set(), guard);
    const TrainedModels base = train_on_table(t, cfg, seed, true);
    const double q0 = evaluate_q(ref, apply_models(test, base, cfg)).q_db;
    std::vector<PruneRow> rows;
    auto row = [&](double th, const TrainedModels& m, double q) {
      PruneRow r;
      r.threshold_db = th;
      r.seed = seed;
      r.surviving_fo = surviving_feature_count(m.fo);
      r.surviving_so = surviving_feature_count(*m.so);
      r.rm_per_symbol = rm_dnn(static_cast<std::int64_t>(r.surviving_fo), spec) +
                        rm_dnn(static_cast<std::int64_t>(r.surviving_so), spec);
      r.q_db = q;
      r.delta_q_db = delta_q(q0, q);
      return r;
    };
    rows.push_back(row(-std::numeric_limits<double>::infinity(), base, q0));
    for (double th : thresholds) {
      const TrainedModels m = prune_and_retrain(base, t, cfg, seed, th);
      rows.push_back(row(th, m, evaluate_q(ref, apply_models(test, m, cfg)).q_db));
    }
    return rows;
  });
  std::vector<PruneRow> out;
  for (const auto& v : per_seed) out.insert(out.end(), v.begin(), v.end());
  std::stable_sort(out.begin(), out.end(), [](const PruneRow& a, const PruneRow& b) {
    if (a.threshold_db != b.threshold_db) return a.threshold_db < b.threshold_db;
    return a.seed < b.seed;
  });
  return out;
}

// ---- complexity ----------------------------------------------------------

/// Table of the configured techniques. "@pruned" selects the pruned feature
/// counts of the two network techniques.
inline ComplexityReport complexity(const ComplexityConfig& c, const MlpSpec& spec = MlpSpec{}) {
  std::vector<TechniqueCost> costs;
  for (const auto& t : c.techniques) {
    std::int64_t rm = 0;
    if (t == "NN-NLC") rm = rm_dnn(c.fo_unpruned_features, spec);
    else if (t == "NN-NLC@pruned") rm = rm_dnn(c.fo_pruned_features, spec);
    else if (t == "DNN-SO-PB-NLC") rm = rm_dnn(c.fo_unpruned_features, spec) + rm_dnn(c.so_unpruned_features, spec);
    else if (t == "DNN-SO-PB-NLC@pruned") rm = rm_dnn(c.fo_pruned_features, spec) + rm_dnn(c.so_pruned_features, spec);
    else if (t == "CONV-FO-PB-NLC") rm = rm_conv_pbnlc(c.conv_fo_terms, c.conv_mults_per_term);
    else if (t == "CONV-SO-PB-NLC") rm = rm_conv_pbnlc(c.conv_so_terms, c.conv_mults_per_term);
    else if (t == "CONV-DBP") rm = rm_dbp(c.dbp);
    else throw ConfigError("unknown complexity technique: " + t);
    costs.push_back({t, rm});
  }
  return complexity_report(costs, "CONV-DBP");
}

}  // namespace pbnlc

#endif  // PBNLC_EXPERIMENT_HPP

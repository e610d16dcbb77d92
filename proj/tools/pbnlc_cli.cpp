// pbnlc: simulate links, train and prune compensators, run sweeps.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include "pbnlc/config.hpp"
#include "pbnlc/experiment.hpp"
#include "pbnlc/io.hpp"
#include "pbnlc/verify.hpp"

namespace fs = std::filesystem;
using namespace pbnlc;

namespace {

struct CommonOptions {
  std::string config_path;
  std::string out_dir;
  std::vector<std::string> sets;
  std::vector<std::string> techniques;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

void add_common(CLI::App* app, CommonOptions& o) {
  app->add_option("--config", o.config_path, "JSON config file")->check(CLI::ExistingFile);
  app->add_option("--out", o.out_dir, "output directory (default: $PBNLC_OUT or ./out)");
  app->add_option("--seed", o.seed, "single seed, replaces experiment.seeds");
  app->add_option("--threads", o.threads, "worker threads");
  app->add_option("--technique", o.techniques, "technique to run (repeatable)");
  app->add_option("--set", o.sets, "config override path=value (repeatable)");
}

ExperimentConfig resolve(const CommonOptions& o) {
  const json file = o.config_path.empty() ? json::object() : read_json_file(o.config_path);
  std::vector<std::pair<std::string, std::string>> flags;
  for (const auto& s : o.sets) flags.push_back(split_assignment(s));
  if (o.seed) flags.emplace_back("experiment.seeds", "[" + std::to_string(*o.seed) + "]");
  if (o.threads) flags.emplace_back("experiment.threads", std::to_string(*o.threads));
  if (!o.techniques.empty()) flags.emplace_back("experiment.techniques", json(o.techniques).dump());
  return load_config(file, env_overrides(), flags);
}

fs::path out_dir(const CommonOptions& o) {
  if (!o.out_dir.empty()) return o.out_dir;
  if (const char* e = std::getenv("PBNLC_OUT")) return e;
  return "out";
}

json base_manifest(const ExperimentConfig& cfg, const std::string& command) {
  return json{{"command", command},
              {"config", cfg},
              {"seeds", cfg.seeds},
              {"index_sets",
               {{"fo", index_set_manifest(cfg.features.fo_set())},
                {"so", index_set_manifest(cfg.features.so_set())},
                {"conv_fo", index_set_manifest(cfg.features.conv_fo_set())},
                {"conv_so", index_set_manifest(cfg.features.conv_so_set())},
                {"fo_count_halved",
                 build_triplet_set(cfg.features.fo_window, cfg.features.fo_product_limit, true).size()},
                {"fo_count_full",
                 build_triplet_set(cfg.features.fo_window, cfg.features.fo_product_limit, false).size()},
                {"guard", cfg.features.guard()}}}};
}

std::string opt_str(const std::optional<std::int64_t>& v) { return v ? std::to_string(*v) : ""; }

std::string dataset_stem(double p, std::uint64_t seed, DataRole role) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "p%+.2fdBm_seed%llu_%s", p, static_cast<unsigned long long>(seed),
                role == DataRole::train ? "train" : "test");
  return buf;
}

int cmd_simulate(const CommonOptions& o) {
  const ExperimentConfig cfg = resolve(o);
  const fs::path dir = out_dir(o);
  struct Task {
    double p;
    std::uint64_t seed;
    DataRole role;
  };
  std::vector<Task> tasks;
  for (double p : cfg.powers_dbm)
    for (std::uint64_t s : cfg.seeds)
      for (DataRole r : {DataRole::train, DataRole::test}) tasks.push_back({p, s, r});
  const auto hashes = parallel_map<json>(tasks.size(), cfg.threads, [&](std::size_t i) {
    const Task& t = tasks[i];
    const AlignedPairs pairs = receive_cdc(simulate_link(cfg, t.seed, t.role, t.p), cfg);
    const std::string stem = dataset_stem(t.p, t.seed, t.role);
    const json meta{{"launch_power_dbm", t.p},
                    {"seed", t.seed},
                    {"role", t.role == DataRole::train ? "train" : "test"},
                    {"receiver", "CDC"},
                    {"config", cfg}};
    const std::string h = save_dataset(dir / "datasets" / stem, pairs, meta);
    return json{{"file", "datasets/" + stem + ".json"}, {"payload_hash", h}, {"launch_power_dbm", t.p},
                {"seed", t.seed}, {"role", meta["role"]}, {"n_symbols", pairs.size()}};
  });
  json m = base_manifest(cfg, "simulate");
  m["datasets"] = hashes;
  const std::string mh = write_manifest(dir / "manifest.json", m);
  std::cout << "wrote " << tasks.size() << " datasets to " << dir.string() << " (manifest " << mh << ")\n";
  return 0;
}

json report_json(const TrainReport& r) {
  return json{{"epochs_run", r.epochs_run},         {"best_epoch", r.best_epoch},
              {"initial_val_mse", r.initial_val_mse}, {"final_train_mse", r.final_train_mse},
              {"final_val_mse", r.final_val_mse},     {"loss_curve", r.loss_curve}};
}

json checkpoint_meta(const ExperimentConfig& cfg, const std::string& role, const std::string& dataset_hash,
                     std::size_t n_features) {
  return json{{"role", role},
              {"train_dataset_hash", dataset_hash},
              {"n_features", n_features},
              {"features", cfg.features},
              {"so_objective", cfg.so_objective == SoObjective::residual ? "residual" : "joint"}};
}

int write_models(const ExperimentConfig& cfg, const fs::path& dir, const TrainedModels& m, const std::string& ds_hash,
                 const std::string& command, json extra) {
  json ckpts = json::object();
  ckpts["fo"] = {{"file", "fo.ckpt"},
                 {"hash", save_checkpoint(dir / "fo.ckpt", m.fo, checkpoint_meta(cfg, "fo", ds_hash,
                                                                                  cfg.features.fo_set().size()))},
                 {"surviving_features", surviving_feature_count(m.fo)}};
  json reports{{"fo", report_json(m.fo_report)}};
  if (m.so) {
    ckpts["so"] = {{"file", "so.ckpt"},
                   {"hash", save_checkpoint(dir / "so.ckpt", *m.so, checkpoint_meta(cfg, "so", ds_hash,
                                                                                    cfg.features.so_set().size()))},
                   {"surviving_features", surviving_feature_count(*m.so)}};
    reports["so"] = report_json(*m.so_report);
  } else {
    std::error_code ec;
    fs::remove(dir / "so.ckpt", ec);
  }
  write_text(dir / "train_report.json", reports.dump(2) + "\n");
  json man = base_manifest(cfg, command);
  man["train_dataset_hash"] = ds_hash;
  man["checkpoints"] = ckpts;
  for (auto& [k, v] : extra.items()) man[k] = v;
  const std::string mh = write_manifest(dir / "manifest.json", man);
  std::cout << "fo: val mse " << fmt_num(m.fo_report.final_val_mse) << " after " << m.fo_report.epochs_run
            << " epochs";
  if (m.so_report) std::cout << "; so: val mse " << fmt_num(m.so_report->final_val_mse) << " after "
                             << m.so_report->epochs_run << " epochs";
  std::cout << "\nwrote checkpoints to " << dir.string() << " (manifest " << mh << ")\n";
  return 0;
}

int cmd_train(const CommonOptions& o, const std::string& dataset, bool fo_only) {
  const ExperimentConfig cfg = resolve(o);
  const Dataset d = load_dataset(dataset);
  if (d.meta.value("role", std::string()) == "test")
    std::cerr << "warning: training on a dataset labelled 'test'\n";
  const TrainedModels m = train_models(d.pairs, cfg, d.meta.value("seed", std::uint64_t{1}), !fo_only);
  return write_models(cfg, out_dir(o), m, d.payload_hash, "train", json::object());
}

int cmd_prune(const CommonOptions& o, const std::string& dataset, const std::string& fo_path, const std::string& so_path,
              double threshold_db) {
  const ExperimentConfig cfg = resolve(o);
  const Dataset d = load_dataset(dataset);
  TrainedModels base;
  base.fo = load_checkpoint(fo_path).model;
  if (!so_path.empty()) base.so = load_checkpoint(so_path).model;
  const QuintupleSet none;
  const FeatureTable t = extract_features(d.pairs, cfg.features.fo_set(), base.so ? cfg.features.so_set() : none,
                                          cfg.features.guard());
  const TrainedModels m = prune_and_retrain(base, t, cfg, d.meta.value("seed", std::uint64_t{1}), threshold_db);
  return write_models(cfg, out_dir(o), m, d.payload_hash, "prune", json{{"threshold_db", threshold_db}});
}

int cmd_evaluate(const CommonOptions& o, const std::string& dataset, const std::string& fo_path,
                 const std::string& so_path) {
  const ExperimentConfig cfg = resolve(o);
  const Dataset d = load_dataset(dataset);
  const Checkpoint fo = load_checkpoint(fo_path);
  check_not_training_data(fo.meta, d.payload_hash);
  TrainedModels m;
  m.fo = fo.model;
  if (!so_path.empty()) {
    const Checkpoint so = load_checkpoint(so_path);
    check_not_training_data(so.meta, d.payload_hash);
    m.so = so.model;
  }
  const std::size_t guard = cfg.features.guard();
  const QReport cdc = q_interior(d.pairs, guard);
  const QReport nn = evaluate_q(interior(d.pairs.tx, guard), apply_models(d.pairs, m, cfg));
  std::cout << "CDC: Q " << fmt_num(cdc.q_db) << " dB, BER " << fmt_num(cdc.ber) << "\n"
            << (m.so ? "DNN-SO-PB-NLC" : "NN-NLC") << ": Q " << fmt_num(nn.q_db) << " dB, BER " << fmt_num(nn.ber)
            << (nn.low_confidence ? " (low confidence)" : "") << "\n";
  return 0;
}

int cmd_sweep_power(const CommonOptions& o) {
  const ExperimentConfig cfg = resolve(o);
  const fs::path dir = out_dir(o);
  const std::string mh = write_manifest(dir / "manifest.json", base_manifest(cfg, "sweep-power"));
  const PowerSweep sw = sweep_power(cfg);
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : sw.summary)
    rows.push_back({mh, fmt_num(r.launch_power_dbm), r.technique, fmt_num(r.q_db), fmt_num(r.ber),
                    std::to_string(r.n_errors), std::to_string(r.n_bits), r.low_confidence ? "1" : "0",
                    fmt_num(r.evm_snr_db), std::to_string(r.n_seeds), opt_str(r.cost.fo_features),
                    opt_str(r.cost.so_features), opt_str(r.cost.rm_per_symbol)});
  write_text(dir / "sweep_power.csv",
             to_csv({"manifest_hash", "launch_power_dbm", "technique", "q_db", "ber", "n_errors", "n_bits",
                     "low_confidence", "evm_snr_db", "n_seeds", "fo_features", "so_features", "rm_per_symbol"},
                    rows));
  rows.clear();
  for (const auto& r : sw.rows)
    rows.push_back({mh, fmt_num(r.launch_power_dbm), std::to_string(r.seed), r.technique, fmt_num(r.q.q_db),
                    fmt_num(r.q.ber), std::to_string(r.q.n_errors), std::to_string(r.q.n_bits),
                    r.q.low_confidence ? "1" : "0", fmt_num(r.q.evm_snr_db)});
  write_text(dir / "sweep_power_seeds.csv",
             to_csv({"manifest_hash", "launch_power_dbm", "seed", "technique", "q_db", "ber", "n_errors", "n_bits",
                     "low_confidence", "evm_snr_db"},
                    rows));
  for (const auto& r : sw.summary)
    std::printf("%+6.2f dBm  %-15s Q %7.3f dB%s\n", r.launch_power_dbm, r.technique.c_str(), r.q_db,
                r.low_confidence ? "  (low confidence)" : "");
  return 0;
}

int cmd_sweep_prune(const CommonOptions& o) {
  const ExperimentConfig cfg = resolve(o);
  const fs::path dir = out_dir(o);
  const std::string mh = write_manifest(dir / "manifest.json", base_manifest(cfg, "sweep-prune"));
  const auto rows_in = sweep_prune(cfg);
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : rows_in)
    rows.push_back({mh, std::isinf(r.threshold_db) ? "-inf" : fmt_num(r.threshold_db), std::to_string(r.seed),
                    "DNN-SO-PB-NLC", fmt_num(cfg.prune_power_dbm), fmt_num(r.q_db), fmt_num(r.delta_q_db),
                    std::to_string(r.surviving_fo), std::to_string(r.surviving_so), std::to_string(r.rm_per_symbol)});
  write_text(dir / "sweep_prune.csv",
             to_csv({"manifest_hash", "threshold_db", "seed", "technique", "launch_power_dbm", "q_db", "delta_q_db",
                     "surviving_fo", "surviving_so", "rm_per_symbol"},
                    rows));
  for (const auto& r : rows_in)
    std::printf("%7.1f dB  seed %llu  FO %4zu  SO %4zu  rm %6lld  Q %7.3f  dQ %+6.3f\n", r.threshold_db,
                static_cast<unsigned long long>(r.seed), r.surviving_fo, r.surviving_so,
                static_cast<long long>(r.rm_per_symbol), r.q_db, r.delta_q_db);
  return 0;
}

int cmd_complexity(const CommonOptions& o) {
  const ExperimentConfig cfg = resolve(o);
  const fs::path dir = out_dir(o);
  const ComplexityReport rep = complexity(cfg.complexity, cfg.mlp_spec(0));
  json man = base_manifest(cfg, "complexity");
  const std::string mh = write_manifest(dir / "manifest.json", man);
  json j = complexity_json(rep);
  j["manifest_hash"] = mh;
  write_text(dir / "complexity.csv", complexity_csv(rep));
  write_text(dir / "complexity.json", j.dump(2) + "\n");
  for (const auto& r : rep.rows) {
    std::printf("%-22s %8lld", r.technique.c_str(), static_cast<long long>(r.rm_per_symbol));
    if (r.delta_vs_reference) std::printf("  delta %6lld  (%.2f%%)", static_cast<long long>(*r.delta_vs_reference), *r.reduction_pct);
    std::printf("\n");
  }
  return 0;
}

int cmd_verify() {
  int failed = 0;
  for (const auto& c : verify_invariants()) {
    std::printf("[%s] %s: %s\n", c.passed ? "PASS" : "FAIL", c.name.c_str(), c.detail.c_str());
    failed += c.passed ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Perturbation-based nonlinearity compensation experiments"};
  app.require_subcommand(1);
  CommonOptions o;

  auto* sim = app.add_subcommand("simulate", "simulate tx -> link -> rx datasets for every power and seed");
  add_common(sim, o);

  std::string dataset, fo_ckpt, so_ckpt;
  bool fo_only = false;
  double threshold_db = -15.0;
  auto* tr = app.add_subcommand("train", "train the FO and SO networks on a dataset");
  add_common(tr, o);
  tr->add_option("--dataset", dataset, "training dataset sidecar (.json)")->required();
  tr->add_flag("--fo-only", fo_only, "train only the first-order network (NN-NLC)");

  auto* pr = app.add_subcommand("prune", "prune checkpoints at a threshold and retrain");
  add_common(pr, o);
  pr->add_option("--dataset", dataset, "training dataset sidecar (.json)")->required();
  pr->add_option("--fo", fo_ckpt, "FO checkpoint")->required();
  pr->add_option("--so", so_ckpt, "SO checkpoint");
  pr->add_option("--threshold", threshold_db, "threshold in dB relative to the largest weight");

  auto* ev = app.add_subcommand("evaluate", "Q of checkpoints on a held-out dataset");
  add_common(ev, o);
  ev->add_option("--dataset", dataset, "held-out dataset sidecar (.json)")->required();
  ev->add_option("--fo", fo_ckpt, "FO checkpoint")->required();
  ev->add_option("--so", so_ckpt, "SO checkpoint");

  auto* sp = app.add_subcommand("sweep-power", "Q versus launch power for every technique");
  add_common(sp, o);
  auto* sr = app.add_subcommand("sweep-prune", "pruning-threshold sweep of DNN-SO-PB-NLC");
  add_common(sr, o);
  auto* cx = app.add_subcommand("complexity", "real multiplications per symbol table");
  add_common(cx, o);
  auto* vf = app.add_subcommand("verify", "run the invariant checks");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*sim) return cmd_simulate(o);
    if (*tr) return cmd_train(o, dataset, fo_only);
    if (*pr) return cmd_prune(o, dataset, fo_ckpt, so_ckpt, threshold_db);
    if (*ev) return cmd_evaluate(o, dataset, fo_ckpt, so_ckpt);
    if (*sp) return cmd_sweep_power(o);
    if (*sr) return cmd_sweep_prune(o);
    if (*cx) return cmd_complexity(o);
    if (*vf) return cmd_verify();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

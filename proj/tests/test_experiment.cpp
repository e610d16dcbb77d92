#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "pbnlc/config.hpp"
#include "pbnlc/experiment.hpp"
#include "pbnlc/io.hpp"

using namespace pbnlc;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.link.n_spans = 2;
  c.dsp.oversampling = 4;
  c.ssfm.steps_per_span = 4;
  c.n_symbols = 2048;
  c.max_lag = 16;
  c.powers_dbm = {0.0, 2.0};
  c.seeds = {1};
  c.train.max_epochs = 5;
  c.train.batch_size = 256;
  c.features.fo_window = 6;
  c.features.fo_product_limit = 6;
  c.features.so_outer_window = 1;
  c.features.so_outer_limit = 1;
  c.features.so_inner_window = 2;
  c.features.so_inner_limit = 2;
  c.features.conv_fo_window = 4;
  c.features.conv_fo_product_limit = 4;
  c.prune_thresholds_db = {-20.0, -10.0};
  c.prune_power_dbm = 2.0;
  c.techniques = {"CDC", "CONV-DBP", "CONV-FO-PB-NLC", "CONV-SO-PB-NLC", "NN-NLC", "DNN-SO-PB-NLC"};
  c.validate();
  return c;
}

// The same configuration as --set flags for the CLI.
std::string small_flags() {
  return "--set link.n_spans=2 --set dsp.oversampling=4 --set ssfm.steps_per_span=4 "
         "--set experiment.n_symbols=2048 --set experiment.max_lag=16 --set 'experiment.powers_dbm=[0,2]' "
         "--set train.max_epochs=5 --set train.batch_size=256 --set features.fo_window=6 "
         "--set features.fo_product_limit=6 --set features.so_outer_window=1 --set features.so_outer_limit=1 "
         "--set features.so_inner_window=2 --set features.so_inner_limit=2 --set features.conv_fo_window=4 "
         "--set features.conv_fo_product_limit=4 --set 'experiment.prune_thresholds_db=[-20,-10]'";
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("pbnlc_test_experiment_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int cli(const std::string& args) {
  const std::string cmd = std::string(PBNLC_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string l;
  while (std::getline(ss, l)) out.push_back(l);
  return out;
}

}  // namespace

TEST(Experiment, BackToBackWithoutSpans) {
  ExperimentConfig c = small_config();
  c.link.n_spans = 0;
  const AlignedPairs p = receive_cdc(simulate_link(c, 1, DataRole::test, 0.0), c);
  EXPECT_EQ(p.size(), static_cast<std::size_t>(c.n_symbols));
  EXPECT_LT(evm(p.tx, p.rx), 1e-6);
}

TEST(Experiment, DataDependsOnSeedAndRoleOnly) {
  const ExperimentConfig c = small_config();
  EXPECT_EQ(experiment_bits(c, 1, DataRole::train).x_bits, experiment_bits(c, 1, DataRole::train).x_bits);
  EXPECT_NE(experiment_bits(c, 1, DataRole::train).x_bits, experiment_bits(c, 1, DataRole::test).x_bits);
  EXPECT_NE(experiment_bits(c, 1, DataRole::test).x_bits, experiment_bits(c, 2, DataRole::test).x_bits);
  const SimulatedLink a = simulate_link(c, 1, DataRole::test, 0.0);
  const SimulatedLink b = simulate_link(c, 1, DataRole::test, 2.0);
  EXPECT_EQ(a.tx.x, b.tx.x);
}

TEST(Experiment, PowerSweepShapeAndDeterminism) {
  ExperimentConfig c = small_config();
  c.seeds = {1, 2};
  const PowerSweep a = sweep_power(c);
  ASSERT_EQ(a.rows.size(), c.powers_dbm.size() * c.seeds.size() * c.techniques.size());
  ASSERT_EQ(a.summary.size(), c.powers_dbm.size() * c.techniques.size());
  for (const auto& s : a.summary) EXPECT_EQ(s.n_seeds, 2u);
  c.threads = 2;
  const PowerSweep b = sweep_power(c);
  ASSERT_EQ(b.rows.size(), a.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(a.rows[i].technique, b.rows[i].technique);
    EXPECT_EQ(a.rows[i].q.q_db, b.rows[i].q.q_db);
    EXPECT_EQ(a.rows[i].q.n_errors, b.rows[i].q.n_errors);
  }
  // Summary q is the mean over seeds.
  const double mean = 0.5 * (a.rows[0].q.q_db + a.rows[c.techniques.size()].q.q_db);
  EXPECT_NEAR(a.summary[0].q_db, mean, 1e-12);
}

TEST(Experiment, TechniquesShareTheMeasurementWindow) {
  const ExperimentConfig c = small_config();
  const PointData d = simulate_point(c, 1, 1.0, c.techniques);
  const auto r = evaluate_point(d, c, 1, c.techniques);
  ASSERT_EQ(r.size(), c.techniques.size());
  for (const auto& t : r) EXPECT_EQ(t.q.n_bits, r.front().q.n_bits) << t.technique;
}

TEST(Experiment, PruneSweepReferenceRow) {
  const ExperimentConfig c = small_config();
  const auto rows = sweep_prune(c);
  ASSERT_EQ(rows.size(), 1 + c.prune_thresholds_db.size());
  EXPECT_TRUE(std::isinf(rows[0].threshold_db) && rows[0].threshold_db < 0);
  EXPECT_EQ(rows[0].delta_q_db, 0.0);
  const MlpSpec spec = c.mlp_spec(0);
  for (const auto& r : rows) {
    EXPECT_EQ(r.rm_per_symbol, rm_dnn(static_cast<std::int64_t>(r.surviving_fo), spec) +
                                   rm_dnn(static_cast<std::int64_t>(r.surviving_so), spec));
    EXPECT_NEAR(r.delta_q_db, rows[0].q_db - r.q_db, 1e-12);
  }
  EXPECT_EQ(rows[0].surviving_fo, c.features.fo_set().size());
  EXPECT_EQ(rows[0].surviving_so, c.features.so_set().size());
  EXPECT_LE(rows[2].surviving_fo, rows[1].surviving_fo);
  EXPECT_LE(rows[2].surviving_so, rows[1].surviving_so);
}

TEST(Experiment, ComplexityTable) {
  const ComplexityReport r = complexity(ComplexityConfig{});
  ASSERT_EQ(r.rows.size(), 7u);
  EXPECT_EQ(r.rows[3].technique, "DNN-SO-PB-NLC@pruned");
  EXPECT_EQ(r.rows[3].rm_per_symbol, 1704);
  EXPECT_EQ(r.rows[6].rm_per_symbol, 2235);
  EXPECT_EQ(*r.rows[3].delta_vs_reference, 531);
  ComplexityConfig empty;
  empty.techniques.clear();
  EXPECT_TRUE(complexity(empty).rows.empty());
  ComplexityConfig bad;
  bad.techniques = {"MAGIC"};
  EXPECT_THROW(complexity(bad), ConfigError);
}

TEST(Cli, SimulateIsByteIdentical) {
  const fs::path a = scratch("sim_a"), b = scratch("sim_b");
  ASSERT_EQ(cli("simulate --out " + a.string() + " " + small_flags()), 0);
  ASSERT_EQ(cli("simulate --out " + b.string() + " " + small_flags()), 0);
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(a / "datasets")) {
    EXPECT_EQ(slurp(e.path()), slurp(b / "datasets" / e.path().filename())) << e.path();
    ++n;
  }
  EXPECT_EQ(n, 2u * 2u * 2u * 1u);
  EXPECT_EQ(read_json_file((a / "manifest.json").string())["manifest_hash"],
            read_json_file((b / "manifest.json").string())["manifest_hash"]);
}

TEST(Cli, SweepPowerCsv) {
  const fs::path a = scratch("sp_a"), b = scratch("sp_b");
  const std::string t = " --technique CDC --technique CONV-FO-PB-NLC --technique NN-NLC ";
  ASSERT_EQ(cli("sweep-power --out " + a.string() + t + small_flags()), 0);
  ASSERT_EQ(cli("sweep-power --out " + b.string() + t + small_flags()), 0);
  const std::string csv = slurp(a / "sweep_power.csv");
  EXPECT_EQ(csv, slurp(b / "sweep_power.csv"));
  EXPECT_EQ(slurp(a / "sweep_power_seeds.csv"), slurp(b / "sweep_power_seeds.csv"));
  EXPECT_EQ(lines(csv).size(), 1u + 2u * 3u);
  EXPECT_EQ(lines(csv)[0].rfind("manifest_hash,launch_power_dbm,technique,q_db", 0), 0u);
}

TEST(Cli, TrainEvaluateAndRefusal) {
  const fs::path d = scratch("te_data"), m = scratch("te_model"), p = scratch("te_pruned");
  ASSERT_EQ(cli("simulate --out " + d.string() + " " + small_flags() + " --set 'experiment.powers_dbm=[1]'"), 0);
  const std::string train = (d / "datasets" / "p+1.00dBm_seed1_train.json").string();
  const std::string test = (d / "datasets" / "p+1.00dBm_seed1_test.json").string();
  ASSERT_TRUE(fs::exists(train) && fs::exists(test));
  ASSERT_EQ(cli("train --out " + m.string() + " --dataset " + train + " " + small_flags()), 0);
  ASSERT_TRUE(fs::exists(m / "fo.ckpt") && fs::exists(m / "so.ckpt"));
  const std::string ck = " --fo " + (m / "fo.ckpt").string() + " --so " + (m / "so.ckpt").string() + " ";
  EXPECT_EQ(cli("evaluate --dataset " + test + ck + small_flags()), 0);
  EXPECT_NE(cli("evaluate --dataset " + train + ck + small_flags()), 0);
  ASSERT_EQ(cli("prune --out " + p.string() + " --dataset " + train + ck + "--threshold -10 " + small_flags()), 0);
  const Checkpoint c = load_checkpoint(p / "fo.ckpt");
  std::size_t kept = 0;
  for (auto v : c.model.layers[0].mask) kept += v;
  EXPECT_LT(kept, c.model.layers[0].mask.size());
}

TEST(Cli, ComplexityAndVerify) {
  const fs::path a = scratch("cx"), e = scratch("cx_empty");
  ASSERT_EQ(cli("complexity --out " + a.string()), 0);
  const json j = read_json_file((a / "complexity.json").string());
  EXPECT_EQ(j["rows"].size(), 7u);
  EXPECT_EQ(lines(slurp(a / "complexity.csv")).size(), 4u);
  EXPECT_EQ(cli("complexity --out " + e.string() + " --set 'complexity.techniques=[]'"), 0);
  EXPECT_TRUE(read_json_file((e / "complexity.json").string())["rows"].empty());
  EXPECT_EQ(cli("verify"), 0);
  EXPECT_NE(cli("sweep-power --set link.bogus=1"), 0);
}

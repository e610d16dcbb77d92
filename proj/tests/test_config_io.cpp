#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <limits>

#include "pbnlc/config.hpp"
#include "pbnlc/io.hpp"
#include "pbnlc/mlp.hpp"
#include "pbnlc/qam.hpp"

using namespace pbnlc;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("pbnlc_test_config_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

AlignedPairs some_pairs(std::size_t n) {
  AlignedPairs p;
  p.tx = map_qam64({random_bits(6 * n, 1), random_bits(6 * n, 2)}, 32e9);
  p.rx = p.tx;
  for (int k = 0; k < 2; ++k)
    for (std::size_t i = 0; i < n; ++i) p.rx.pol(k)[i] *= std::polar(1.0 + 1e-3 * static_cast<double>(i), 0.1 * k);
  p.lag = 17;
  p.phase_rad[0] = 0.25;
  p.phase_rad[1] = -0.5;
  p.scale[0] = 1.125;
  p.scale[1] = 0.875;
  return p;
}

}  // namespace

TEST(Config, DefaultsRoundTrip) {
  const ExperimentConfig d;
  EXPECT_EQ(d.link.n_spans, 15);
  EXPECT_EQ(d.features.fo_window, 32);
  EXPECT_EQ(d.hidden, (std::vector<int>{2, 10}));
  const ExperimentConfig back = load_config(json(d), {}, {});
  EXPECT_EQ(json(back), json(d));
  EXPECT_EQ(json(load_config(json(), {}, {})), json(d));
}

TEST(Config, DottedPaths) {
  json doc = json::object();
  set_path(doc, "link.n_spans", "3");
  set_path(doc, "experiment.powers_dbm", "[0, 1.5]");
  set_path(doc, "mlp.activation", "identity");
  EXPECT_EQ(doc["link"]["n_spans"], 3);
  EXPECT_EQ(doc["mlp"]["activation"], "identity");
  const ExperimentConfig c = load_config(doc, {}, {});
  EXPECT_EQ(get_path(c, "link.n_spans"), 3);
  EXPECT_EQ(get_path(c, "experiment.powers_dbm"), json({0.0, 1.5}));
  EXPECT_THROW(get_path(c, "link.nope"), ConfigError);
  EXPECT_THROW(set_path(doc, "", "1"), ConfigError);
  EXPECT_EQ(split_assignment("a.b=x=y"), std::make_pair(std::string("a.b"), std::string("x=y")));
  EXPECT_THROW(split_assignment("novalue"), ConfigError);
  EXPECT_THROW(split_assignment("=3"), ConfigError);
}

TEST(Config, Precedence) {
  const json file = {{"link", {{"n_spans", 2}, {"span_length_km", 60.0}}}, {"experiment", {{"threads", 2}}}};
  const std::vector<std::pair<std::string, std::string>> env{{"link.n_spans", "4"}, {"experiment.threads", "3"}};
  const std::vector<std::pair<std::string, std::string>> flags{{"link.n_spans", "5"}};
  const ExperimentConfig c = load_config(file, env, flags);
  EXPECT_EQ(c.link.n_spans, 5);
  EXPECT_EQ(c.threads, 3);
  EXPECT_EQ(c.link.span_length_km, 60.0);
  EXPECT_EQ(c.link.alpha_db_per_km, ExperimentConfig{}.link.alpha_db_per_km);
}

TEST(Config, EnvironmentVariables) {
  ::setenv("PBNLC_SET", "link.n_spans=7;dsp.rolloff=0.2", 1);
  ::setenv("PBNLC_SEED", "42", 1);
  ::setenv("PBNLC_THREADS", "2", 1);
  const auto env = env_overrides();
  ::unsetenv("PBNLC_SET");
  ::unsetenv("PBNLC_SEED");
  ::unsetenv("PBNLC_THREADS");
  const ExperimentConfig c = load_config(json(), env, {{"link.n_spans", "8"}});
  EXPECT_EQ(c.link.n_spans, 8);
  EXPECT_DOUBLE_EQ(c.dsp.rolloff, 0.2);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{42}));
  EXPECT_EQ(c.threads, 2);
  EXPECT_TRUE(env_overrides().empty());
}

TEST(Config, RejectsUnknownAndInvalid) {
  EXPECT_THROW(load_config(json{{"link", {{"n_spanz", 3}}}}, {}, {}), ConfigError);
  EXPECT_THROW(load_config(json{{"bogus", 1}}, {}, {}), ConfigError);
  EXPECT_THROW(load_config(json(), {}, {{"experiment.techniques", "[\"FOO\"]"}}), ConfigError);
  EXPECT_THROW(load_config(json(), {}, {{"link.n_spans", "\"many\""}}), ConfigError);
  EXPECT_THROW(load_config(json(), {}, {{"experiment.seeds", "[]"}}), ConfigError);
  EXPECT_THROW(load_config(json(), {}, {{"experiment.n_symbols", "60"}}), ConfigError);
  EXPECT_THROW(load_config(json(), {}, {{"mlp.so_objective", "both"}}), ConfigError);
  EXPECT_THROW(load_config(json(), {}, {{"mlp.activation", "relu"}}), ConfigError);
  EXPECT_THROW(read_json_file("/nonexistent/pbnlc.json"), ConfigError);
}

TEST(GitHash, KnownBlobs) {
  EXPECT_EQ(git_blob_hash("hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
  EXPECT_EQ(git_blob_hash(""), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
}

TEST(Dataset, BitExactRoundTrip) {
  const fs::path dir = scratch("dataset");
  const AlignedPairs p = some_pairs(300);
  const json meta{{"launch_power_dbm", 1.0}, {"role", "train"}};
  const std::string h = save_dataset(dir / "ds", p, meta);
  EXPECT_EQ(h.size(), 40u);
  const Dataset d = load_dataset(dir / "ds.json");
  EXPECT_EQ(d.payload_hash, h);
  EXPECT_EQ(d.meta, meta);
  EXPECT_EQ(d.pairs.lag, 17);
  for (int k = 0; k < 2; ++k) {
    EXPECT_EQ(d.pairs.tx.pol(k), p.tx.pol(k));
    EXPECT_EQ(d.pairs.rx.pol(k), p.rx.pol(k));
    EXPECT_EQ(d.pairs.phase_rad[k], p.phase_rad[k]);
    EXPECT_EQ(d.pairs.scale[k], p.scale[k]);
  }
  EXPECT_EQ(d.pairs.tx.baud_rate_hz, 32e9);
  EXPECT_EQ(git_blob_hash(dataset_payload(d.pairs).data(), dataset_payload(d.pairs).size()), h);
  EXPECT_EQ(save_dataset(dir / "again", d.pairs, meta), h);
}

TEST(Dataset, DetectsCorruption) {
  const fs::path dir = scratch("corrupt");
  save_dataset(dir / "ds", some_pairs(64), json::object());
  Bytes b = read_bytes(dir / "ds.bin");
  b[100] ^= 0x01;
  write_bytes(dir / "ds.bin", b.data(), b.size());
  EXPECT_THROW(load_dataset(dir / "ds.json"), IoError);
  EXPECT_THROW(load_dataset(dir / "missing.json"), IoError);
}

TEST(Checkpoint, BitExactRoundTrip) {
  const fs::path dir = scratch("ckpt");
  MlpModel m = prune(init_model(MlpSpec::for_features(37), 5), -12.0).model;
  m.input_scale = 3.25;
  m.output_scale = 0.0625;
  m.scales_calibrated = true;
  const json meta{{"train_dataset_hash", "abc"}, {"role", "fo"}};
  const std::string h = save_checkpoint(dir / "m.ckpt", m, meta);
  EXPECT_EQ(h, git_blob_hash(read_bytes(dir / "m.ckpt").data(), read_bytes(dir / "m.ckpt").size()));
  const Checkpoint c = load_checkpoint(dir / "m.ckpt");
  EXPECT_EQ(c.meta, meta);
  EXPECT_EQ(c.model.spec.n_inputs, m.spec.n_inputs);
  EXPECT_EQ(c.model.spec.hidden, m.spec.hidden);
  ASSERT_EQ(c.model.layers.size(), m.layers.size());
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    EXPECT_EQ(c.model.layers[l].w, m.layers[l].w);
    EXPECT_EQ(c.model.layers[l].b, m.layers[l].b);
    EXPECT_EQ(c.model.layers[l].mask, m.layers[l].mask);
  }
  EXPECT_EQ(c.model.input_scale, 3.25);
  EXPECT_EQ(c.model.output_scale, 0.0625);
  EXPECT_TRUE(c.model.scales_calibrated);
  EXPECT_EQ(checkpoint_bytes(c.model, c.meta), read_bytes(dir / "m.ckpt"));
}

TEST(Checkpoint, RejectsMalformed) {
  const Bytes good = checkpoint_bytes(init_model(MlpSpec::for_features(4), 1), json::object());
  Bytes bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_THROW(parse_checkpoint(bad_magic), IoError);
  EXPECT_THROW(parse_checkpoint(Bytes(good.begin(), good.end() - 1)), IoError);
  Bytes trailing = good;
  trailing.push_back(0);
  EXPECT_THROW(parse_checkpoint(trailing), IoError);
}

TEST(Checkpoint, RefusesOwnTrainingData) {
  const json meta{{"train_dataset_hash", "1111"}};
  EXPECT_THROW(check_not_training_data(meta, "1111"), std::invalid_argument);
  EXPECT_NO_THROW(check_not_training_data(meta, "2222"));
  EXPECT_NO_THROW(check_not_training_data(json::object(), "1111"));
}

TEST(Manifest, HashIgnoresTimestamp) {
  const json a{{"command", "x"}, {"created_utc", "2020-01-01T00:00:00Z"}, {"n", 3}};
  json b = a;
  b["created_utc"] = "2030-01-01T00:00:00Z";
  EXPECT_EQ(manifest_hash(a), manifest_hash(b));
  b["n"] = 4;
  EXPECT_NE(manifest_hash(a), manifest_hash(b));
  const fs::path dir = scratch("manifest");
  const std::string h = write_manifest(dir / "m.json", a);
  const json back = read_json_file((dir / "m.json").string());
  EXPECT_EQ(back["manifest_hash"], h);
  EXPECT_EQ(manifest_hash(back), h);
}

TEST(Csv, Escaping) {
  EXPECT_EQ(csv_escape("plain"), "plain");
  EXPECT_EQ(csv_escape("a,b"), "\"a,b\"");
  EXPECT_EQ(csv_escape("say \"hi\""), "\"say \"\"hi\"\"\"");
  EXPECT_EQ(csv_escape("two\nlines"), "\"two\nlines\"");
  EXPECT_EQ(to_csv({"a", "b"}, {{"1", "x,y"}}), "a,b\n1,\"x,y\"\n");
  EXPECT_THROW(to_csv({"a", "b"}, {{"1"}}), std::invalid_argument);
}

TEST(Csv, NumbersRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-17, 7.0, 1e300}) EXPECT_EQ(std::strtod(fmt_num(v).c_str(), nullptr), v);
  EXPECT_EQ(fmt_num(2.0), "2");
  EXPECT_EQ(fmt_num(0.1), "0.1");
}

TEST(ComplexityTables, CsvAndJson) {
  const ComplexityReport r = complexity_report({{"NN-NLC", 592}, {"CONV-DBP", 2235}});
  EXPECT_EQ(complexity_csv(r),
            "metric,NN-NLC,CONV-DBP\n"
            "rm_per_symbol,592,2235\n"
            "delta_vs_CONV-DBP,1643,0\n"
            "reduction_pct_vs_CONV-DBP," + fmt_num(100.0 * 1643 / 2235) + ",0\n");
  const json j = complexity_json(r);
  EXPECT_EQ(j["reference"], "CONV-DBP");
  EXPECT_EQ(j["rows"][0]["rm_per_symbol"], 592);
  EXPECT_EQ(j["rows"][0]["delta_vs_reference"], 1643);
  const ComplexityReport e = complexity_report({});
  EXPECT_EQ(complexity_csv(e), "metric\nrm_per_symbol\n");
  EXPECT_TRUE(complexity_json(e)["rows"].empty());
  EXPECT_TRUE(complexity_json(e)["reference"].is_null());
}

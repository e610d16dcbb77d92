#ifndef PBNLC_CONFIG_HPP
#define PBNLC_CONFIG_HPP

#include <nlohmann/json.hpp>

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pbnlc/complexity.hpp"
#include "pbnlc/features.hpp"
#include "pbnlc/fiber.hpp"
#include "pbnlc/mlp.hpp"
#include "pbnlc/signal.hpp"

namespace pbnlc {

using nlohmann::json;

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Index-set shapes for the network features and for the LS baselines.
struct FeatureConfig {
  int fo_window = 32;
  int fo_product_limit = 25;
  bool fo_halve = false;
  int so_outer_window = 2;
  int so_outer_limit = 1;
  int so_inner_window = 4;
  int so_inner_limit = 4;
  std::vector<int> so_slots{1, 3};
  // Drop quintuples that are linear combinations of earlier ones.
  bool so_independent = true;

  int conv_fo_window = 16;
  int conv_fo_product_limit = 12;
  int conv_so_outer_window = 1;
  int conv_so_outer_limit = 1;
  int conv_so_inner_window = 2;
  int conv_so_inner_limit = 2;

  TripletSet fo_set() const { return build_triplet_set(fo_window, fo_product_limit, fo_halve); }
  QuintupleSet so_set() const {
    return so_independent
               ? reduced_quintuple_set(so_outer_window, so_outer_limit, so_inner_window, so_inner_limit, so_slots)
               : build_quintuple_set(so_outer_window, so_outer_limit, so_inner_window, so_inner_limit, so_slots);
  }
  TripletSet conv_fo_set() const { return build_triplet_set(conv_fo_window, conv_fo_product_limit, false); }
  QuintupleSet conv_so_set() const {
    return reduced_quintuple_set(conv_so_outer_window, conv_so_outer_limit, conv_so_inner_window,
                                 conv_so_inner_limit, so_slots);
  }
  /// Edge guard covering every configured set.
  std::size_t guard() const {
    return static_cast<std::size_t>(std::max(max_extent(fo_set(), so_set()), max_extent(conv_fo_set(), conv_so_set())));
  }
};

/// Inputs of the complexity table. The defaults reproduce the published
/// operating points; the DBP and conventional PB-NLC parameters are the
/// calibrations found by search_dbp_params / search_conv_convention.
struct ComplexityConfig {
  std::int64_t fo_unpruned_features = 1314;
  std::int64_t fo_pruned_features = 138;
  std::int64_t so_unpruned_features = 1314;
  std::int64_t so_pruned_features = 268;
  DbpCostParams dbp{15, 1, 8, 7, 21, 1};
  std::int64_t conv_mults_per_term = 7;
  std::int64_t conv_fo_terms = 17;
  std::int64_t conv_so_terms = 221;
  std::vector<std::string> techniques{"NN-NLC",         "NN-NLC@pruned",  "DNN-SO-PB-NLC", "DNN-SO-PB-NLC@pruned",
                                      "CONV-FO-PB-NLC", "CONV-SO-PB-NLC", "CONV-DBP"};
};

enum class SoObjective { residual, joint };

struct ExperimentConfig {
  LinkConfig link;
  DspConfig dsp;
  TrainConfig train;
  SsfmPlan ssfm;
  FeatureConfig features;
  ComplexityConfig complexity;
  std::vector<int> hidden{2, 10};
  Activation activation = Activation::tanh;
  SoObjective so_objective = SoObjective::residual;
  int n_symbols = 1 << 15;
  std::vector<double> powers_dbm{-4, -3, -2, -1, 0, 1, 2, 3, 4};
  std::vector<std::uint64_t> seeds{1};
  int dbp_steps_per_span = 1;
  int max_lag = 64;
  std::vector<double> prune_thresholds_db{-30, -25, -20, -15, -10, -5};
  // Launch power of the pruning sweep.
  double prune_power_dbm = 2.0;
  std::vector<std::string> techniques{"CDC", "CONV-DBP", "CONV-FO-PB-NLC", "CONV-SO-PB-NLC", "NN-NLC", "DNN-SO-PB-NLC"};
  int threads = 1;

  MlpSpec mlp_spec(std::size_t n_features) const {
    MlpSpec s = MlpSpec::for_features(n_features);
    s.hidden = hidden;
    s.activation = activation;
    return s;
  }

  void validate() const {
    link.validate();
    dsp.validate();
    train.validate();
    ssfm.validate();
    if (n_symbols < 16) throw ConfigError("n_symbols must be >= 16");
    if (seeds.empty()) throw ConfigError("seeds must not be empty");
    if (dbp_steps_per_span < 1) throw ConfigError("dbp_steps_per_span must be >= 1");
    if (max_lag < 0) throw ConfigError("max_lag must be >= 0");
    if (threads < 1) throw ConfigError("threads must be >= 1");
    if (2 * features.guard() >= static_cast<std::size_t>(n_symbols))
      throw ConfigError("n_symbols too small for the feature windows");
  }
};

inline const std::vector<std::string>& known_techniques() {
  static const std::vector<std::string> t{"CDC", "CONV-DBP", "CONV-FO-PB-NLC", "CONV-SO-PB-NLC", "NN-NLC",
                                          "DNN-SO-PB-NLC"};
  return t;
}

// ---- JSON mapping --------------------------------------------------------

inline void to_json(json& j, const LinkConfig& c) {
  j = json{{"span_length_km", c.span_length_km},
           {"n_spans", c.n_spans},
           {"alpha_db_per_km", c.alpha_db_per_km},
           {"beta2_ps2_per_km", c.beta2_ps2_per_km},
           {"gamma_per_w_per_km", c.gamma_per_w_per_km},
           {"amp_gain_db", c.amp_gain_db},
           {"noise_figure_db", c.noise_figure_db},
           {"center_wavelength_nm", c.center_wavelength_nm},
           {"manakov_factor", c.manakov_factor},
           {"ase_enabled", c.ase_enabled}};
}
inline void from_json(const json& j, LinkConfig& c) {
  c.span_length_km = j.value("span_length_km", c.span_length_km);
  c.n_spans = j.value("n_spans", c.n_spans);
  c.alpha_db_per_km = j.value("alpha_db_per_km", c.alpha_db_per_km);
  c.beta2_ps2_per_km = j.value("beta2_ps2_per_km", c.beta2_ps2_per_km);
  c.gamma_per_w_per_km = j.value("gamma_per_w_per_km", c.gamma_per_w_per_km);
  c.amp_gain_db = j.value("amp_gain_db", c.amp_gain_db);
  c.noise_figure_db = j.value("noise_figure_db", c.noise_figure_db);
  c.center_wavelength_nm = j.value("center_wavelength_nm", c.center_wavelength_nm);
  c.manakov_factor = j.value("manakov_factor", c.manakov_factor);
  c.ase_enabled = j.value("ase_enabled", c.ase_enabled);
}

inline void to_json(json& j, const DspConfig& c) {
  j = json{{"rolloff", c.rolloff},
           {"oversampling", c.oversampling},
           {"cdc_pre_fraction", c.cdc_pre_fraction},
           {"rrc_span_symbols", c.rrc_span_symbols},
           {"baud_rate_hz", c.baud_rate_hz}};
}
inline void from_json(const json& j, DspConfig& c) {
  c.rolloff = j.value("rolloff", c.rolloff);
  c.oversampling = j.value("oversampling", c.oversampling);
  c.cdc_pre_fraction = j.value("cdc_pre_fraction", c.cdc_pre_fraction);
  c.rrc_span_symbols = j.value("rrc_span_symbols", c.rrc_span_symbols);
  c.baud_rate_hz = j.value("baud_rate_hz", c.baud_rate_hz);
}

inline void to_json(json& j, const TrainConfig& c) {
  j = json{{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size},
           {"max_epochs", c.max_epochs},       {"patience", c.patience},
           {"seed", c.seed},                   {"validation_fraction", c.validation_fraction}};
}
inline void from_json(const json& j, TrainConfig& c) {
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.patience = j.value("patience", c.patience);
  c.seed = j.value("seed", c.seed);
  c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
}

inline void to_json(json& j, const SsfmPlan& c) {
  j = json{{"steps_per_span", c.steps_per_span},
           {"step_layout", c.step_layout == StepLayout::uniform ? "uniform" : "logarithmic"},
           {"noise_seed", c.noise_seed}};
}
inline void from_json(const json& j, SsfmPlan& c) {
  c.steps_per_span = j.value("steps_per_span", c.steps_per_span);
  const std::string layout = j.value("step_layout", std::string(c.step_layout == StepLayout::uniform ? "uniform" : "logarithmic"));
  if (layout == "uniform") c.step_layout = StepLayout::uniform;
  else if (layout == "logarithmic") c.step_layout = StepLayout::logarithmic;
  else throw ConfigError("ssfm.step_layout must be uniform or logarithmic");
  c.noise_seed = j.value("noise_seed", c.noise_seed);
}

inline void to_json(json& j, const FeatureConfig& c) {
  j = json{{"fo_window", c.fo_window},
           {"fo_product_limit", c.fo_product_limit},
           {"fo_halve", c.fo_halve},
           {"so_outer_window", c.so_outer_window},
           {"so_outer_limit", c.so_outer_limit},
           {"so_inner_window", c.so_inner_window},
           {"so_inner_limit", c.so_inner_limit},
           {"so_slots", c.so_slots},
           {"so_independent", c.so_independent},
           {"conv_fo_window", c.conv_fo_window},
           {"conv_fo_product_limit", c.conv_fo_product_limit},
           {"conv_so_outer_window", c.conv_so_outer_window},
           {"conv_so_outer_limit", c.conv_so_outer_limit},
           {"conv_so_inner_window", c.conv_so_inner_window},
           {"conv_so_inner_limit", c.conv_so_inner_limit}};
}
inline void from_json(const json& j, FeatureConfig& c) {
  c.fo_window = j.value("fo_window", c.fo_window);
  c.fo_product_limit = j.value("fo_product_limit", c.fo_product_limit);
  c.fo_halve = j.value("fo_halve", c.fo_halve);
  c.so_outer_window = j.value("so_outer_window", c.so_outer_window);
  c.so_outer_limit = j.value("so_outer_limit", c.so_outer_limit);
  c.so_inner_window = j.value("so_inner_window", c.so_inner_window);
  c.so_inner_limit = j.value("so_inner_limit", c.so_inner_limit);
  c.so_slots = j.value("so_slots", c.so_slots);
  c.so_independent = j.value("so_independent", c.so_independent);
  c.conv_fo_window = j.value("conv_fo_window", c.conv_fo_window);
  c.conv_fo_product_limit = j.value("conv_fo_product_limit", c.conv_fo_product_limit);
  c.conv_so_outer_window = j.value("conv_so_outer_window", c.conv_so_outer_window);
  c.conv_so_outer_limit = j.value("conv_so_outer_limit", c.conv_so_outer_limit);
  c.conv_so_inner_window = j.value("conv_so_inner_window", c.conv_so_inner_window);
  c.conv_so_inner_limit = j.value("conv_so_inner_limit", c.conv_so_inner_limit);
}

inline void to_json(json& j, const DbpCostParams& c) {
  j = json{{"n_spans", c.n_spans},   {"steps_per_span", c.steps_per_span},
           {"fft_size", c.fft_size}, {"overlap", c.overlap},
           {"nl_mults_per_sample", c.nl_mults_per_sample}, {"oversampling", c.oversampling}};
}
inline void from_json(const json& j, DbpCostParams& c) {
  c.n_spans = j.value("n_spans", c.n_spans);
  c.steps_per_span = j.value("steps_per_span", c.steps_per_span);
  c.fft_size = j.value("fft_size", c.fft_size);
  c.overlap = j.value("overlap", c.overlap);
  c.nl_mults_per_sample = j.value("nl_mults_per_sample", c.nl_mults_per_sample);
  c.oversampling = j.value("oversampling", c.oversampling);
}

inline void to_json(json& j, const ComplexityConfig& c) {
  j = json{{"fo_unpruned_features", c.fo_unpruned_features},
           {"fo_pruned_features", c.fo_pruned_features},
           {"so_unpruned_features", c.so_unpruned_features},
           {"so_pruned_features", c.so_pruned_features},
           {"dbp", c.dbp},
           {"conv_mults_per_term", c.conv_mults_per_term},
           {"conv_fo_terms", c.conv_fo_terms},
           {"conv_so_terms", c.conv_so_terms},
           {"techniques", c.techniques}};
}
inline void from_json(const json& j, ComplexityConfig& c) {
  c.fo_unpruned_features = j.value("fo_unpruned_features", c.fo_unpruned_features);
  c.fo_pruned_features = j.value("fo_pruned_features", c.fo_pruned_features);
  c.so_unpruned_features = j.value("so_unpruned_features", c.so_unpruned_features);
  c.so_pruned_features = j.value("so_pruned_features", c.so_pruned_features);
  if (j.contains("dbp")) j.at("dbp").get_to(c.dbp);
  c.conv_mults_per_term = j.value("conv_mults_per_term", c.conv_mults_per_term);
  c.conv_fo_terms = j.value("conv_fo_terms", c.conv_fo_terms);
  c.conv_so_terms = j.value("conv_so_terms", c.conv_so_terms);
  c.techniques = j.value("techniques", c.techniques);
}

inline void to_json(json& j, const ExperimentConfig& c) {
  j = json{{"link", c.link},
           {"dsp", c.dsp},
           {"train", c.train},
           {"ssfm", c.ssfm},
           {"features", c.features},
           {"complexity", c.complexity},
           {"mlp", {{"hidden", c.hidden}, {"activation", to_string(c.activation)},
                    {"so_objective", c.so_objective == SoObjective::residual ? "residual" : "joint"}}},
           {"experiment", {{"n_symbols", c.n_symbols},
                           {"powers_dbm", c.powers_dbm},
                           {"seeds", c.seeds},
                           {"dbp_steps_per_span", c.dbp_steps_per_span},
                           {"max_lag", c.max_lag},
                           {"prune_thresholds_db", c.prune_thresholds_db},
                           {"prune_power_dbm", c.prune_power_dbm},
                           {"techniques", c.techniques},
                           {"threads", c.threads}}}};
}

inline void from_json(const json& j, ExperimentConfig& c) {
  if (j.contains("link")) j.at("link").get_to(c.link);
  if (j.contains("dsp")) j.at("dsp").get_to(c.dsp);
  if (j.contains("train")) j.at("train").get_to(c.train);
  if (j.contains("ssfm")) j.at("ssfm").get_to(c.ssfm);
  if (j.contains("features")) j.at("features").get_to(c.features);
  if (j.contains("complexity")) j.at("complexity").get_to(c.complexity);
  if (j.contains("mlp")) {
    const json& m = j.at("mlp");
    c.hidden = m.value("hidden", c.hidden);
    c.activation = activation_from_string(m.value("activation", to_string(c.activation)));
    const std::string obj = m.value("so_objective", std::string(c.so_objective == SoObjective::residual ? "residual" : "joint"));
    if (obj == "residual") c.so_objective = SoObjective::residual;
    else if (obj == "joint") c.so_objective = SoObjective::joint;
    else throw ConfigError("mlp.so_objective must be residual or joint");
  }
  if (j.contains("experiment")) {
    const json& e = j.at("experiment");
    c.n_symbols = e.value("n_symbols", c.n_symbols);
    c.powers_dbm = e.value("powers_dbm", c.powers_dbm);
    c.seeds = e.value("seeds", c.seeds);
    c.dbp_steps_per_span = e.value("dbp_steps_per_span", c.dbp_steps_per_span);
    c.max_lag = e.value("max_lag", c.max_lag);
    c.prune_thresholds_db = e.value("prune_thresholds_db", c.prune_thresholds_db);
    c.prune_power_dbm = e.value("prune_power_dbm", c.prune_power_dbm);
    c.techniques = e.value("techniques", c.techniques);
    c.threads = e.value("threads", c.threads);
  }
}

// ---- loading and overrides -----------------------------------------------

namespace detail {

// Every key in `in` must exist in `ref` (the serialized defaults).
inline void check_keys(const json& in, const json& ref, const std::string& path) {
  if (!in.is_object() || !ref.is_object()) return;
  for (auto it = in.begin(); it != in.end(); ++it) {
    const std::string p = path.empty() ? it.key() : path + "." + it.key();
    if (!ref.contains(it.key())) throw ConfigError("unknown config key: " + p);
    check_keys(it.value(), ref.at(it.key()), p);
  }
}

inline json parse_scalar(const std::string& v) {
  try {
    return json::parse(v);
  } catch (const json::parse_error&) {
    return json(v);
  }
}

}  // namespace detail

/// Sets `path` (dot separated, e.g. "link.n_spans") in `doc`; the value is
/// parsed as JSON when possible and taken as a string otherwise.
inline void set_path(json& doc, const std::string& path, const std::string& value) {
  if (path.empty()) throw ConfigError("empty override path");
  json* node = &doc;
  std::stringstream ss(path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->is_object()) throw ConfigError("override path crosses a non-object: " + path);
    node = &(*node)[parts[i]];
  }
  (*node)[parts.back()] = detail::parse_scalar(value);
}

/// "a.b=1" -> {"a.b", "1"}.
inline std::pair<std::string, std::string> split_assignment(const std::string& s) {
  const auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like path=value: " + s);
  return {s.substr(0, eq), s.substr(eq + 1)};
}

/// Reads PBNLC_SET ("path=value;path=value"), PBNLC_SEED and PBNLC_THREADS.
inline std::vector<std::pair<std::string, std::string>> env_overrides() {
  std::vector<std::pair<std::string, std::string>> out;
  if (const char* s = std::getenv("PBNLC_SET")) {
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ';'))
      if (!item.empty()) out.push_back(split_assignment(item));
  }
  if (const char* s = std::getenv("PBNLC_SEED")) out.emplace_back("experiment.seeds", std::string("[") + s + "]");
  if (const char* s = std::getenv("PBNLC_THREADS")) out.emplace_back("experiment.threads", s);
  return out;
}

/// Defaults <- file <- environment <- flags, then validated.
inline ExperimentConfig load_config(const json& file_doc,
                                    const std::vector<std::pair<std::string, std::string>>& env,
                                    const std::vector<std::pair<std::string, std::string>>& flags) {
  const json defaults = ExperimentConfig{};
  json doc = file_doc.is_null() ? json::object() : file_doc;
  for (const auto& [p, v] : env) set_path(doc, p, v);
  for (const auto& [p, v] : flags) set_path(doc, p, v);
  detail::check_keys(doc, defaults, "");
  ExperimentConfig cfg;
  try {
    doc.get_to(cfg);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config type error: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  for (const auto& t : cfg.techniques)
    if (std::find(known_techniques().begin(), known_techniques().end(), t) == known_techniques().end())
      throw ConfigError("unknown technique: " + t);
  return cfg;
}

inline json read_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError("cannot parse " + path + ": " + e.what());
  }
}

/// Value at a dotted path of the serialized config.
inline json get_path(const ExperimentConfig& cfg, const std::string& path) {
  const json doc = cfg;
  const json::json_pointer ptr("/" + [&] {
    std::string p = path;
    std::replace(p.begin(), p.end(), '.', '/');
    return p;
  }());
  if (!doc.contains(ptr)) throw ConfigError("no such config path: " + path);
  return doc.at(ptr);
}

}  // namespace pbnlc

#endif  // PBNLC_CONFIG_HPP

#ifndef PBNLC_MLP_HPP
#define PBNLC_MLP_HPP

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pbnlc/features.hpp"
#include "pbnlc/seed.hpp"
#include "pbnlc/signal.hpp"

namespace pbnlc {

enum class Activation { tanh, identity };

inline std::string to_string(Activation a) { return a == Activation::tanh ? "tanh" : "identity"; }

inline Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "identity") return Activation::identity;
  throw std::invalid_argument("unknown activation: " + s);
}

/// Fully connected network: n_inputs -> hidden... -> n_outputs, activation on
/// the hidden layers, linear output.
struct MlpSpec {
  int n_inputs = 0;
  std::vector<int> hidden{2, 10};
  int n_outputs = 2;
  Activation activation = Activation::tanh;

  /// Network for `n_features` complex features split into re/im lanes.
  static MlpSpec for_features(std::size_t n_features) {
    MlpSpec s;
    s.n_inputs = static_cast<int>(2 * n_features);
    return s;
  }

  bool paper_mode() const { return hidden == std::vector<int>{2, 10} && n_outputs == 2; }

  void validate() const {
    if (n_inputs < 1 || n_outputs < 1) throw std::invalid_argument("MlpSpec: layer sizes must be positive");
    for (int h : hidden)
      if (h < 1) throw std::invalid_argument("MlpSpec: hidden sizes must be positive");
  }
};

struct Layer {
  int in = 0;
  int out = 0;
  std::vector<double> w;       // out x in, row-major
  std::vector<double> b;       // out
  std::vector<std::uint8_t> mask;  // out x in; 0 means pruned, weight held at 0

  double& weight(int o, int i) { return w[static_cast<std::size_t>(o) * static_cast<std::size_t>(in) + static_cast<std::size_t>(i)]; }
  double weight(int o, int i) const { return w[static_cast<std::size_t>(o) * static_cast<std::size_t>(in) + static_cast<std::size_t>(i)]; }
};

/// Network weights plus two fixed scalars: inputs are multiplied by
/// `input_scale` and outputs by `output_scale`. Both fold into the first and
/// last weight matrices, so they add no per-symbol multiplications.
struct MlpModel {
  MlpSpec spec;
  std::vector<Layer> layers;
  double input_scale = 1.0;
  double output_scale = 1.0;
  bool scales_calibrated = false;

  std::size_t n_weights() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.w.size();
    return n;
  }
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases, full mask.
/// With `zero_output_layer` the last weight matrix starts at zero, so the
/// untrained network is the zero function.
inline MlpModel init_model(const MlpSpec& spec, std::uint64_t seed, bool zero_output_layer = false) {
  spec.validate();
  MlpModel m;
  m.spec = spec;
  std::vector<int> sizes{spec.n_inputs};
  sizes.insert(sizes.end(), spec.hidden.begin(), spec.hidden.end());
  sizes.push_back(spec.n_outputs);
  std::mt19937_64 rng(derive_seed(seed, {static_cast<std::uint64_t>(SeedRole::model)}));
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    Layer layer;
    layer.in = sizes[l];
    layer.out = sizes[l + 1];
    const auto count = static_cast<std::size_t>(layer.in) * static_cast<std::size_t>(layer.out);
    layer.w.resize(count);
    layer.b.assign(static_cast<std::size_t>(layer.out), 0.0);
    layer.mask.assign(count, 1);
    const double s = 1.0 / std::sqrt(static_cast<double>(layer.in));
    std::uniform_real_distribution<double> u(-s, s);
    for (auto& v : layer.w) v = u(rng);
    if (zero_output_layer && l + 2 == sizes.size()) std::fill(layer.w.begin(), layer.w.end(), 0.0);
    m.layers.push_back(std::move(layer));
  }
  return m;
}

namespace detail {

inline double activate(Activation a, double v) { return a == Activation::tanh ? std::tanh(v) : v; }
// Derivative expressed through the activation output.
inline double activate_deriv(Activation a, double out) { return a == Activation::tanh ? 1.0 - out * out : 1.0; }

// Activations of every layer for one input; acts[0] is unused for the input.
struct Trace {
  std::vector<std::vector<double>> acts;
};

template <typename T>
inline void forward_trace(const MlpModel& m, std::span<const T> x, Trace& tr) {
  const std::size_t nl = m.layers.size();
  tr.acts.resize(nl + 1);
  for (std::size_t l = 0; l < nl; ++l) {
    const Layer& L = m.layers[l];
    auto& out = tr.acts[l + 1];
    out.resize(static_cast<std::size_t>(L.out));
    for (int o = 0; o < L.out; ++o) {
      const double* w = L.w.data() + static_cast<std::size_t>(o) * static_cast<std::size_t>(L.in);
      double acc = 0.0;
      if (l == 0) {
        for (int i = 0; i < L.in; ++i) acc += w[i] * static_cast<double>(x[static_cast<std::size_t>(i)]);
        acc *= m.input_scale;
      } else {
        const auto& prev = tr.acts[l];
        for (int i = 0; i < L.in; ++i) acc += w[i] * prev[static_cast<std::size_t>(i)];
      }
      acc += L.b[static_cast<std::size_t>(o)];
      out[static_cast<std::size_t>(o)] = (l + 1 < nl) ? activate(m.spec.activation, acc) : acc;
    }
  }
}

}  // namespace detail

/// Network output for one real input vector, in physical (unscaled) units.
template <typename T>
inline std::vector<double> forward(const MlpModel& m, std::span<const T> x) {
  if (x.size() != static_cast<std::size_t>(m.spec.n_inputs))
    throw std::invalid_argument("forward: feature length does not match the model");
  detail::Trace tr;
  detail::forward_trace(m, x, tr);
  std::vector<double> y = tr.acts.back();
  for (auto& v : y) v *= m.output_scale;
  return y;
}

/// (re, im) distortion estimate for a complex feature row.
inline cplx forward_complex(const MlpModel& m, std::span<const std::complex<float>> f) {
  const std::span<const float> lanes(reinterpret_cast<const float*>(f.data()), 2 * f.size());
  const auto y = forward(m, lanes);
  if (y.size() != 2) throw std::invalid_argument("forward_complex: model must have two outputs");
  return {y[0], y[1]};
}

/// Complex feature rows (row-major, `n_features` per row) with complex targets.
struct TrainingView {
  std::span<const std::complex<float>> features;
  std::size_t n_features = 0;
  std::span<const cplx> targets;

  std::size_t rows() const { return targets.size(); }
  std::span<const float> lanes(std::size_t r) const {
    return {reinterpret_cast<const float*>(features.data() + r * n_features), 2 * n_features};
  }
};

inline TrainingView fo_view(const FeatureTable& t, std::span<const cplx> targets) {
  return {t.fo, t.n_fo, targets};
}
inline TrainingView so_view(const FeatureTable& t, std::span<const cplx> targets) {
  return {t.so, t.n_so, targets};
}

/// Gradient buffers shaped like the model's layers.
struct Gradient {
  std::vector<std::vector<double>> w;
  std::vector<std::vector<double>> b;

  explicit Gradient(const MlpModel& m) {
    for (const auto& l : m.layers) {
      w.emplace_back(l.w.size(), 0.0);
      b.emplace_back(l.b.size(), 0.0);
    }
  }
  void zero() {
    for (auto& v : w) std::fill(v.begin(), v.end(), 0.0);
    for (auto& v : b) std::fill(v.begin(), v.end(), 0.0);
  }
};

/// Loss = mean over the selected rows of sum_o (y_o - t_o)^2 / 2 in network
/// units (targets divided by output_scale). Accumulates d loss / d params into
/// `grad` (which is zeroed first). Masked weights get zero gradient.
inline double loss_and_gradient(const MlpModel& m, const TrainingView& data, std::span<const std::size_t> rows,
                                Gradient& grad) {
  grad.zero();
  if (rows.empty()) return 0.0;
  const std::size_t nl = m.layers.size();
  detail::Trace tr;
  std::vector<std::vector<double>> delta(nl);
  double loss = 0.0;
  const double inv_out = 1.0 / m.output_scale;
  for (std::size_t r : rows) {
    const auto x = data.lanes(r);
    detail::forward_trace(m, x, tr);
    const auto& y = tr.acts[nl];
    const double t[2] = {data.targets[r].real() * inv_out, data.targets[r].imag() * inv_out};
    delta[nl - 1].resize(y.size());
    for (std::size_t o = 0; o < y.size(); ++o) {
      const double e = y[o] - t[o];
      loss += 0.5 * e * e;
      delta[nl - 1][o] = e;
    }
    for (std::size_t l = nl; l-- > 0;) {
      const Layer& L = m.layers[l];
      auto& gw = grad.w[l];
      auto& gb = grad.b[l];
      const auto& d = delta[l];
      for (int o = 0; o < L.out; ++o) {
        const double dv = d[static_cast<std::size_t>(o)];
        gb[static_cast<std::size_t>(o)] += dv;
        if (dv == 0.0) continue;
        double* g = gw.data() + static_cast<std::size_t>(o) * static_cast<std::size_t>(L.in);
        if (l == 0) {
          const double s = dv * m.input_scale;
          for (int i = 0; i < L.in; ++i) g[i] += s * static_cast<double>(x[static_cast<std::size_t>(i)]);
        } else {
          const auto& prev = tr.acts[l];
          for (int i = 0; i < L.in; ++i) g[i] += dv * prev[static_cast<std::size_t>(i)];
        }
      }
      if (l == 0) break;
      auto& dp = delta[l - 1];
      dp.assign(static_cast<std::size_t>(L.in), 0.0);
      for (int o = 0; o < L.out; ++o) {
        const double dv = d[static_cast<std::size_t>(o)];
        const double* w = L.w.data() + static_cast<std::size_t>(o) * static_cast<std::size_t>(L.in);
        for (int i = 0; i < L.in; ++i) dp[static_cast<std::size_t>(i)] += dv * w[i];
      }
      const auto& a = tr.acts[l];
      for (std::size_t i = 0; i < dp.size(); ++i) dp[i] *= detail::activate_deriv(m.spec.activation, a[i]);
    }
  }
  const double inv = 1.0 / static_cast<double>(rows.size());
  for (std::size_t l = 0; l < nl; ++l) {
    for (std::size_t i = 0; i < grad.w[l].size(); ++i)
      grad.w[l][i] = m.layers[l].mask[i] ? grad.w[l][i] * inv : 0.0;
    for (auto& v : grad.b[l]) v *= inv;
  }
  return loss * inv;
}

/// Mean |target - estimate|^2 over the selected rows, physical units.
inline double mse(const MlpModel& m, const TrainingView& data, std::span<const std::size_t> rows) {
  if (rows.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t r : rows) {
    const auto y = forward(m, data.lanes(r));
    acc += std::norm(data.targets[r] - cplx{y[0], y[1]});
  }
  return acc / static_cast<double>(rows.size());
}

inline double mse(const MlpModel& m, const TrainingView& data) {
  std::vector<std::size_t> all(data.rows());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return mse(m, data, all);
}

struct TrainReport {
  int epochs_run = 0;
  int best_epoch = 0;
  double initial_val_mse = 0.0;
  double final_train_mse = 0.0;
  double final_val_mse = 0.0;
  std::vector<double> loss_curve;  // validation MSE after each epoch
};

/// Rows [0, n_val) of the seeded permutation are validation, the rest training.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_rows(std::size_t rows,
                                                                                 const TrainConfig& cfg) {
  std::vector<std::size_t> perm(rows);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(SeedRole::split)}));
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto n_val = static_cast<std::size_t>(std::llround(cfg.validation_fraction * static_cast<double>(rows)));
  std::vector<std::size_t> val(perm.begin(), perm.begin() + static_cast<long>(n_val));
  std::vector<std::size_t> tr(perm.begin() + static_cast<long>(n_val), perm.end());
  return {std::move(tr), std::move(val)};
}

/// Sets input_scale to 1/rms of the input lanes and output_scale to the rms of
/// the target rails, both over `rows`.
inline void calibrate_scales(MlpModel& m, const TrainingView& data, std::span<const std::size_t> rows) {
  double fx = 0.0, ft = 0.0;
  for (std::size_t r : rows) {
    for (float v : data.lanes(r)) fx += static_cast<double>(v) * v;
    ft += std::norm(data.targets[r]);
  }
  const double lanes = static_cast<double>(rows.size() * 2 * data.n_features);
  const double rx = std::sqrt(fx / std::max(lanes, 1.0));
  const double rt = std::sqrt(ft / std::max(2.0 * static_cast<double>(rows.size()), 1.0));
  m.input_scale = rx > 0 ? 1.0 / rx : 1.0;
  m.output_scale = rt > 0 ? rt : 1.0;
  m.scales_calibrated = true;
}

/// Mini-batch Adam on the MSE, early stopping on validation MSE with the
/// best-validation parameters restored at the end. Masked weights never move.
/// Scales are calibrated on the training rows unless already calibrated.
inline std::pair<MlpModel, TrainReport> train(MlpModel m, const TrainingView& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.n_features * 2 != static_cast<std::size_t>(m.spec.n_inputs))
    throw std::invalid_argument("train: feature width does not match the model");
  if (data.rows() < 2) throw std::invalid_argument("train: need at least two records");
  auto [train_rows, val_rows] = split_rows(data.rows(), cfg);
  if (train_rows.empty() || val_rows.empty()) throw std::invalid_argument("train: empty train or validation split");
  if (!m.scales_calibrated) calibrate_scales(m, data, train_rows);

  // Adam state.
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  Gradient g(m), mom(m), vel(m);
  std::uint64_t step = 0;

  TrainReport rep;
  rep.initial_val_mse = mse(m, data, val_rows);
  MlpModel best = m;
  double best_val = rep.initial_val_mse;
  int since_best = 0;
  std::mt19937_64 rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(SeedRole::model), 7}));
  const auto bs = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(train_rows.begin(), train_rows.end(), rng);
    for (std::size_t b0 = 0; b0 < train_rows.size(); b0 += bs) {
      const std::span<const std::size_t> batch(train_rows.data() + b0, std::min(bs, train_rows.size() - b0));
      const double loss = loss_and_gradient(m, data, batch, g);
      if (!std::isfinite(loss)) throw NumericError("train: non-finite loss (learning rate too high?)");
      ++step;
      const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
      for (std::size_t l = 0; l < m.layers.size(); ++l) {
        Layer& L = m.layers[l];
        auto upd = [&](std::vector<double>& p, const std::vector<double>& gr, std::vector<double>& mo,
                       std::vector<double>& ve, const std::uint8_t* mask) {
          for (std::size_t i = 0; i < p.size(); ++i) {
            if (mask && !mask[i]) continue;
            mo[i] = b1 * mo[i] + (1.0 - b1) * gr[i];
            ve[i] = b2 * ve[i] + (1.0 - b2) * gr[i] * gr[i];
            p[i] -= cfg.learning_rate * (mo[i] / c1) / (std::sqrt(ve[i] / c2) + eps);
          }
        };
        upd(L.w, g.w[l], mom.w[l], vel.w[l], L.mask.data());
        upd(L.b, g.b[l], mom.b[l], vel.b[l], nullptr);
      }
    }
    const double v = mse(m, data, val_rows);
    if (!std::isfinite(v)) throw NumericError("train: non-finite validation loss");
    rep.loss_curve.push_back(v);
    rep.epochs_run = epoch;
    if (v < best_val) {
      best_val = v;
      best = m;
      rep.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  rep.final_val_mse = best_val;
  rep.final_train_mse = mse(best, data, train_rows);
  return {std::move(best), std::move(rep)};
}

struct JointResult {
  MlpModel fo;
  MlpModel so;
  TrainReport report;
};

/// Both networks trained together on |target - fo(x) - so(z)|^2. Each step
/// uses the other network's current output as an offset, so the pair moves
/// along the gradient of the joint loss. Validation MSE is that of the sum.
inline JointResult train_joint(MlpModel fo, MlpModel so, const TrainingView& fo_data, const TrainingView& so_data,
                               const TrainConfig& cfg) {
  cfg.validate();
  if (fo_data.rows() != so_data.rows()) throw std::invalid_argument("train_joint: row counts differ");
  if (fo_data.rows() < 2) throw std::invalid_argument("train_joint: need at least two records");
  auto [train_rows, val_rows] = split_rows(fo_data.rows(), cfg);
  if (train_rows.empty() || val_rows.empty()) throw std::invalid_argument("train_joint: empty train or validation split");
  if (!fo.scales_calibrated) calibrate_scales(fo, fo_data, train_rows);
  if (!so.scales_calibrated) calibrate_scales(so, so_data, train_rows);

  const std::size_t n = fo_data.rows();
  cvec fo_target(n), so_target(n);
  const TrainingView fo_v{fo_data.features, fo_data.n_features, fo_target};
  const TrainingView so_v{so_data.features, so_data.n_features, so_target};
  auto joint_mse = [&](const MlpModel& a, const MlpModel& b, std::span<const std::size_t> rows) {
    double acc = 0.0;
    for (std::size_t r : rows) {
      const auto ya = forward(a, fo_data.lanes(r));
      const auto yb = forward(b, so_data.lanes(r));
      acc += std::norm(fo_data.targets[r] - cplx{ya[0] + yb[0], ya[1] + yb[1]});
    }
    return rows.empty() ? 0.0 : acc / static_cast<double>(rows.size());
  };

  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  MlpModel* nets[2] = {&fo, &so};
  std::vector<Gradient> g{Gradient(fo), Gradient(so)}, mom{Gradient(fo), Gradient(so)}, vel{Gradient(fo), Gradient(so)};
  std::uint64_t step = 0;

  TrainReport rep;
  rep.initial_val_mse = joint_mse(fo, so, val_rows);
  MlpModel best_fo = fo, best_so = so;
  double best_val = rep.initial_val_mse;
  int since_best = 0;
  std::mt19937_64 rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(SeedRole::model), 8}));
  const auto bs = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(train_rows.begin(), train_rows.end(), rng);
    for (std::size_t b0 = 0; b0 < train_rows.size(); b0 += bs) {
      const std::span<const std::size_t> batch(train_rows.data() + b0, std::min(bs, train_rows.size() - b0));
      for (std::size_t r : batch) {
        const auto ya = forward(fo, fo_data.lanes(r));
        const auto yb = forward(so, so_data.lanes(r));
        fo_target[r] = fo_data.targets[r] - cplx{yb[0], yb[1]};
        so_target[r] = fo_data.targets[r] - cplx{ya[0], ya[1]};
      }
      const double l0 = loss_and_gradient(fo, fo_v, batch, g[0]);
      const double l1 = loss_and_gradient(so, so_v, batch, g[1]);
      if (!std::isfinite(l0) || !std::isfinite(l1)) throw NumericError("train_joint: non-finite loss");
      ++step;
      const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
      for (int k = 0; k < 2; ++k) {
        MlpModel& m = *nets[k];
        for (std::size_t l = 0; l < m.layers.size(); ++l) {
          Layer& L = m.layers[l];
          auto upd = [&](std::vector<double>& p, const std::vector<double>& gr, std::vector<double>& mo,
                         std::vector<double>& ve, const std::uint8_t* mask) {
            for (std::size_t i = 0; i < p.size(); ++i) {
              if (mask && !mask[i]) continue;
              mo[i] = b1 * mo[i] + (1.0 - b1) * gr[i];
              ve[i] = b2 * ve[i] + (1.0 - b2) * gr[i] * gr[i];
              p[i] -= cfg.learning_rate * (mo[i] / c1) / (std::sqrt(ve[i] / c2) + eps);
            }
          };
          upd(L.w, g[k].w[l], mom[k].w[l], vel[k].w[l], L.mask.data());
          upd(L.b, g[k].b[l], mom[k].b[l], vel[k].b[l], nullptr);
        }
      }
    }
    const double v = joint_mse(fo, so, val_rows);
    if (!std::isfinite(v)) throw NumericError("train_joint: non-finite validation loss");
    rep.loss_curve.push_back(v);
    rep.epochs_run = epoch;
    if (v < best_val) {
      best_val = v;
      best_fo = fo;
      best_so = so;
      rep.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  rep.final_val_mse = best_val;
  rep.final_train_mse = joint_mse(best_fo, best_so, train_rows);
  return {std::move(best_fo), std::move(best_so), std::move(rep)};
}

/// Training restricted to the surviving weights of an already pruned model.
inline std::pair<MlpModel, TrainReport> retrain(MlpModel m, const TrainingView& data, const TrainConfig& cfg) {
  return train(std::move(m), data, cfg);
}

/// Number of complex input features with at least one live first-layer weight
/// on either of their two lanes.
inline std::size_t surviving_feature_count(const MlpModel& m) {
  if (m.layers.empty()) return 0;
  const Layer& L = m.layers.front();
  const std::size_t nf = static_cast<std::size_t>(L.in) / 2;
  std::size_t count = 0;
  for (std::size_t f = 0; f < nf; ++f) {
    bool alive = false;
    for (int o = 0; o < L.out && !alive; ++o) {
      const std::size_t base = static_cast<std::size_t>(o) * static_cast<std::size_t>(L.in);
      alive = L.mask[base + 2 * f] || L.mask[base + 2 * f + 1];
    }
    count += alive ? 1 : 0;
  }
  return count;
}

/// Per-feature liveness of the first layer (size n_inputs / 2).
inline std::vector<bool> surviving_features(const MlpModel& m) {
  const Layer& L = m.layers.front();
  std::vector<bool> alive(static_cast<std::size_t>(L.in) / 2, false);
  for (int o = 0; o < L.out; ++o)
    for (int i = 0; i < L.in; ++i)
      if (L.mask[static_cast<std::size_t>(o) * static_cast<std::size_t>(L.in) + static_cast<std::size_t>(i)])
        alive[static_cast<std::size_t>(i) / 2] = true;
  return alive;
}

struct PruneResult {
  MlpModel model;
  std::size_t surviving_features = 0;
};

/// Magnitude pruning across all weight matrices (biases are kept): a weight
/// with 20 log10(|w| / max|w|) < threshold_db is masked and zeroed. The
/// reference (largest) weight itself always survives.
inline PruneResult prune(MlpModel m, double threshold_db) {
  double wmax = 0.0;
  const Layer* ref_layer = nullptr;
  std::size_t ref_idx = 0;
  for (const auto& L : m.layers)
    for (std::size_t i = 0; i < L.w.size(); ++i)
      if (L.mask[i] && std::abs(L.w[i]) > wmax) {
        wmax = std::abs(L.w[i]);
        ref_layer = &L;
        ref_idx = i;
      }
  if (!(wmax > 0)) throw std::invalid_argument("prune: all weights are already pruned or zero");
  for (auto& L : m.layers)
    for (std::size_t i = 0; i < L.w.size(); ++i) {
      if (&L == ref_layer && i == ref_idx) continue;
      const double a = std::abs(L.w[i]);
      const double rel_db = a > 0 ? 20.0 * std::log10(a / wmax) : -std::numeric_limits<double>::infinity();
      if (!L.mask[i] || rel_db < threshold_db) {
        L.mask[i] = 0;
        L.w[i] = 0.0;
      }
    }
  PruneResult r;
  r.surviving_features = surviving_feature_count(m);
  r.model = std::move(m);
  return r;
}

/// Estimates for every row of a feature block.
inline cvec predict(const MlpModel& m, std::span<const std::complex<float>> features, std::size_t n_features,
                    std::size_t rows) {
  if (2 * n_features != static_cast<std::size_t>(m.spec.n_inputs))
    throw std::invalid_argument("predict: feature width does not match the model");
  cvec out(rows);
  for (std::size_t r = 0; r < rows; ++r)
    out[r] = forward_complex(m, features.subspan(r * n_features, n_features));
  return out;
}

/// rx[k] - FO estimate - SO estimate on the interior symbols. Without an SO
/// model this is the first-order-only network compensation.
inline SymbolBlock compensate(const AlignedPairs& pairs, const MlpModel& fo_model, const MlpModel* so_model,
                              const TripletSet& tset, const QuintupleSet& qset, std::size_t guard) {
  const QuintupleSet none;
  const FeatureTable t = extract_features(pairs, tset, so_model ? qset : none, guard);
  cvec est = predict(fo_model, t.fo, t.n_fo, t.rows);
  if (so_model) {
    const cvec so = predict(*so_model, t.so, t.n_so, t.rows);
    for (std::size_t r = 0; r < t.rows; ++r) est[r] += so[r];
  }
  return subtract_estimates(pairs, t, est);
}

}  // namespace pbnlc

#endif  // PBNLC_MLP_HPP

#ifndef PBNLC_COMPLEXITY_HPP
#define PBNLC_COMPLEXITY_HPP

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pbnlc/mlp.hpp"

namespace pbnlc {

/// Real multiplications per symbol of one network evaluation: 2 n_features
/// real inputs into hidden[0], hidden-to-hidden products, hidden.back() into
/// the outputs. Feature products (triplets/quintuples) are not counted.
inline std::int64_t rm_dnn(std::int64_t n_features, const MlpSpec& spec = MlpSpec{}) {
  if (n_features < 0) throw std::invalid_argument("rm_dnn: negative feature count");
  if (spec.hidden.empty()) return 2 * n_features * spec.n_outputs;
  std::int64_t rm = 2 * n_features * spec.hidden.front();
  for (std::size_t i = 0; i + 1 < spec.hidden.size(); ++i) rm += std::int64_t{spec.hidden[i]} * spec.hidden[i + 1];
  rm += std::int64_t{spec.hidden.back()} * spec.n_outputs;
  return rm;
}

/// Back-propagation cost model. Each step runs an overlap-save dispersion
/// filter (two radix-2 FFTs of fft_size points plus one spectral product,
/// 4 real multiplications per complex one, amortized over fft_size - overlap
/// new samples) and a nonlinear phase rotation of nl_mults_per_sample, all at
/// `oversampling` samples per symbol:
///
///   per_step = ceil(oversampling * (4 N (log2 N + 1) / (N - overlap) + nl))
///   rm       = n_spans * steps_per_span * per_step
struct DbpCostParams {
  int n_spans = 15;
  int steps_per_span = 1;
  int fft_size = 64;
  int overlap = 32;
  double nl_mults_per_sample = 10;
  int oversampling = 2;
};

inline std::int64_t rm_dbp(const DbpCostParams& p) {
  if (p.n_spans < 0 || p.steps_per_span < 0) throw std::invalid_argument("rm_dbp: negative count");
  if (p.n_spans == 0 || p.steps_per_span == 0) return 0;
  if (p.fft_size < 2 || (p.fft_size & (p.fft_size - 1)) != 0)
    throw std::invalid_argument("rm_dbp: fft_size must be a power of two");
  if (p.overlap < 0 || p.overlap >= p.fft_size) throw std::invalid_argument("rm_dbp: overlap outside [0, fft_size)");
  const double n = p.fft_size;
  const double lin = 4.0 * n * (std::log2(n) + 1.0) / (n - p.overlap);
  // Round before scaling so that the count is exactly linear in the steps.
  const auto per_step = static_cast<std::int64_t>(std::ceil(p.oversampling * (lin + p.nl_mults_per_sample) - 1e-9));
  return std::int64_t{p.n_spans} * p.steps_per_span * per_step;
}

/// Grid search for the parameter set closest to `target` at fixed n_spans.
/// Ties keep the first hit in the order steps, oversampling, fft_size,
/// overlap, nl (all ascending).
inline DbpCostParams search_dbp_params(std::int64_t target, int n_spans) {
  DbpCostParams best;
  std::int64_t best_err = -1;
  for (int sps = 1; sps <= 4; ++sps)
    for (int os = 1; os <= 2; ++os)
      for (int n = 8; n <= 4096; n *= 2)
        for (int k = 1; k < 16; ++k)
          for (int nl = 0; nl <= 24; ++nl) {
            DbpCostParams p{n_spans, sps, n, n * k / 16, static_cast<double>(nl), os};
            const std::int64_t err = std::llabs(rm_dbp(p) - target);
            if (best_err < 0 || err < best_err) {
              best_err = err;
              best = p;
            }
          }
  return best;
}

/// Conventional perturbation compensation: n_terms products, each costing
/// mults_per_term real multiplications with symbol-product reuse.
inline std::int64_t rm_conv_pbnlc(std::int64_t n_terms, std::int64_t mults_per_term) {
  if (n_terms < 0 || mults_per_term < 0) throw std::invalid_argument("rm_conv_pbnlc: negative count");
  return n_terms * mults_per_term;
}

struct ConvCostConvention {
  std::int64_t mults_per_term = 0;
  std::int64_t fo_terms = 0;
  std::int64_t so_terms = 0;
};

/// Smallest per-term cost of at least one complex multiplication (4 real)
/// that divides both published totals exactly.
inline std::optional<ConvCostConvention> search_conv_convention(std::int64_t fo_total, std::int64_t so_total) {
  for (std::int64_t k = 4; k <= 32; ++k)
    if (fo_total % k == 0 && so_total % k == 0) return ConvCostConvention{k, fo_total / k, so_total / k};
  return std::nullopt;
}

struct TechniqueCost {
  std::string technique;
  std::int64_t rm_per_symbol = 0;
};

struct ComplexityRow {
  std::string technique;
  std::int64_t rm_per_symbol = 0;
  std::optional<std::int64_t> delta_vs_reference;  // reference - this
  std::optional<double> reduction_pct;             // 100 * delta / reference
};

struct ComplexityReport {
  std::string reference;  // empty when no reference technique is present
  std::vector<ComplexityRow> rows;
};

/// Tabulates the costs and, when `reference` is among them, the saving of
/// every technique relative to it.
inline ComplexityReport complexity_report(const std::vector<TechniqueCost>& costs,
                                          const std::string& reference = "CONV-DBP") {
  ComplexityReport rep;
  std::optional<std::int64_t> ref;
  for (const auto& c : costs) {
    if (c.rm_per_symbol < 0) throw std::invalid_argument("complexity_report: negative count for " + c.technique);
    if (c.technique == reference) ref = c.rm_per_symbol;
  }
  if (ref) rep.reference = reference;
  for (const auto& c : costs) {
    ComplexityRow r{c.technique, c.rm_per_symbol, std::nullopt, std::nullopt};
    if (ref) {
      const std::int64_t d = *ref - c.rm_per_symbol;
      r.delta_vs_reference = d;
      r.reduction_pct = *ref > 0 ? 100.0 * static_cast<double>(d) / static_cast<double>(*ref) : 0.0;
    }
    rep.rows.push_back(std::move(r));
  }
  return rep;
}

}  // namespace pbnlc

#endif  // PBNLC_COMPLEXITY_HPP

#ifndef PBNLC_METRICS_HPP
#define PBNLC_METRICS_HPP

#include <boost/math/special_functions/erf.hpp>

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>

#include "pbnlc/qam.hpp"
#include "pbnlc/signal.hpp"

namespace pbnlc {

/// Hamming distance over length.
inline double ber(const Bits& tx, const Bits& decided) {
  if (tx.size() != decided.size()) throw std::invalid_argument("ber: length mismatch");
  if (tx.empty()) throw std::invalid_argument("ber: empty bit streams");
  std::size_t e = 0;
  for (std::size_t i = 0; i < tx.size(); ++i) e += (tx[i] & 1u) != (decided[i] & 1u);
  return static_cast<double>(e) / static_cast<double>(tx.size());
}

/// Q_dB = 20 log10(sqrt(2) erfcinv(2 BER)) for BER in (0, 0.5). When erfcinv
/// underflows to 0 (BER rounding to 0.5) the result is -infinity.
inline double q_from_ber(double b) {
  if (!(b > 0.0 && b < 0.5)) throw std::invalid_argument("q_from_ber: BER outside (0, 0.5)");
  const double x = std::sqrt(2.0) * boost::math::erfc_inv(2.0 * b);
  if (!(x > 0)) return -std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(x);
}

/// Inverse of q_from_ber.
inline double ber_from_q(double q_db) {
  return 0.5 * std::erfc(std::pow(10.0, q_db / 20.0) / std::sqrt(2.0));
}

/// Pruning penalty: Q without pruning minus Q with pruning.
inline double delta_q(double q_unpruned_db, double q_pruned_db) { return q_unpruned_db - q_pruned_db; }

struct QReport {
  double ber = 0.0;
  double q_db = 0.0;
  std::uint64_t n_bits = 0;
  std::uint64_t n_errors = 0;
  // Fewer than kMinErrors errors: q_db is statistically weak.
  bool low_confidence = false;
  double evm_snr_db = 0.0;

  static constexpr std::uint64_t kMinErrors = 100;
};

/// Hard-decision Gray demapping of `rx` against the transmitted `tx` symbols.
/// With zero errors q_db falls back to the Q implied by the EVM-derived SNR
/// for 64-QAM and the report is flagged low-confidence.
inline QReport evaluate_q(const SymbolBlock& tx, const SymbolBlock& rx) {
  if (tx.size() != rx.size()) throw std::invalid_argument("evaluate_q: length mismatch");
  QReport r;
  for (int p = 0; p < 2; ++p) {
    const Bits bt = demap_qam64_rail(tx.pol(p));
    const Bits br = demap_qam64_rail(rx.pol(p));
    for (std::size_t i = 0; i < bt.size(); ++i) r.n_errors += bt[i] != br[i];
    r.n_bits += bt.size();
  }
  if (r.n_bits == 0) throw std::invalid_argument("evaluate_q: empty blocks");
  r.ber = static_cast<double>(r.n_errors) / static_cast<double>(r.n_bits);
  const double e = evm(tx, rx);
  r.evm_snr_db = -20.0 * std::log10(e);
  r.low_confidence = r.n_errors < QReport::kMinErrors;
  if (r.n_errors > 0 && r.ber < 0.5) {
    r.q_db = q_from_ber(r.ber);
  } else if (r.n_errors == 0) {
    // Gray 64-QAM approximation: BER ~ (7/12) erfc(sqrt(SNR/42)).
    const double snr = std::pow(10.0, r.evm_snr_db / 10.0);
    const double b = 7.0 / 12.0 * std::erfc(std::sqrt(snr / 42.0));
    r.q_db = b > 0 ? q_from_ber(std::min(b, 0.499)) : std::numeric_limits<double>::infinity();
  } else {
    r.q_db = -std::numeric_limits<double>::infinity();
  }
  return r;
}

}  // namespace pbnlc

#endif  // PBNLC_METRICS_HPP

#ifndef PBNLC_FEATURES_HPP
#define PBNLC_FEATURES_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <complex>
#include <cstdlib>
#include <map>
#include <mutex>
#include <random>
#include <stdexcept>
#include <vector>

#include "pbnlc/rx.hpp"
#include "pbnlc/signal.hpp"

namespace pbnlc {

enum class Pol : int { x = 0, y = 1 };

struct IndexPair {
  int m = 0;
  int n = 0;
  friend bool operator==(const IndexPair&, const IndexPair&) = default;
};

/// Second-order index: the inner first-order term replaces field `slot`
/// (1: A[k+m], 2: conj(A[k+m+n]), 3: A[k+n]) of the outer triplet.
struct QuintupleIndex {
  IndexPair outer;
  IndexPair inner;
  int slot = 1;
  friend bool operator==(const QuintupleIndex&, const QuintupleIndex&) = default;
};

struct TripletSet {
  std::vector<IndexPair> pairs;
  int window = 0;
  int product_limit = 0;
  // When set only n >= m is kept and the feature for m != n is the sum of the
  // (m, n) and (n, m) twin-triplets, which share one kernel coefficient.
  bool halved = false;

  std::size_t size() const { return pairs.size(); }
};

struct QuintupleSet {
  std::vector<QuintupleIndex> items;
  std::size_t size() const { return items.size(); }
};

/// All (m, n) with |m|, |n| <= window and |m n| <= product_limit, lexicographic.
inline TripletSet build_triplet_set(int window, int product_limit, bool halve_by_symmetry) {
  if (window < 1 || product_limit < 1) throw std::invalid_argument("build_triplet_set: W and L must be >= 1");
  TripletSet s;
  s.window = window;
  s.product_limit = product_limit;
  s.halved = halve_by_symmetry;
  for (int m = -window; m <= window; ++m)
    for (int n = -window; n <= window; ++n) {
      if (std::abs(m * n) > product_limit) continue;
      if (halve_by_symmetry && n < m) continue;
      s.pairs.push_back({m, n});
    }
  return s;
}

/// Outer pairs x inner pairs x slots, outer-major.
inline QuintupleSet build_quintuple_set(int outer_window, int outer_limit, int inner_window, int inner_limit,
                                        const std::vector<int>& slots) {
  for (int sl : slots)
    if (sl < 1 || sl > 3) throw std::invalid_argument("build_quintuple_set: slot must be 1, 2 or 3");
  const auto outer = build_triplet_set(outer_window, outer_limit, false);
  const auto inner = build_triplet_set(inner_window, inner_limit, false);
  QuintupleSet q;
  for (const auto& o : outer.pairs)
    for (const auto& i : inner.pairs)
      for (int sl : slots) q.items.push_back({o, i, sl});
  return q;
}

inline int extent(const IndexPair& p) { return std::max({std::abs(p.m), std::abs(p.n), std::abs(p.m + p.n)}); }

inline int extent(const QuintupleIndex& q) {
  const int pos = q.slot == 1 ? q.outer.m : q.slot == 2 ? q.outer.m + q.outer.n : q.outer.n;
  const int in = std::max({std::abs(pos + q.inner.m), std::abs(pos + q.inner.n), std::abs(pos + q.inner.m + q.inner.n)});
  return std::max(extent(q.outer), in);
}

/// Largest |offset| from the symbol of interest touched by either set.
inline int max_extent(const TripletSet& t, const QuintupleSet& q) {
  int e = 0;
  for (const auto& p : t.pairs) {
    e = std::max(e, extent(p));
    if (t.halved) e = std::max(e, extent(IndexPair{p.n, p.m}));
  }
  for (const auto& x : q.items) e = std::max(e, extent(x));
  return e;
}

namespace detail {

inline void check_range(const SymbolBlock& rx, long k, int ext) {
  if (k - ext < 0 || k + ext >= static_cast<long>(rx.size()))
    throw std::out_of_range("feature index out of range");
}

inline cplx twin_triplet_raw(const cvec& a, const cvec& b, long k, int m, int n) {
  const auto i = [](long v) { return static_cast<std::size_t>(v); };
  return (a[i(k + m)] * std::conj(a[i(k + m + n)]) + b[i(k + m)] * std::conj(b[i(k + m + n)])) * a[i(k + n)];
}

}  // namespace detail

/// Intra- plus inter-polarization first-order triplet at symbol k:
/// (A[k+m] A*[k+m+n] + B[k+m] B*[k+m+n]) A[k+n], with A the rail of `pol`.
inline cplx twin_triplet(const SymbolBlock& rx, long k, IndexPair idx, Pol pol) {
  detail::check_range(rx, k, extent(idx));
  const cvec& a = rx.pol(static_cast<int>(pol));
  const cvec& b = rx.pol(1 - static_cast<int>(pol));
  return detail::twin_triplet_raw(a, b, k, idx.m, idx.n);
}

/// Intra-polarization part only, A[k+m] A*[k+m+n] A[k+n].
inline cplx intra_triplet(const SymbolBlock& rx, long k, IndexPair idx, Pol pol) {
  detail::check_range(rx, k, extent(idx));
  const cvec& a = rx.pol(static_cast<int>(pol));
  const auto i = [](long v) { return static_cast<std::size_t>(v); };
  return a[i(k + idx.m)] * std::conj(a[i(k + idx.m + idx.n)]) * a[i(k + idx.n)];
}

/// Cascaded second-order term: the outer twin-triplet with the field in
/// `slot` replaced by the inner twin-triplet of the same rail evaluated at the
/// shifted symbol. Slot 2 enters conjugated, so the result is a product of
/// five symbols with two conjugations.
inline cplx twin_quintuple(const SymbolBlock& rx, long k, const QuintupleIndex& q, Pol pol) {
  if (q.slot < 1 || q.slot > 3) throw std::invalid_argument("twin_quintuple: slot must be 1, 2 or 3");
  detail::check_range(rx, k, extent(q));
  const cvec& a = rx.pol(static_cast<int>(pol));
  const cvec& b = rx.pol(1 - static_cast<int>(pol));
  const auto i = [](long v) { return static_cast<std::size_t>(v); };
  const int m = q.outer.m, n = q.outer.n;
  auto inner = [&](const cvec& p, const cvec& o, long j) {
    return detail::twin_triplet_raw(p, o, j, q.inner.m, q.inner.n);
  };
  switch (q.slot) {
    case 1:
      return (inner(a, b, k + m) * std::conj(a[i(k + m + n)]) + inner(b, a, k + m) * std::conj(b[i(k + m + n)])) *
             a[i(k + n)];
    case 2:
      return (a[i(k + m)] * std::conj(inner(a, b, k + m + n)) + b[i(k + m)] * std::conj(inner(b, a, k + m + n))) *
             a[i(k + n)];
    default:
      return (a[i(k + m)] * std::conj(a[i(k + m + n)]) + b[i(k + m)] * std::conj(b[i(k + m + n)])) *
             inner(a, b, k + n);
  }
}

/// Drops every item whose twin-quintuple is a linear combination of the
/// earlier kept items, keeping the original order. The cascaded construction
/// produces many coincident polynomials (slot 1 and slot 3 agree when m = n,
/// for one), which would make the least-squares fit singular. Dependence is
/// tested on a generic complex Gaussian block by in-order Gram-Schmidt.
inline QuintupleSet independent_quintuples(const QuintupleSet& q, double tol = 1e-9) {
  QuintupleSet out;
  if (q.items.empty()) return out;
  int ext = 0;
  for (const auto& it : q.items) ext = std::max(ext, extent(it));
  const std::size_t rows = q.size() + 64;
  const std::size_t n = rows + 2 * static_cast<std::size_t>(ext);
  SymbolBlock blk;
  std::mt19937_64 rng(0x5eed);
  std::normal_distribution<double> g;
  for (std::size_t i = 0; i < n; ++i) {
    blk.x.emplace_back(g(rng), g(rng));
    blk.y.emplace_back(g(rng), g(rng));
  }
  std::vector<Eigen::VectorXcd> basis;
  Eigen::VectorXcd v(static_cast<Eigen::Index>(rows));
  for (const auto& it : q.items) {
    for (std::size_t r = 0; r < rows; ++r)
      v(static_cast<Eigen::Index>(r)) = twin_quintuple(blk, static_cast<long>(r) + ext, it, Pol::x);
    const double norm0 = v.norm();
    if (!(norm0 > 0)) continue;
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& b : basis) v -= b * b.dot(v);
    const double res = v.norm();
    if (res <= tol * norm0) continue;
    basis.push_back(v / res);
    out.items.push_back(it);
  }
  return out;
}

/// Memoized independent_quintuples(build_quintuple_set(...)).
inline QuintupleSet reduced_quintuple_set(int outer_window, int outer_limit, int inner_window, int inner_limit,
                                          const std::vector<int>& slots) {
  static std::mutex mu;
  static std::map<std::vector<int>, QuintupleSet> cache;
  std::vector<int> key{outer_window, outer_limit, inner_window, inner_limit};
  key.insert(key.end(), slots.begin(), slots.end());
  {
    std::lock_guard<std::mutex> lk(mu);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
  }
  QuintupleSet q =
      independent_quintuples(build_quintuple_set(outer_window, outer_limit, inner_window, inner_limit, slots));
  std::lock_guard<std::mutex> lk(mu);
  return cache.emplace(key, std::move(q)).first->second;
}

struct FeatureRecord {
  cvec fo;
  cvec so;
  cplx target;
  Pol pol = Pol::x;
  long symbol_index = 0;
};

/// Row-major feature matrices for a block of records. Rows are ordered x-pol
/// records for k = guard .. n-guard-1, then the y-pol records.
///
/// Features are stored in single precision; a row of complex<float> is the
/// interleaved (re, im) lane vector fed to the networks.
struct FeatureTable {
  std::size_t rows = 0;
  std::size_t n_fo = 0;
  std::size_t n_so = 0;
  std::size_t guard = 0;
  std::size_t n_symbols = 0;
  std::vector<std::complex<float>> fo;
  std::vector<std::complex<float>> so;
  cvec target;

  const std::complex<float>* fo_row(std::size_t r) const { return fo.data() + r * n_fo; }
  const std::complex<float>* so_row(std::size_t r) const { return so.data() + r * n_so; }
  Pol pol(std::size_t r) const { return r < rows / 2 ? Pol::x : Pol::y; }
  long symbol_index(std::size_t r) const { return static_cast<long>(guard + r % (rows / 2)); }

  FeatureRecord record(std::size_t r) const {
    FeatureRecord rec;
    rec.fo.assign(fo_row(r), fo_row(r) + n_fo);
    rec.so.assign(so_row(r), so_row(r) + n_so);
    rec.target = target[r];
    rec.pol = pol(r);
    rec.symbol_index = symbol_index(r);
    return rec;
  }
};

/// Twin-triplet and twin-quintuple features of every interior symbol and both
/// polarizations, computed on the received symbols, with target rx - tx.
inline FeatureTable extract_features(const AlignedPairs& pairs, const TripletSet& tset, const QuintupleSet& qset,
                                     std::size_t guard) {
  const SymbolBlock& rx = pairs.rx;
  const std::size_t n = rx.size();
  if (pairs.tx.size() != n) throw std::invalid_argument("extract_features: tx/rx length mismatch");
  if (guard < static_cast<std::size_t>(max_extent(tset, qset)))
    throw std::invalid_argument("extract_features: guard smaller than the feature extent");
  if (2 * guard >= n) throw std::invalid_argument("extract_features: block shorter than twice the guard");

  FeatureTable t;
  t.guard = guard;
  t.n_symbols = n;
  const std::size_t per_pol = n - 2 * guard;
  t.rows = 2 * per_pol;
  t.n_fo = tset.size();
  t.n_so = qset.size();
  t.fo.resize(t.rows * t.n_fo);
  t.so.resize(t.rows * t.n_so);
  t.target.resize(t.rows);

  // Inner first-order tables T[pol][j * n_inner + i], shared by all outer indices.
  std::vector<IndexPair> inner;
  for (const auto& q : qset.items)
    if (std::find(inner.begin(), inner.end(), q.inner) == inner.end()) inner.push_back(q.inner);
  std::vector<std::size_t> inner_id(qset.size());
  for (std::size_t i = 0; i < qset.size(); ++i)
    inner_id[i] = static_cast<std::size_t>(std::find(inner.begin(), inner.end(), qset.items[i].inner) - inner.begin());
  int inner_ext = 0;
  for (const auto& p : inner) inner_ext = std::max(inner_ext, extent(p));
  std::vector<cvec> tbl(2, cvec(inner.empty() ? 0 : n * inner.size()));
  for (int p = 0; p < 2 && !inner.empty(); ++p) {
    const cvec& a = rx.pol(p);
    const cvec& b = rx.pol(1 - p);
    for (long j = inner_ext; j + inner_ext < static_cast<long>(n); ++j)
      for (std::size_t i = 0; i < inner.size(); ++i)
        tbl[static_cast<std::size_t>(p)][static_cast<std::size_t>(j) * inner.size() + i] =
            detail::twin_triplet_raw(a, b, j, inner[i].m, inner[i].n);
  }

  const auto u = [](long v) { return static_cast<std::size_t>(v); };
  for (int p = 0; p < 2; ++p) {
    const cvec& a = rx.pol(p);
    const cvec& b = rx.pol(1 - p);
    const cvec& ta = tbl[static_cast<std::size_t>(p)];
    const cvec& tb = tbl[static_cast<std::size_t>(1 - p)];
    for (std::size_t s = 0; s < per_pol; ++s) {
      const std::size_t r = static_cast<std::size_t>(p) * per_pol + s;
      const long k = static_cast<long>(guard + s);
      t.target[r] = rx.pol(p)[u(k)] - pairs.tx.pol(p)[u(k)];
      std::complex<float>* fo = t.fo.data() + r * t.n_fo;
      for (std::size_t i = 0; i < t.n_fo; ++i) {
        const auto& ip = tset.pairs[i];
        cplx v = detail::twin_triplet_raw(a, b, k, ip.m, ip.n);
        if (tset.halved && ip.m != ip.n) v += detail::twin_triplet_raw(a, b, k, ip.n, ip.m);
        fo[i] = std::complex<float>(v);
      }
      std::complex<float>* so = t.so.data() + r * t.n_so;
      const std::size_t ni = inner.size();
      for (std::size_t i = 0; i < t.n_so; ++i) {
        const auto& q = qset.items[i];
        const long m = q.outer.m, nn = q.outer.n;
        const std::size_t id = inner_id[i];
        cplx v;
        switch (q.slot) {
          case 1:
            v = (ta[u(k + m) * ni + id] * std::conj(a[u(k + m + nn)]) +
                 tb[u(k + m) * ni + id] * std::conj(b[u(k + m + nn)])) *
                a[u(k + nn)];
            break;
          case 2:
            v = (a[u(k + m)] * std::conj(ta[u(k + m + nn) * ni + id]) +
                 b[u(k + m)] * std::conj(tb[u(k + m + nn) * ni + id])) *
                a[u(k + nn)];
            break;
          default:
            v = (a[u(k + m)] * std::conj(a[u(k + m + nn)]) + b[u(k + m)] * std::conj(b[u(k + m + nn)])) *
                ta[u(k + nn) * ni + id];
        }
        so[i] = std::complex<float>(v);
      }
    }
  }
  return t;
}

/// Raised when the least-squares normal equations are numerically singular.
class DegenerateError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

enum class FitTerms { fo, fo_so };

struct LsFit {
  FitTerms terms = FitTerms::fo;
  cvec coeffs;  // first n_fo for the triplets, then n_so for the quintuples
  double residual_mse = 0.0;
};

inline std::size_t fit_width(const FeatureTable& t, FitTerms terms) {
  return t.n_fo + (terms == FitTerms::fo_so ? t.n_so : 0);
}

/// Sum_i c_i feature_i for one row.
inline cplx predict_row(const FeatureTable& t, std::size_t r, const cvec& c, FitTerms terms) {
  if (c.size() != fit_width(t, terms)) throw std::invalid_argument("predict_row: coefficient count mismatch");
  cplx acc{};
  const auto* fo = t.fo_row(r);
  for (std::size_t i = 0; i < t.n_fo; ++i) acc += c[i] * cplx(fo[i]);
  if (terms == FitTerms::fo_so) {
    const auto* so = t.so_row(r);
    for (std::size_t i = 0; i < t.n_so; ++i) acc += c[t.n_fo + i] * cplx(so[i]);
  }
  return acc;
}

/// Complex least squares min sum |target - sum c_i f_i|^2 via the normal equations.
inline LsFit fit_kernel_ls(const FeatureTable& t, FitTerms terms) {
  const std::size_t p = fit_width(t, terms);
  if (p == 0) throw std::invalid_argument("fit_kernel_ls: no features");
  if (t.rows < 10 * p) throw std::invalid_argument("fit_kernel_ls: fewer than 10 records per coefficient");
  using Mat = Eigen::MatrixXcd;
  Mat gram = Mat::Zero(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
  Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(p));
  const std::size_t chunk = 2048;
  Mat a;
  Eigen::VectorXcd y;
  for (std::size_t r0 = 0; r0 < t.rows; r0 += chunk) {
    const std::size_t rn = std::min(chunk, t.rows - r0);
    a.resize(static_cast<Eigen::Index>(rn), static_cast<Eigen::Index>(p));
    y.resize(static_cast<Eigen::Index>(rn));
    for (std::size_t r = 0; r < rn; ++r) {
      const auto ri = static_cast<Eigen::Index>(r);
      const auto* fo = t.fo_row(r0 + r);
      for (std::size_t i = 0; i < t.n_fo; ++i) a(ri, static_cast<Eigen::Index>(i)) = cplx(fo[i]);
      if (terms == FitTerms::fo_so) {
        const auto* so = t.so_row(r0 + r);
        for (std::size_t i = 0; i < t.n_so; ++i) a(ri, static_cast<Eigen::Index>(t.n_fo + i)) = cplx(so[i]);
      }
      y(ri) = t.target[r0 + r];
    }
    gram.selfadjointView<Eigen::Lower>().rankUpdate(a.adjoint());
    rhs.noalias() += a.adjoint() * y;
  }
  gram.triangularView<Eigen::StrictlyUpper>() = gram.adjoint();
  Eigen::LDLT<Mat> ldlt(gram);
  if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-13)
    throw DegenerateError("fit_kernel_ls: rank-deficient normal equations");
  const Eigen::VectorXcd c = ldlt.solve(rhs);

  LsFit fit;
  fit.terms = terms;
  fit.coeffs.assign(c.data(), c.data() + c.size());
  double acc = 0.0;
  for (std::size_t r = 0; r < t.rows; ++r) acc += std::norm(t.target[r] - predict_row(t, r, fit.coeffs, terms));
  fit.residual_mse = acc / static_cast<double>(t.rows);
  return fit;
}

/// Interior rx symbols with the table's per-row estimates subtracted.
inline SymbolBlock subtract_estimates(const AlignedPairs& pairs, const FeatureTable& t, const cvec& estimate) {
  if (estimate.size() != t.rows) throw std::invalid_argument("subtract_estimates: estimate count mismatch");
  const std::size_t per_pol = t.rows / 2;
  SymbolBlock out;
  out.baud_rate_hz = pairs.rx.baud_rate_hz;
  for (int p = 0; p < 2; ++p) {
    out.pol(p).resize(per_pol);
    for (std::size_t s = 0; s < per_pol; ++s)
      out.pol(p)[s] = pairs.rx.pol(p)[t.guard + s] - estimate[static_cast<std::size_t>(p) * per_pol + s];
  }
  return out;
}

/// Interior tx (reference) symbols matching subtract_estimates.
inline SymbolBlock interior(const SymbolBlock& s, std::size_t guard) {
  if (2 * guard >= s.size()) throw std::invalid_argument("interior: guard too large");
  SymbolBlock out;
  out.baud_rate_hz = s.baud_rate_hz;
  for (int p = 0; p < 2; ++p) out.pol(p).assign(s.pol(p).begin() + static_cast<long>(guard), s.pol(p).end() - static_cast<long>(guard));
  return out;
}

/// Conventional perturbation-based compensation with LS-fitted coefficients.
inline SymbolBlock apply_conv_pbnlc(const AlignedPairs& pairs, const LsFit& fit, const TripletSet& tset,
                                    const QuintupleSet& qset, std::size_t guard) {
  const QuintupleSet empty;
  const QuintupleSet& q = fit.terms == FitTerms::fo_so ? qset : empty;
  const std::size_t want = tset.size() + q.size();
  if (fit.coeffs.size() != want) throw std::invalid_argument("apply_conv_pbnlc: index sets do not match coefficients");
  const FeatureTable t = extract_features(pairs, tset, q, guard);
  cvec est(t.rows);
  for (std::size_t r = 0; r < t.rows; ++r) est[r] = predict_row(t, r, fit.coeffs, fit.terms);
  return subtract_estimates(pairs, t, est);
}

}  // namespace pbnlc

#endif  // PBNLC_FEATURES_HPP

#ifndef PBNLC_QAM_HPP
#define PBNLC_QAM_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "pbnlc/seed.hpp"
#include "pbnlc/signal.hpp"

namespace pbnlc {

using Bits = std::vector<std::uint8_t>;

struct BitBlock {
  Bits x_bits;
  Bits y_bits;
};

// Square Gray-coded 64-QAM.
//
// Each symbol takes 6 bits b0..b5 (b0 first in the stream). b0b1b2 select the
// in-phase level and b3b4b5 the quadrature level. On each rail the 3-bit label
// is the binary-reflected Gray code of the level index i in 0..7, and the
// level is (2i - 7) / sqrt(42):
//
//   label: 000 001 011 010 110 111 101 100
//   level:  -7  -5  -3  -1  +1  +3  +5  +7
//
// So 000000 maps to the corner (-7 - 7j)/sqrt(42), and adjacent levels on a
// rail differ in exactly one bit. Average symbol energy is exactly 1.
namespace qam64 {

inline constexpr int kBitsPerSymbol = 6;
inline const double kScale = 1.0 / std::sqrt(42.0);

inline constexpr unsigned gray(unsigned i) { return i ^ (i >> 1); }

inline constexpr unsigned gray_inverse(unsigned g) {
  unsigned i = g;
  for (unsigned s = g >> 1; s != 0; s >>= 1) i ^= s;
  return i;
}

inline double level(unsigned label3) { return (2.0 * gray_inverse(label3) - 7.0) * kScale; }

/// Hard-decision slicer for one rail, returns the 3-bit Gray label.
inline unsigned slice(double v) {
  double idx = std::round((v / kScale + 7.0) / 2.0);
  idx = std::clamp(idx, 0.0, 7.0);
  return gray(static_cast<unsigned>(idx));
}

inline cplx point(unsigned label6) {
  return {level((label6 >> 3) & 7u), level(label6 & 7u)};
}

inline std::array<cplx, 64> constellation() {
  std::array<cplx, 64> c{};
  for (unsigned l = 0; l < 64; ++l) c[l] = point(l);
  return c;
}

}  // namespace qam64

inline cvec map_qam64_rail(const Bits& bits) {
  if (bits.size() % qam64::kBitsPerSymbol != 0)
    throw std::invalid_argument("map_qam64: bit count is not a multiple of 6");
  cvec out(bits.size() / qam64::kBitsPerSymbol);
  for (std::size_t s = 0; s < out.size(); ++s) {
    unsigned label = 0;
    for (int b = 0; b < qam64::kBitsPerSymbol; ++b)
      label = (label << 1) | (bits[s * qam64::kBitsPerSymbol + b] & 1u);
    out[s] = qam64::point(label);
  }
  return out;
}

inline SymbolBlock map_qam64(const BitBlock& bits, double baud_rate_hz = 0.0) {
  SymbolBlock sb{map_qam64_rail(bits.x_bits), map_qam64_rail(bits.y_bits), baud_rate_hz};
  if (sb.x.size() != sb.y.size()) throw std::invalid_argument("map_qam64: polarization lengths differ");
  return sb;
}

inline Bits demap_qam64_rail(std::span<const cplx> sym) {
  Bits out(sym.size() * qam64::kBitsPerSymbol);
  for (std::size_t s = 0; s < sym.size(); ++s) {
    const unsigned label = (qam64::slice(sym[s].real()) << 3) | qam64::slice(sym[s].imag());
    for (int b = 0; b < qam64::kBitsPerSymbol; ++b)
      out[s * qam64::kBitsPerSymbol + b] = static_cast<std::uint8_t>((label >> (5 - b)) & 1u);
  }
  return out;
}

inline BitBlock demap_qam64(const SymbolBlock& sb) {
  return {demap_qam64_rail(sb.x), demap_qam64_rail(sb.y)};
}

/// Nearest constellation point on each rail.
inline cplx decide_qam64(cplx v) {
  return {qam64::level(qam64::slice(v.real())), qam64::level(qam64::slice(v.imag()))};
}

/// Uniform pseudorandom bits from a 64-bit Mersenne twister.
inline Bits random_bits(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Bits b(n);
  std::uint64_t word = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (i % 64 == 0) word = rng();
    b[i] = static_cast<std::uint8_t>((word >> (i % 64)) & 1u);
  }
  return b;
}

}  // namespace pbnlc

#endif  // PBNLC_QAM_HPP

#ifndef PBNLC_SEED_HPP
#define PBNLC_SEED_HPP

#include <cstdint>
#include <initializer_list>

namespace pbnlc {

inline constexpr std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Child seed for a labelled sub-stream: the labels are folded in order, so
/// derive_seed(s, {span, rail}) gives independent streams per span and rail.
inline constexpr std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> labels) {
  std::uint64_t s = splitmix64(base);
  for (std::uint64_t l : labels) s = splitmix64(s ^ splitmix64(l + 0x632BE59BD9B4E019ull));
  return s;
}

// Stream labels.
enum class SeedRole : std::uint64_t { bits = 1, noise = 2, model = 3, split = 4 };
enum class DataRole : std::uint64_t { train = 1, test = 2 };

}  // namespace pbnlc

#endif  // PBNLC_SEED_HPP

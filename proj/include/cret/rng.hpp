#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace cret {

/// Seeded random stream. The engine is std::mt19937_64, whose output
/// sequence is fixed by the standard; the derived draws below are written
/// out explicitly because std:: distributions differ between library
/// vendors and runs must replay bit-identically on any toolchain.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  /// Independent stream for `purpose`, derived from a run seed.
  static Rng keyed(std::uint64_t seed, std::string_view purpose);

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n). n must be > 0.
  std::size_t below(std::size_t n);

  /// Standard normal (Box-Muller, one draw per call).
  double normal();

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  /// k distinct indices from [0, n), in draw order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

 private:
  std::mt19937_64 engine_;
};

/// 64-bit mixing of a seed with a label; stable across platforms.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose);

}  // namespace cret

#pragma once

#include <cstdint>
#include <string_view>

namespace ovtal {

/// Counter-based generator: the i-th draw of a stream is a pure function
/// of (key, i), so results are identical on every platform and streams can
/// be split without sharing state. The mixing function is SplitMix64's
/// finalizer.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(mix(key ^ 0x9E3779B97F4A7C15ULL)) {}

  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Independent child stream; does not advance this one.
  CounterRng split(std::uint64_t stream) const {
    return CounterRng(mix(key_ ^ mix(stream + 0x632BE59BD9B4E019ULL)));
  }
  CounterRng split(std::string_view label) const;

  std::uint64_t next_u64() { return mix(key_ + counter_++ * 0xD1B54A32D192ED03ULL); }

  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  /// Standard normal via Box-Muller (one value per two uniforms).
  double normal();

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace ovtal

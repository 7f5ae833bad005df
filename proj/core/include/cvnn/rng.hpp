#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace cvnn {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Key for an independent stream derived from a parent key and a stream index.
constexpr std::uint64_t derive_key(std::uint64_t key, std::uint64_t stream) noexcept {
  return mix64(mix64(key) ^ mix64(stream + 0x632BE59BD9B4E019ull));
}

/// Counter-based generator: draw n of stream `key` is mix64(key + n * golden).
///
/// The stream is a pure function of (key, counter), so it is reproducible in
/// any language with 64-bit unsigned arithmetic. Normals come from Box-Muller
/// on two consecutive uniforms; no value is cached between calls.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key = 0) noexcept : key_(key) {}

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64() noexcept { return mix64(key_ + (counter_++) * 0x9E3779B97F4A7C15ull); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform integer on [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) noexcept {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(next_u64() % span);
  }

  double normal() noexcept {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  bool bernoulli(double p) noexcept { return uniform() < p; }

  CounterRng split(std::uint64_t stream) const noexcept { return CounterRng(derive_key(key_, stream)); }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace cvnn

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace sphere4 {

/// SplitMix64 output finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Stream tags. Every (seed, purpose[, index]) triple owns an independent
/// stream, so results never depend on the order in which streams are consumed.
enum class Purpose : std::uint64_t {
  dictionary = 1,
  code = 2,
  init = 3,
  filters = 4,
  trial = 5,
  sample_index = 6,
  eigensolver = 7,
  cell = 8,
  monte_carlo = 9,
};

/// Counter-based splittable generator.
///
/// The n-th draw is a pure function of (key, n): mix64(key + (n+1)·γ), which is
/// SplitMix64 started at `key`. `split` derives a child key by hashing, so
/// parallel trials get reproducible streams regardless of scheduling.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t seed) noexcept : key_(mix64(seed ^ 0x6a09e667f3bcc909ULL)) {}

  [[nodiscard]] CounterRng split(std::uint64_t tag) const noexcept {
    CounterRng child(0);
    child.key_ = mix64(key_ ^ mix64(tag + 0x3c6ef372fe94f82bULL));
    return child;
  }
  [[nodiscard]] CounterRng split(Purpose p) const noexcept {
    return split(static_cast<std::uint64_t>(p));
  }
  [[nodiscard]] CounterRng split(Purpose p, std::uint64_t index) const noexcept {
    return split(p).split(index);
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept { return next_u64(); }

  std::uint64_t next_u64() noexcept {
    ++counter_;
    return mix64(key_ + counter_ * kGamma);
  }

  /// Uniform on the open interval (0, 1).
  double uniform() noexcept {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal via Box–Muller (one output per two uniforms).
  double normal() noexcept {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  bool bernoulli(double p) noexcept { return uniform() < p; }

  /// Uniform integer in [0, n). Rejection sampling keeps it unbiased.
  std::uint64_t below(std::uint64_t n) noexcept {
    if (n <= 1) return 0;
    const std::uint64_t limit = max() - max() % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  [[nodiscard]] std::uint64_t draws() const noexcept { return counter_; }

 private:
  static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace sphere4

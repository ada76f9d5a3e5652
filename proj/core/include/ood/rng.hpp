#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace ood {

/// Identifier recorded in every provenance block. Bump the suffix whenever the
/// bit stream produced for a given seed changes.
inline constexpr std::string_view kGeneratorName = "xoshiro256**/splitmix64-substreams/v1";

/// SplitMix64 finalizer; a bijective 64-bit mixer.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Seed of substream `index` under `root`. Parallel work partitions draw from
/// substreams keyed by block index, never by worker.
std::uint64_t substream_seed(std::uint64_t root, std::uint64_t index) noexcept;

/// Seed derived from `root` and a stage label ("train", "eval-in", ...).
std::uint64_t derive_seed(std::uint64_t root, std::string_view label) noexcept;

/// xoshiro256** seeded through SplitMix64. All variates are produced by the
/// routines below so streams are identical across standard libraries.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed) noexcept;

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~result_type{0}; }
  result_type operator()() noexcept { return next(); }

  std::uint64_t next() noexcept;

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;
  /// Uniform on (0, 1).
  double uniform_open() noexcept;
  /// Standard normal via Box-Muller; the second variate of each pair is cached.
  double normal() noexcept;
  /// Uniform integer in [0, bound), bound > 0, without modulo bias.
  std::uint64_t below(std::uint64_t bound) noexcept;

 private:
  std::array<std::uint64_t, 4> s_{};
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace ood

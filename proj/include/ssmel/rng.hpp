#pragma once

#include <cstdint>

namespace ssmel {

/// SplitMix64 finalizer. Used for seeding and for deriving per-replication
/// seeds, so it must never change.
std::uint64_t splitmix64(std::uint64_t x);

/// Stable seed for replication `index` of an experiment seeded with `base`.
/// Depends on (base, index) only, so replications can run in any order.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

/// xoshiro256** generator with Box-Muller normals.
///
/// The state is expanded from a single 64-bit seed with SplitMix64, the
/// way the reference implementation recommends. Every draw is specified
/// down to the bit (up to libm's log/cos/sin), unlike the distributions in
/// <random> whose algorithms are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next();

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Unbiased integer in [0, bound), Lemire's multiply-and-reject.
  std::uint64_t bounded(std::uint64_t bound);

  /// Standard normal via Box-Muller; the second value of each pair is cached.
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }

 private:
  std::uint64_t s_[4];
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace ssmel

#pragma once

#include "ssmel/moment_model.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace ssmel {

enum class SplitPolicy {
  /// K must divide n; every subset has exactly n / K points.
  strict_equal,
  /// Every subset has floor(n / K) points; n mod K random points are dropped.
  trim,
};

/// Random partition of sample indices into K equal-size subsets.
///
/// `assignment` lists the included indices subset by subset; subset k is
/// the contiguous range [offsets[k], offsets[k + 1]).
struct SplitPlan {
  Index n = 0;
  Index K = 0;
  std::uint64_t seed = 0;
  SplitPolicy policy = SplitPolicy::strict_equal;
  std::vector<Index> sizes;
  std::vector<Index> offsets;
  std::vector<Index> assignment;
  std::vector<Index> excluded;

  std::span<const Index> subset(Index k) const {
    return std::span<const Index>(assignment).subspan(static_cast<std::size_t>(offsets[k]),
                                                      static_cast<std::size_t>(sizes[k]));
  }
  Index block_size() const { return sizes.empty() ? 0 : sizes.front(); }
};

/// Shuffles 0..n-1 with the seeded generator and cuts the result into K
/// subsets. K == 1 and K == n need no shuffle (every ordering gives the same
/// partition up to relabeling) and use the identity order, so K = n is the
/// full-data likelihood regardless of seed.
///
/// Throws std::invalid_argument when K is outside [1, n] or, under
/// strict_equal, does not divide n.
SplitPlan make_split(Index n, Index K, std::uint64_t seed, SplitPolicy policy = SplitPolicy::strict_equal);

/// Throws InfeasibleSplitError when K < p: K block means cannot carry p
/// free parameters.
void require_enough_blocks(Index K, Index param_dim);

/// Rows of `data` listed by subset k of the plan, in plan order.
Dataset subset_data(const Dataset& data, const SplitPlan& plan, Index k);

}  // namespace ssmel

#include "ssmel/split.hpp"

#include "ssmel/errors.hpp"
#include "ssmel/rng.hpp"

#include <numeric>
#include <stdexcept>
#include <string>

namespace ssmel {

SplitPlan make_split(Index n, Index K, std::uint64_t seed, SplitPolicy policy) {
  if (K < 1 || K > n)
    throw std::invalid_argument("need 1 <= K <= n, got K=" + std::to_string(K) + ", n=" + std::to_string(n));
  if (policy == SplitPolicy::strict_equal && n % K != 0)
    throw std::invalid_argument("K=" + std::to_string(K) + " does not divide n=" + std::to_string(n) +
                                " (use the trim policy to drop the remainder)");

  SplitPlan plan;
  plan.n = n;
  plan.K = K;
  plan.seed = seed;
  plan.policy = policy;

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  if (K > 1 && K < n) {
    Rng rng(seed);
    for (Index i = n - 1; i > 0; --i) {
      const auto j = static_cast<Index>(rng.bounded(static_cast<std::uint64_t>(i + 1)));
      std::swap(order[i], order[j]);
    }
  }

  const Index m = n / K;
  const Index kept = m * K;
  plan.assignment.assign(order.begin(), order.begin() + kept);
  plan.excluded.assign(order.begin() + kept, order.end());
  plan.sizes.assign(static_cast<std::size_t>(K), m);
  plan.offsets.resize(static_cast<std::size_t>(K + 1));
  for (Index k = 0; k <= K; ++k) plan.offsets[k] = k * m;
  return plan;
}

void require_enough_blocks(Index K, Index param_dim) {
  if (K < param_dim)
    throw InfeasibleSplitError("K=" + std::to_string(K) + " blocks cannot identify p=" + std::to_string(param_dim) +
                               " parameters (need K >= p; K of at least 100 is advisable)");
}

Dataset subset_data(const Dataset& data, const SplitPlan& plan, Index k) {
  const auto idx = plan.subset(k);
  Dataset out;
  out.rows.resize(static_cast<Index>(idx.size()), data.dim());
  for (std::size_t i = 0; i < idx.size(); ++i) out.rows.row(static_cast<Index>(i)) = data.rows.row(idx[i]);
  return out;
}

}  // namespace ssmel

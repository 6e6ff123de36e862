#pragma once

#include "ssmel/moment_model.hpp"

#include <cstdint>

namespace ssmel {

struct SimulatedData {
  Dataset data;
  ParamVector truth;
};

/// mu ~ U(-2, 2) and sigma ~ U(0.5, 2) drawn first, then n draws of
/// N(mu, sigma^2). truth = (mu, sigma).
SimulatedData gen_normal(Index n, std::uint64_t seed);

/// Linear model y = x'beta + e with an intercept and p equicorrelated
/// N(0, 1) covariates (x_j = sqrt(rho) z_0 + sqrt(1 - rho) z_j, so every
/// pair has correlation rho) and e ~ N(0, 1).
///
/// Rows are laid out for RegressionModel(p + 1): (y, 1, x_1, ..., x_p).
/// truth = (1, 5, 4, 3, 2, 1, ..., 1), truncated to p + 1 entries when
/// p < 4. Throws std::invalid_argument unless 0 <= rho < 1 and p >= 1.
SimulatedData gen_regression(Index n, Index p, double rho, std::uint64_t seed);

/// Standard bivariate normal with correlation 0.5 (y = rho x + sqrt(1 -
/// rho^2) z). truth = (0, 0, 1, 1, 0.5).
SimulatedData gen_bivariate(Index n, std::uint64_t seed);

}  // namespace ssmel

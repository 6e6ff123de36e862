#pragma once

#include "ssmel/moment_model.hpp"
#include "ssmel/solver.hpp"

#include <cstdint>
#include <vector>

namespace ssmel {

/// Regularized lower incomplete gamma P(a, x), by series for x < a + 1 and
/// by Lentz's continued fraction for Q otherwise.
double regularized_gamma_p(double a, double x);
double regularized_gamma_q(double a, double x);

double chi2_cdf(double x, int df);
/// Upper tail, computed directly so small p-values keep their precision.
double chi2_sf(double x, int df);
/// Bisection on chi2_cdf to 1e-13 relative width.
double chi2_quantile(double p, int df);

/// H0: theta[indices[i]] = values[i].
struct Constraint {
  std::vector<Index> indices;
  std::vector<double> values;
};

struct TestResult {
  /// W = 2 (l_S(theta_restricted) - l_S(theta_hat)), clamped at zero.
  double statistic = 0.0;
  /// Unclamped difference, for diagnostics.
  double raw_statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
  bool reject = false;
  /// The restricted value is outside the hull (or the bounds); W = inf.
  bool diverged_hull = false;
  bool nuisance_converged = true;
  ParamVector theta_hat_used;
  ParamVector theta_restricted;
  double log_el_hat = 0.0;
  double log_el_restricted = 0.0;
};

/// Profile test of `constraint` against an existing unrestricted fit, on the
/// fit's split. Nuisance coordinates are re-minimized by the outer solver,
/// starting from the fit; df = number of constrained coordinates.
TestResult profile_test(const MomentModel& model, const Dataset& data, const SsmelFit& fit,
                        const Constraint& constraint, double alpha, const SolverConfig& config);

/// Fits theta_hat with K blocks (split from `seed`) and tests `constraint`.
TestResult profile_test(const MomentModel& model, const Dataset& data, Index K, const Constraint& constraint,
                        double alpha, const SolverConfig& config, std::uint64_t seed);

/// H0: theta = theta0 (every coordinate constrained), df = p.
TestResult wilks_test(const MomentModel& model, const Dataset& data, Index K, const ParamVector& theta0,
                      double alpha, const SolverConfig& config, std::uint64_t seed);

/// Constraint fixing every coordinate to theta0.
Constraint full_constraint(const ParamVector& theta0);

struct ConfidenceInterval {
  double lo = 0.0;
  double hi = 0.0;
  double level = 0.95;
  double grid_step = 0.0;
  Index param_index = 0;
};

struct ConfidenceScan {
  ConfidenceInterval interval;
  std::vector<double> grid;
  std::vector<bool> member;
  std::vector<double> statistic;
  /// False when the members do not form one contiguous run of grid points.
  bool contiguous = true;
  ParamVector theta_hat;
};

/// Inverts the profile test over a sorted grid for one coordinate. The
/// interval runs from the smallest to the largest member and always covers
/// the point estimate. Grid points are tested in parallel.
///
/// Throws std::invalid_argument when the grid is unsorted or does not span
/// the estimate, std::runtime_error when no grid point is a member.
ConfidenceScan confidence_set_scan(const MomentModel& model, const Dataset& data, Index K, Index param_index,
                                   double level, const std::vector<double>& grid, const SolverConfig& config,
                                   std::uint64_t seed);

}  // namespace ssmel

#pragma once

#include "ssmel/el_core.hpp"
#include "ssmel/mean_blocks.hpp"
#include "ssmel/moment_model.hpp"
#include "ssmel/split.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace ssmel {

enum class Schedule {
  /// Block statistics are evaluated once per outer round at the round's
  /// opening theta; every coordinate step in the round works from them.
  round_stale,
  /// Block means are recomputed after every coordinate step.
  fresh,
};

struct SolverConfig {
  /// Stop once an outer round moves no coordinate by gamma or more.
  double gamma = 1e-4;
  int max_outer = 500;
  LambdaSolveConfig inner;
  /// Pseudo-log threshold; 1/K when unset.
  std::optional<double> epsilon;
  Schedule schedule = Schedule::round_stale;
  int outer_max_halvings = 40;
  bool record_trace = false;
};

struct TraceEntry {
  Index round;
  ParamVector theta;
  double objective;
  bool accepted;
};

struct SsmelFit {
  ParamVector theta_hat;
  Vector lambda_hat;
  /// l_S(theta_hat) = sum_k log*(1 + lambda' gbar_k) = K * objective.
  double log_el = 0.0;
  /// Outer objective f(theta_hat) = max_lambda f(lambda; theta_hat).
  double objective = 0.0;
  Index outer_iters = 0;
  bool converged = false;
  std::optional<Matrix> covariance;
  SplitPlan split;
  std::vector<TraceEntry> trace;
};

struct RoundSummary {
  Index round = 0;
  /// The statistics of this round were accepted as a new iterate.
  bool accepted = false;
  double objective = 0.0;
  /// max_t |theta_t| change between this round's theta and the next one.
  double max_delta = 0.0;
  int coordinate_updates = 0;
  int lambda_refreshes = 0;
  bool done = false;
};

/// Newton step for theta_t on the profile objective, from block statistics.
///
/// The numerator is the envelope gradient sum_k log*'(s_k) w_kt and the
/// fixed-lambda curvature sum_k {log*''(s_k) w_kt^2 + log*'(s_k) z_kt} is
/// corrected by c' (-H)^{-1} c, the part of the curvature that comes from
/// lambda following theta (H is the lambda Hessian, c the cross partial).
/// A non-positive profile curvature falls back to its magnitude. Returns 0
/// when the gradient vanishes.
double profile_newton_step(const Matrix& blocks, const Vector& lambda, const Eigen::Ref<const Matrix>& jac_t,
                           const Eigen::Ref<const Matrix>& second_t, const PseudoLog& plog);

/// Coordinator side of the two-layer coordinate descent.
///
/// Each round consumes MeanBlocks (with derivatives) evaluated at
/// pending_theta() and proposes the next theta. The exact objective at a
/// proposed theta is only known once its statistics come back; a proposal
/// that raises it is rejected and retried at half the step, so the
/// objective over accepted iterates never increases. Within a round each
/// free coordinate gets one Newton step (profile_newton_step), halved until
/// the objective decreases, followed by the multiplier refresh. Between
/// fresh statistics the blocks are advanced by their second-order expansion
/// in the moved coordinate, built from the round's Jacobians and second
/// partials.
///
/// A proposal that moves every coordinate by less than gamma is checked in
/// one final round and the run ends there.
class OuterSolver {
 public:
  OuterSolver(std::vector<OpenInterval> bounds, Index num_blocks, Index num_equations, const SolverConfig& config,
              ParamVector theta0, std::vector<bool> free_coordinates = {});

  bool done() const { return done_; }
  const ParamVector& pending_theta() const { return pending_; }
  const Vector& lambda() const { return lambda_; }
  Index rounds() const { return rounds_; }
  double epsilon() const { return epsilon_; }

  /// Throws HullDivergenceError when zero is outside the hull of the first
  /// round's blocks, std::invalid_argument when the statistics do not match.
  RoundSummary advance(const MeanBlocks& stats);

  SsmelFit result() const;

 private:
  void accept(const ParamVector& theta, double objective, const Vector& lambda);
  void finish(bool converged);
  ParamVector coordinate_sweep(const MeanBlocks& stats, RoundSummary& summary) const;

  std::vector<OpenInterval> bounds_;
  Index num_blocks_;
  Index num_equations_;
  SolverConfig config_;
  double epsilon_;
  std::vector<bool> free_;

  ParamVector theta_;
  ParamVector pending_;
  Vector lambda_;
  double objective_ = 0.0;
  bool has_accepted_ = false;
  bool verifying_ = false;
  bool done_ = false;
  bool converged_ = false;
  Index rounds_ = 0;
  std::vector<TraceEntry> trace_;
};

/// Split-sample mean EL estimate with K random blocks.
///
/// Throws InfeasibleSplitError for K < p, std::invalid_argument for a bad
/// split, HullDivergenceError when zero is outside the hull of the blocks at
/// the starting value. Running out of outer iterations is reported through
/// converged = false.
SsmelFit fit_ssmel(const MomentModel& model, const Dataset& data, Index K, const SolverConfig& config,
                   std::uint64_t seed, const std::optional<ParamVector>& theta0 = std::nullopt,
                   SplitPolicy policy = SplitPolicy::strict_equal);

/// fit_ssmel on an existing split. Coordinates with free_coordinates[t] ==
/// false stay at theta0[t] (used for profiling out nuisance parameters).
SsmelFit fit_ssmel_on_plan(const MomentModel& model, const Dataset& data, const SplitPlan& plan,
                           const SolverConfig& config, const ParamVector& theta0,
                           const std::vector<bool>& free_coordinates = {});

/// Full-data EL: fit_ssmel with K = n.
SsmelFit fit_cel(const MomentModel& model, const Dataset& data, const SolverConfig& config,
                 const std::optional<ParamVector>& theta0 = std::nullopt);

/// Divide-and-conquer baseline: full-data EL on each of K subsets (each with
/// threshold 1/m), averaged coordinatewise. Subsets are fitted in parallel.
/// Throws SubsetFitError naming the first subset whose fit failed.
ParamVector fit_del(const MomentModel& model, const Dataset& data, Index K, const SolverConfig& config,
                    std::uint64_t seed, SplitPolicy policy = SplitPolicy::strict_equal);

/// Sandwich estimate (G' Omega^{-1} G)^{-1} with G = mean Jacobian and
/// Omega = mean g g' at theta_hat; Sigma / n approximates Var(theta_hat).
/// Throws SingularMatrixError when Omega is singular or rank(G) < p.
Matrix estimate_covariance(const MomentModel& model, const Dataset& data, const ParamVector& theta_hat);

struct LogElValue {
  double log_el = 0.0;
  Vector lambda;
  bool diverged_hull = false;
  bool converged = false;
};

/// l_S(theta) on a given split, with lambda solved from zero.
LogElValue evaluate_log_el(const MomentModel& model, const Dataset& data, const SplitPlan& plan,
                           const ParamVector& theta, const SolverConfig& config);

}  // namespace ssmel

#pragma once

#include "ssmel/moment_model.hpp"

#include <cmath>
#include <vector>

namespace ssmel {

/// Threshold of the pseudo-logarithm; 1/K by default.
struct PseudoLogParams {
  double epsilon;
};

/// log*(x): log(x) above epsilon, the matching quadratic below it.
///
/// Value, first and second derivative are continuous at the knot, and
/// log*'' < 0 everywhere, so the dual objective is concave on all of R^r.
class PseudoLog {
 public:
  explicit PseudoLog(PseudoLogParams params);

  double epsilon() const { return eps_; }

  double value(double x) const {
    if (x >= eps_) return std::log(x);
    const double u = x * inv_eps_;
    return log_eps_ - 1.5 + 2.0 * u - 0.5 * u * u;
  }
  double d1(double x) const { return x >= eps_ ? 1.0 / x : (2.0 - x * inv_eps_) * inv_eps_; }
  double d2(double x) const { return x >= eps_ ? -1.0 / (x * x) : -inv_eps_ * inv_eps_; }

 private:
  double eps_;
  double inv_eps_;
  double log_eps_;
};

double pseudo_log(double x, PseudoLogParams params);
double pseudo_log_d1(double x, PseudoLogParams params);
double pseudo_log_d2(double x, PseudoLogParams params);

struct LambdaSolveConfig {
  double tol = 1e-10;
  int max_iter = 200;
  int max_halvings = 40;
  /// Divergence bound on max_k |lambda' gbar_k|, i.e. on how far the
  /// arguments 1 + lambda' gbar_k have run off. See hull_diagnostic.
  double lambda_cap = 1e6;
  /// Record the objective after every accepted coordinate step.
  bool record_trace = false;
};

struct LambdaSolution {
  Vector lambda;
  double objective = 0.0;
  bool converged = false;
  bool diverged_hull = false;
  int sweeps = 0;
  std::vector<double> trace;
};

/// f(lambda) = (1/K) sum_k log*(1 + lambda' gbar_k); blocks is K x r.
double inner_objective(const Matrix& blocks, const Vector& lambda, PseudoLogParams params);

/// Gradient of inner_objective with respect to lambda.
Vector inner_gradient(const Matrix& blocks, const Vector& lambda, PseudoLogParams params);

/// Maximizes inner_objective by coordinate-wise Newton steps on lambda_j,
/// halving each step until the objective does not go down. With r > 1 each
/// sweep ends with one halved Newton step along the sweep's net displacement,
/// taken only if it raises the objective.
///
/// Stops once a full sweep raises the objective by less than tol and moves
/// no coordinate by more than tol. Coordinates whose column of blocks is
/// identically zero are skipped. Throws std::invalid_argument on non-finite
/// blocks or a lambda0 of the wrong size.
LambdaSolution solve_lambda(const Matrix& blocks, const Vector& lambda0, const LambdaSolveConfig& config,
                            PseudoLogParams params);

enum class HullVerdict { interior, boundary_suspect, exterior };

const char* to_string(HullVerdict verdict);

/// Divergence probe for "is zero inside the convex hull of the blocks".
///
/// Solves for lambda from zero. Exterior when the multiplier diverges,
/// interior when it converges with max_k |lambda' gbar_k| below a tenth of
/// the cap, boundary_suspect otherwise.
HullVerdict hull_diagnostic(const Matrix& blocks, const LambdaSolveConfig& config = {});

}  // namespace ssmel

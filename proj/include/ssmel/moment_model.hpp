#pragma once

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ssmel {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ParamVector = Eigen::VectorXd;

using ConstSpan = std::span<const double>;
using MutSpan = std::span<double>;

/// n observations of dimension d, one per row.
struct Dataset {
  RowMatrix rows;

  Index size() const { return rows.rows(); }
  Index dim() const { return rows.cols(); }
  ConstSpan row(Index i) const {
    return {rows.data() + i * rows.cols(), static_cast<std::size_t>(rows.cols())};
  }
};

/// Open interval constraint (lower, upper) on one parameter coordinate.
struct OpenInterval {
  Index index;
  double lower;
  double upper;
};

/// Estimating-function contract: E g(X, theta0) = 0 with r >= p equations.
///
/// The three kernels are unchecked and write into caller-owned buffers so
/// they can sit in the hot loop of the block-mean computation. Derivative
/// buffers are r x p in column-major order: entry (j, t) lives at j + r * t.
/// Implementations must be pure; the solver calls them from many threads.
class MomentModel {
 public:
  virtual ~MomentModel() = default;

  virtual std::string name() const = 0;
  virtual Index obs_dim() const = 0;
  virtual Index param_dim() const = 0;
  virtual Index num_equations() const = 0;

  virtual void g(ConstSpan x, ConstSpan theta, MutSpan out) const = 0;
  /// d g_j / d theta_t.
  virtual void jacobian(ConstSpan x, ConstSpan theta, MutSpan out) const = 0;
  /// d^2 g_j / d theta_t^2 (per-coordinate, no mixed partials).
  virtual void second_partials(ConstSpan x, ConstSpan theta, MutSpan out) const = 0;

  /// Method-of-moments starting value.
  virtual ParamVector init_theta(const Dataset& data) const = 0;

  virtual std::vector<OpenInterval> bounds() const { return {}; }
  /// True when derivatives come from finite differences rather than formulas.
  virtual bool uses_finite_differences() const { return false; }

  bool in_bounds(const ParamVector& theta) const;
};

/// Floor applied to scale estimates in the initializers.
inline constexpr double kScaleFloor = 1e-6;

/// g(X; mu, sigma) = (mu - X, sigma^2 - (X - mu)^2, X^3 - mu (mu^2 + 3 sigma^2)).
class NormalModel final : public MomentModel {
 public:
  std::string name() const override { return "normal"; }
  Index obs_dim() const override { return 1; }
  Index param_dim() const override { return 2; }
  Index num_equations() const override { return 3; }
  void g(ConstSpan x, ConstSpan theta, MutSpan out) const override;
  void jacobian(ConstSpan x, ConstSpan theta, MutSpan out) const override;
  void second_partials(ConstSpan x, ConstSpan theta, MutSpan out) const override;
  ParamVector init_theta(const Dataset& data) const override;
  std::vector<OpenInterval> bounds() const override;
};

/// Five moments of a bivariate normal, theta = (mu1, mu2, sigma1, sigma2, rho).
class BivariateNormalModel final : public MomentModel {
 public:
  std::string name() const override { return "bivariate"; }
  Index obs_dim() const override { return 2; }
  Index param_dim() const override { return 5; }
  Index num_equations() const override { return 5; }
  void g(ConstSpan x, ConstSpan theta, MutSpan out) const override;
  void jacobian(ConstSpan x, ConstSpan theta, MutSpan out) const override;
  void second_partials(ConstSpan x, ConstSpan theta, MutSpan out) const override;
  ParamVector init_theta(const Dataset& data) const override;
  std::vector<OpenInterval> bounds() const override;
};

/// Least-squares score g(z, y; beta) = z (y - z'beta), just identified.
///
/// An observation is laid out as (y, z_0, ..., z_{p-1}); any intercept
/// column must already be part of z.
class RegressionModel final : public MomentModel {
 public:
  explicit RegressionModel(Index num_coefficients);
  std::string name() const override { return "regression"; }
  Index obs_dim() const override { return p_ + 1; }
  Index param_dim() const override { return p_; }
  Index num_equations() const override { return p_; }
  void g(ConstSpan x, ConstSpan theta, MutSpan out) const override;
  void jacobian(ConstSpan x, ConstSpan theta, MutSpan out) const override;
  void second_partials(ConstSpan x, ConstSpan theta, MutSpan out) const override;
  /// Ordinary least squares; throws SingularMatrixError on a rank-deficient design.
  ParamVector init_theta(const Dataset& data) const override;

 private:
  Index p_;
};

/// g(X; mu) = mu - X.
class MeanModel final : public MomentModel {
 public:
  std::string name() const override { return "mean"; }
  Index obs_dim() const override { return 1; }
  Index param_dim() const override { return 1; }
  Index num_equations() const override { return 1; }
  void g(ConstSpan x, ConstSpan theta, MutSpan out) const override;
  void jacobian(ConstSpan x, ConstSpan theta, MutSpan out) const override;
  void second_partials(ConstSpan x, ConstSpan theta, MutSpan out) const override;
  ParamVector init_theta(const Dataset& data) const override;
};

/// Custom model assembled from callables.
struct FunctionModelSpec {
  using Kernel = std::function<void(ConstSpan x, ConstSpan theta, MutSpan out)>;

  std::string name = "custom";
  Index obs_dim = 0;
  Index param_dim = 0;
  Index num_equations = 0;
  Kernel g;
  Kernel jacobian;         // optional when allow_finite_differences
  Kernel second_partials;  // optional when allow_finite_differences
  std::function<ParamVector(const Dataset&)> init_theta;
  std::vector<OpenInterval> bounds;
  /// Opt in to central-difference derivatives (step 1e-5 * (1 + |theta_t|)).
  bool allow_finite_differences = false;
};

class FunctionModel final : public MomentModel {
 public:
  /// Throws std::invalid_argument when a derivative kernel is missing and
  /// finite differences were not requested, or when r < p.
  explicit FunctionModel(FunctionModelSpec spec);

  std::string name() const override { return spec_.name; }
  Index obs_dim() const override { return spec_.obs_dim; }
  Index param_dim() const override { return spec_.param_dim; }
  Index num_equations() const override { return spec_.num_equations; }
  void g(ConstSpan x, ConstSpan theta, MutSpan out) const override;
  void jacobian(ConstSpan x, ConstSpan theta, MutSpan out) const override;
  void second_partials(ConstSpan x, ConstSpan theta, MutSpan out) const override;
  ParamVector init_theta(const Dataset& data) const override;
  std::vector<OpenInterval> bounds() const override { return spec_.bounds; }
  bool uses_finite_differences() const override;

 private:
  FunctionModelSpec spec_;
};

/// Builds one of the built-in models by name: normal, bivariate, mean, or
/// regression (which needs the coefficient count).
std::unique_ptr<MomentModel> make_model(const std::string& name, Index num_coefficients = 0);

// Checked entry points. These validate dimensions and bounds and throw
// std::invalid_argument on violations.

Vector eval_g(const MomentModel& model, ConstSpan x, const ParamVector& theta);
Matrix eval_jacobian(const MomentModel& model, ConstSpan x, const ParamVector& theta);
Vector eval_second_partial(const MomentModel& model, ConstSpan x, const ParamVector& theta, Index t);
ParamVector init_theta(const MomentModel& model, const Dataset& data);

/// Largest discrepancy between the analytic derivatives and central
/// differences of g. Jacobian columns use the step h * (1 + |theta_t|);
/// second differences use 100 times that step, which keeps cancellation
/// error below the truncation error. Discrepancies are measured as
/// |analytic - numeric| / max(1, |numeric|).
double check_derivatives(const MomentModel& model, ConstSpan x, const ParamVector& theta, double h = 1e-5);

/// Central-difference Jacobian of `g` (r x p column-major into out).
void finite_difference_jacobian(const FunctionModelSpec::Kernel& g, Index r, ConstSpan x, ConstSpan theta,
                                double h, MutSpan out);

}  // namespace ssmel

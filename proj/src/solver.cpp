#include "ssmel/solver.hpp"

#include "ssmel/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace ssmel {

namespace {

double resolve_epsilon(const SolverConfig& config, Index K) {
  const double eps = config.epsilon.value_or(1.0 / static_cast<double>(K));
  if (!(eps > 0.0) || !std::isfinite(eps)) throw std::invalid_argument("pseudo-log threshold must be positive");
  return eps;
}

void validate_config(const SolverConfig& config) {
  if (!(config.gamma > 0.0)) throw std::invalid_argument("gamma must be positive");
  if (config.max_outer < 1) throw std::invalid_argument("max_outer must be at least 1");
  if (config.outer_max_halvings < 0) throw std::invalid_argument("outer_max_halvings must be non-negative");
}

bool coordinate_in_bounds(const std::vector<OpenInterval>& bounds, Index t, double value) {
  if (!std::isfinite(value)) return false;
  for (const auto& b : bounds)
    if (b.index == t && !(value > b.lower && value < b.upper)) return false;
  return true;
}

double max_abs_diff(const ParamVector& a, const ParamVector& b) {
  return a.size() == 0 ? 0.0 : (a - b).cwiseAbs().maxCoeff();
}

struct StepOutcome {
  bool accepted = false;
  double delta = 0.0;
  Matrix blocks;
  LambdaSolution solution;
};

// Halves delta until the inner maximum at theta_t + delta drops strictly
// below f_current. `blocks_at(delta)` returns the K x r block matrix there.
template <class BlocksAt>
StepOutcome halving_search(const std::vector<OpenInterval>& bounds, Index t, double theta_t, double delta,
                           double f_current, const Vector& lambda, BlocksAt&& blocks_at, const SolverConfig& config,
                           PseudoLogParams plog) {
  StepOutcome out;
  const double min_step = 1e-3 * config.gamma;
  for (int h = 0; h <= config.outer_max_halvings; ++h, delta *= 0.5) {
    if (!(std::abs(delta) >= min_step)) break;
    if (!coordinate_in_bounds(bounds, t, theta_t + delta)) continue;
    Matrix trial = blocks_at(delta);
    if (!trial.allFinite()) continue;
    LambdaSolution sol = solve_lambda(trial, lambda, config.inner, plog);
    if (!sol.diverged_hull && sol.objective < f_current) {
      out.accepted = true;
      out.delta = delta;
      out.blocks = std::move(trial);
      out.solution = std::move(sol);
      return out;
    }
  }
  return out;
}

}  // namespace

double profile_newton_step(const Matrix& blocks, const Vector& lambda, const Eigen::Ref<const Matrix>& jac_t,
                           const Eigen::Ref<const Matrix>& second_t, const PseudoLog& plog) {
  const Index K = blocks.rows();
  const Vector s = (blocks * lambda).array() + 1.0;
  const Vector w = jac_t * lambda;
  const Vector z = second_t * lambda;
  Vector d1(K), d2(K);
  for (Index k = 0; k < K; ++k) {
    d1[k] = plog.d1(s[k]);
    d2[k] = plog.d2(s[k]);
  }

  const double grad = d1.dot(w);
  if (grad == 0.0 || !std::isfinite(grad)) return 0.0;

  double curv = (d2.array() * w.array().square()).sum() + d1.dot(z);
  const Vector c = blocks.transpose() * (d2.array() * w.array()).matrix() + jac_t.transpose() * d1;
  const Matrix neg_hess = -(blocks.transpose() * d2.asDiagonal() * blocks);
  Eigen::LDLT<Matrix> ldlt(neg_hess);
  if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
    const Vector y = ldlt.solve(c);
    if (y.allFinite()) curv += c.dot(y);
  }
  const double denom = std::abs(curv);
  if (!(denom > 0.0) || !std::isfinite(denom)) return 0.0;
  return -grad / denom;
}

OuterSolver::OuterSolver(std::vector<OpenInterval> bounds, Index num_blocks, Index num_equations,
                         const SolverConfig& config, ParamVector theta0, std::vector<bool> free_coordinates)
    : bounds_(std::move(bounds)),
      num_blocks_(num_blocks),
      num_equations_(num_equations),
      config_(config),
      epsilon_(resolve_epsilon(config, num_blocks)),
      free_(std::move(free_coordinates)),
      theta_(theta0),
      pending_(std::move(theta0)),
      lambda_(Vector::Zero(num_equations)) {
  validate_config(config_);
  if (num_blocks_ < 1) throw std::invalid_argument("need at least one block");
  if (free_.empty()) free_.assign(static_cast<std::size_t>(theta_.size()), true);
  if (static_cast<Index>(free_.size()) != theta_.size())
    throw std::invalid_argument("free-coordinate mask has the wrong length");
  if (!theta_.allFinite()) throw std::invalid_argument("starting value is not finite");
  for (Index t = 0; t < theta_.size(); ++t)
    if (!coordinate_in_bounds(bounds_, t, theta_[t]))
      throw std::invalid_argument("starting value outside the parameter bounds (coordinate " + std::to_string(t) +
                                  ")");
}

void OuterSolver::accept(const ParamVector& theta, double objective, const Vector& lambda) {
  if (has_accepted_ && objective > objective_)
    throw std::logic_error("outer objective increased across an accepted update");
  theta_ = theta;
  objective_ = objective;
  lambda_ = lambda;
  has_accepted_ = true;
}

void OuterSolver::finish(bool converged) {
  done_ = true;
  converged_ = converged;
  pending_ = theta_;
}

ParamVector OuterSolver::coordinate_sweep(const MeanBlocks& stats, RoundSummary& summary) const {
  const PseudoLog plog(PseudoLogParams{epsilon_});
  ParamVector theta = theta_;
  Matrix blocks = stats.values;
  Vector lambda = lambda_;
  double f = objective_;
  for (Index t = 0; t < theta.size(); ++t) {
    if (!free_[static_cast<std::size_t>(t)]) continue;
    ++summary.coordinate_updates;
    const auto jac_t = stats.jacobian_wrt(t);
    const auto sec_t = stats.second_wrt(t);
    // Second-order expansion in theta_t around the current blocks, which
    // already carry the moves of the earlier coordinates.
    const Matrix base = blocks;
    const double step = profile_newton_step(base, lambda, jac_t, sec_t, plog);
    auto blocks_at = [&](double delta) -> Matrix { return base + delta * jac_t + (0.5 * delta * delta) * sec_t; };
    StepOutcome out = halving_search(bounds_, t, theta[t], step, f, lambda, blocks_at, config_,
                                     PseudoLogParams{epsilon_});
    ++summary.lambda_refreshes;
    if (!out.accepted) continue;
    theta[t] += out.delta;
    blocks = std::move(out.blocks);
    lambda = std::move(out.solution.lambda);
    f = out.solution.objective;
  }
  return theta;
}

RoundSummary OuterSolver::advance(const MeanBlocks& stats) {
  if (done_) throw std::logic_error("outer solver already finished");
  if (stats.num_blocks() != num_blocks_ || stats.num_equations() != num_equations_)
    throw std::invalid_argument("round statistics have the wrong shape");
  if (!stats.has_derivatives()) throw std::invalid_argument("round statistics need derivatives");
  if (stats.theta_at.size() != pending_.size() || stats.theta_at != pending_)
    throw std::invalid_argument("round statistics were evaluated at the wrong theta");

  ++rounds_;
  RoundSummary summary;
  summary.round = rounds_;
  const ParamVector broadcast = pending_;
  const PseudoLogParams plog{epsilon_};
  const Vector start = has_accepted_ ? lambda_ : Vector::Zero(num_equations_);
  const LambdaSolution sol = solve_lambda(stats.values, start, config_.inner, plog);
  const double f = sol.diverged_hull ? std::numeric_limits<double>::infinity() : sol.objective;
  summary.objective = f;

  auto log_round = [&](bool accepted) {
    if (config_.record_trace) trace_.push_back({rounds_, broadcast, f, accepted});
  };

  if (!has_accepted_) {
    if (sol.diverged_hull)
      throw HullDivergenceError(
          "zero is outside the convex hull of the block means at the starting value; try a better start or "
          "fewer blocks");
    accept(broadcast, f, sol.lambda);
    summary.accepted = true;
    log_round(true);
  } else if (f <= objective_) {
    accept(broadcast, f, sol.lambda);
    summary.accepted = true;
    log_round(true);
    if (verifying_) {
      finish(true);
      summary.done = true;
      return summary;
    }
  } else {
    log_round(false);
    if (verifying_) {
      finish(true);
      summary.done = true;
      return summary;
    }
    const ParamVector half = theta_ + 0.5 * (broadcast - theta_);
    if (max_abs_diff(half, theta_) < config_.gamma) {
      finish(true);
    } else if (rounds_ >= config_.max_outer) {
      finish(false);
    } else {
      pending_ = half;
    }
    summary.max_delta = max_abs_diff(pending_, broadcast);
    summary.done = done_;
    return summary;
  }

  if (rounds_ >= config_.max_outer) {
    finish(false);
    summary.done = true;
    return summary;
  }

  const ParamVector proposal = coordinate_sweep(stats, summary);
  const double move = max_abs_diff(proposal, theta_);
  if (move == 0.0) {
    finish(true);
  } else {
    verifying_ = move < config_.gamma;
    pending_ = proposal;
  }
  summary.max_delta = max_abs_diff(pending_, broadcast);
  summary.done = done_;
  return summary;
}

SsmelFit OuterSolver::result() const {
  SsmelFit fit;
  fit.theta_hat = theta_;
  fit.lambda_hat = lambda_;
  fit.objective = objective_;
  fit.log_el = static_cast<double>(num_blocks_) * objective_;
  fit.outer_iters = rounds_;
  fit.converged = converged_;
  fit.trace = trace_;
  return fit;
}

namespace {

SsmelFit fit_round_stale(const MomentModel& model, const Dataset& data, const SplitPlan& plan,
                         const SolverConfig& config, const ParamVector& theta0, const std::vector<bool>& free) {
  OuterSolver solver(model.bounds(), plan.K, model.num_equations(), config, theta0, free);
  while (!solver.done()) solver.advance(compute_mean_blocks(model, data, plan, solver.pending_theta(), true));
  return solver.result();
}

SsmelFit fit_fresh(const MomentModel& model, const Dataset& data, const SplitPlan& plan, const SolverConfig& config,
                   const ParamVector& theta0, std::vector<bool> free) {
  validate_config(config);
  const Index p = theta0.size();
  if (free.empty()) free.assign(static_cast<std::size_t>(p), true);
  const auto bounds = model.bounds();
  const double eps = resolve_epsilon(config, plan.K);
  const PseudoLogParams params{eps};
  const PseudoLog plog(params);

  ParamVector theta = theta0;
  LambdaSolution sol =
      solve_lambda(compute_mean_blocks(model, data, plan, theta, false).values,
                   Vector::Zero(model.num_equations()), config.inner, params);
  if (sol.diverged_hull)
    throw HullDivergenceError("zero is outside the convex hull of the block means at the starting value");
  Vector lambda = sol.lambda;
  double f = sol.objective;

  SsmelFit fit;
  if (config.record_trace) fit.trace.push_back({0, theta, f, true});
  Index rounds = 0;
  bool converged = false;
  while (rounds < config.max_outer) {
    ++rounds;
    const ParamVector start = theta;
    for (Index t = 0; t < p; ++t) {
      if (!free[static_cast<std::size_t>(t)]) continue;
      const MeanBlocks stats = compute_mean_blocks(model, data, plan, theta, true);
      const double step = profile_newton_step(stats.values, lambda, stats.jacobian_wrt(t), stats.second_wrt(t), plog);
      auto blocks_at = [&](double delta) -> Matrix {
        ParamVector trial = theta;
        trial[t] += delta;
        return compute_mean_blocks(model, data, plan, trial, false).values;
      };
      StepOutcome out = halving_search(bounds, t, theta[t], step, f, lambda, blocks_at, config, params);
      if (!out.accepted) continue;
      theta[t] += out.delta;
      lambda = std::move(out.solution.lambda);
      if (out.solution.objective > f) throw std::logic_error("outer objective increased across an accepted update");
      f = out.solution.objective;
      if (config.record_trace) fit.trace.push_back({rounds, theta, f, true});
    }
    if (max_abs_diff(theta, start) < config.gamma) {
      converged = true;
      break;
    }
  }

  fit.theta_hat = theta;
  fit.lambda_hat = lambda;
  fit.objective = f;
  fit.log_el = static_cast<double>(plan.K) * f;
  fit.outer_iters = rounds;
  fit.converged = converged;
  return fit;
}

}  // namespace

SsmelFit fit_ssmel_on_plan(const MomentModel& model, const Dataset& data, const SplitPlan& plan,
                           const SolverConfig& config, const ParamVector& theta0,
                           const std::vector<bool>& free_coordinates) {
  if (theta0.size() != model.param_dim()) throw std::invalid_argument("starting value has the wrong dimension");
  if (plan.n != data.size()) throw std::invalid_argument("split plan does not match the dataset");
  require_enough_blocks(plan.K, model.param_dim());
  SsmelFit fit = config.schedule == Schedule::round_stale
                     ? fit_round_stale(model, data, plan, config, theta0, free_coordinates)
                     : fit_fresh(model, data, plan, config, theta0, free_coordinates);
  fit.split = plan;
  return fit;
}

SsmelFit fit_ssmel(const MomentModel& model, const Dataset& data, Index K, const SolverConfig& config,
                   std::uint64_t seed, const std::optional<ParamVector>& theta0, SplitPolicy policy) {
  require_enough_blocks(K, model.param_dim());
  const SplitPlan plan = make_split(data.size(), K, seed, policy);
  const ParamVector start = theta0 ? *theta0 : init_theta(model, data);
  return fit_ssmel_on_plan(model, data, plan, config, start);
}

SsmelFit fit_cel(const MomentModel& model, const Dataset& data, const SolverConfig& config,
                 const std::optional<ParamVector>& theta0) {
  return fit_ssmel(model, data, data.size(), config, 0, theta0, SplitPolicy::strict_equal);
}

ParamVector fit_del(const MomentModel& model, const Dataset& data, Index K, const SolverConfig& config,
                    std::uint64_t seed, SplitPolicy policy) {
  const SplitPlan plan = make_split(data.size(), K, seed, policy);
  if (plan.block_size() < model.param_dim())
    throw InfeasibleSplitError("subsets of " + std::to_string(plan.block_size()) + " points cannot identify p=" +
                               std::to_string(model.param_dim()) + " parameters");
  SolverConfig sub_config = config;
  sub_config.epsilon.reset();
  sub_config.record_trace = false;

  std::vector<ParamVector> estimates(static_cast<std::size_t>(K));
  std::vector<std::string> errors(static_cast<std::size_t>(K));
#pragma omp parallel for schedule(dynamic)
  for (Index k = 0; k < K; ++k) {
    try {
      const Dataset sub = subset_data(data, plan, k);
      estimates[static_cast<std::size_t>(k)] = fit_cel(model, sub, sub_config).theta_hat;
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(k)] = e.what();
    }
  }

  ParamVector mean = ParamVector::Zero(model.param_dim());
  for (Index k = 0; k < K; ++k) {
    if (!errors[static_cast<std::size_t>(k)].empty()) throw SubsetFitError(k, errors[static_cast<std::size_t>(k)]);
    mean += estimates[static_cast<std::size_t>(k)];
  }
  return mean / static_cast<double>(K);
}

Matrix estimate_covariance(const MomentModel& model, const Dataset& data, const ParamVector& theta_hat) {
  if (data.size() == 0) throw std::invalid_argument("empty dataset");
  const Index r = model.num_equations(), p = model.param_dim();
  Matrix G = Matrix::Zero(r, p), omega = Matrix::Zero(r, r);
  for (Index i = 0; i < data.size(); ++i) {
    const Vector g = eval_g(model, data.row(i), theta_hat);
    G += eval_jacobian(model, data.row(i), theta_hat);
    omega.noalias() += g * g.transpose();
  }
  const double n = static_cast<double>(data.size());
  G /= n;
  omega /= n;

  Eigen::LDLT<Matrix> omega_ldlt(omega);
  const Vector pivots = omega_ldlt.vectorD();
  const double scale = omega.diagonal().cwiseAbs().maxCoeff();
  if (omega_ldlt.info() != Eigen::Success || !(scale > 0.0) || !(pivots.minCoeff() > 1e-12 * scale))
    throw SingularMatrixError("moment covariance Omega is singular at theta_hat");

  const Matrix A = G.transpose() * omega_ldlt.solve(G);
  Eigen::LLT<Matrix> a_llt(0.5 * (A + A.transpose()));
  const double a_scale = A.diagonal().cwiseAbs().maxCoeff();
  if (a_llt.info() != Eigen::Success || !(a_scale > 0.0) ||
      !(a_llt.matrixL().toDenseMatrix().diagonal().minCoeff() > 1e-8 * std::sqrt(a_scale)))
    throw SingularMatrixError("mean Jacobian G has rank below p at theta_hat");
  Matrix sigma = a_llt.solve(Matrix::Identity(p, p));
  return 0.5 * (sigma + sigma.transpose());
}

LogElValue evaluate_log_el(const MomentModel& model, const Dataset& data, const SplitPlan& plan,
                           const ParamVector& theta, const SolverConfig& config) {
  const MeanBlocks blocks = compute_mean_blocks(model, data, plan, theta, false);
  const double eps = resolve_epsilon(config, plan.K);
  const LambdaSolution sol =
      solve_lambda(blocks.values, Vector::Zero(model.num_equations()), config.inner, PseudoLogParams{eps});
  LogElValue out;
  out.lambda = sol.lambda;
  out.diverged_hull = sol.diverged_hull;
  out.converged = sol.converged;
  out.log_el = sol.diverged_hull ? std::numeric_limits<double>::infinity()
                                 : static_cast<double>(plan.K) * sol.objective;
  return out;
}

}  // namespace ssmel

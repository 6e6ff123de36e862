#include "ssmel/el_core.hpp"

#include <algorithm>
#include <stdexcept>

namespace ssmel {

PseudoLog::PseudoLog(PseudoLogParams params)
    : eps_(params.epsilon), inv_eps_(1.0 / params.epsilon), log_eps_(std::log(params.epsilon)) {
  if (!(eps_ > 0.0)) throw std::invalid_argument("pseudo-log threshold must be positive");
}

double pseudo_log(double x, PseudoLogParams params) { return PseudoLog(params).value(x); }
double pseudo_log_d1(double x, PseudoLogParams params) { return PseudoLog(params).d1(x); }
double pseudo_log_d2(double x, PseudoLogParams params) { return PseudoLog(params).d2(x); }

namespace {

void check_blocks(const Matrix& blocks, const Vector& lambda) {
  if (blocks.rows() < 1) throw std::invalid_argument("need at least one block");
  if (blocks.cols() != lambda.size())
    throw std::invalid_argument("lambda has " + std::to_string(lambda.size()) + " entries, blocks have " +
                                std::to_string(blocks.cols()) + " columns");
}

double mean_pseudo_log(const PseudoLog& plog, const Vector& args) {
  double sum = 0.0;
  for (Index k = 0; k < args.size(); ++k) sum += plog.value(args[k]);
  return sum / static_cast<double>(args.size());
}

}  // namespace

double inner_objective(const Matrix& blocks, const Vector& lambda, PseudoLogParams params) {
  check_blocks(blocks, lambda);
  const PseudoLog plog(params);
  const Vector args = (blocks * lambda).array() + 1.0;
  return mean_pseudo_log(plog, args);
}

Vector inner_gradient(const Matrix& blocks, const Vector& lambda, PseudoLogParams params) {
  check_blocks(blocks, lambda);
  const PseudoLog plog(params);
  const Vector args = (blocks * lambda).array() + 1.0;
  Vector weights(args.size());
  for (Index k = 0; k < args.size(); ++k) weights[k] = plog.d1(args[k]);
  return blocks.transpose() * weights / static_cast<double>(blocks.rows());
}

LambdaSolution solve_lambda(const Matrix& blocks, const Vector& lambda0, const LambdaSolveConfig& config,
                            PseudoLogParams params) {
  check_blocks(blocks, lambda0);
  if (!blocks.allFinite()) throw std::invalid_argument("blocks contain non-finite values");
  const PseudoLog plog(params);
  const Index K = blocks.rows(), r = blocks.cols();

  LambdaSolution sol;
  sol.lambda = lambda0;
  Vector args = (blocks * sol.lambda).array() + 1.0;
  double f = mean_pseudo_log(plog, args);
  if (config.record_trace) sol.trace.push_back(f);

  Vector trial(K), lambda_start(r);
  for (int sweep = 1; sweep <= config.max_iter; ++sweep) {
    sol.sweeps = sweep;
    const double f_start = f;
    double max_step = 0.0;
    lambda_start = sol.lambda;

    for (Index j = 0; j < r; ++j) {
      const auto col = blocks.col(j);
      double num = 0.0, den = 0.0;
      for (Index k = 0; k < K; ++k) {
        num += plog.d1(args[k]) * col[k];
        den += plog.d2(args[k]) * col[k] * col[k];
      }
      // log*'' < 0, so the denominator only vanishes with the column.
      if (std::abs(den) < 1e-300) continue;

      double step = -num / den;
      for (int h = 0; h <= config.max_halvings; ++h) {
        trial = args + step * col;
        const double f_trial = mean_pseudo_log(plog, trial);
        if (f_trial >= f) {
          sol.lambda[j] += step;
          args.swap(trial);
          f = f_trial;
          max_step = std::max(max_step, std::abs(step));
          if (config.record_trace) sol.trace.push_back(f);
          break;
        }
        step *= 0.5;
      }
    }

    // Pattern step: one more Newton update along the sweep's net
    // displacement. Coordinate ascent zigzags when the multipliers are
    // strongly coupled; this direction cuts across the zigzag.
    if (r > 1 && max_step > 0.0) {
      const Vector dir = sol.lambda - lambda_start;
      const Vector u = blocks * dir;
      double num = 0.0, den = 0.0;
      for (Index k = 0; k < K; ++k) {
        num += plog.d1(args[k]) * u[k];
        den += plog.d2(args[k]) * u[k] * u[k];
      }
      if (std::abs(den) >= 1e-300) {
        double step = -num / den;
        for (int h = 0; h <= config.max_halvings; ++h) {
          trial = args + step * u;
          const double f_trial = mean_pseudo_log(plog, trial);
          if (f_trial > f) {
            sol.lambda += step * dir;
            args.swap(trial);
            f = f_trial;
            max_step = std::max(max_step, std::abs(step) * dir.cwiseAbs().maxCoeff());
            if (config.record_trace) sol.trace.push_back(f);
            break;
          }
          step *= 0.5;
        }
      }
    }

    const double reach = (args.array() - 1.0).abs().maxCoeff();
    if (!(reach <= config.lambda_cap)) {
      sol.diverged_hull = true;
      break;
    }
    if (f - f_start < config.tol && max_step < config.tol) {
      sol.converged = true;
      break;
    }
  }
  sol.objective = f;
  return sol;
}

const char* to_string(HullVerdict verdict) {
  switch (verdict) {
    case HullVerdict::interior:
      return "interior";
    case HullVerdict::boundary_suspect:
      return "boundary_suspect";
    case HullVerdict::exterior:
      return "exterior";
  }
  return "unknown";
}

HullVerdict hull_diagnostic(const Matrix& blocks, const LambdaSolveConfig& config) {
  const PseudoLogParams params{1.0 / static_cast<double>(blocks.rows())};
  const LambdaSolution sol = solve_lambda(blocks, Vector::Zero(blocks.cols()), config, params);
  if (sol.diverged_hull) return HullVerdict::exterior;
  const double reach = (blocks * sol.lambda).cwiseAbs().maxCoeff();
  if (sol.converged && reach < config.lambda_cap / 10.0) return HullVerdict::interior;
  return HullVerdict::boundary_suspect;
}

}  // namespace ssmel

#include "ssmel/inference.hpp"

#include "ssmel/errors.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <stdexcept>
#include <string>

namespace ssmel {

namespace {

constexpr int kMaxGammaIter = 10000;
constexpr double kGammaEps = 1e-16;

void check_gamma_args(double a, double x) {
  if (!(a > 0.0)) throw std::invalid_argument("incomplete gamma needs a > 0");
  if (!(x >= 0.0)) throw std::invalid_argument("incomplete gamma needs x >= 0");
}

double log_prefactor(double a, double x) { return a * std::log(x) - x - std::lgamma(a); }

double gamma_p_series(double a, double x) {
  double term = 1.0 / a, sum = term;
  for (int n = 1; n < kMaxGammaIter; ++n) {
    term *= x / (a + n);
    sum += term;
    if (std::abs(term) < std::abs(sum) * kGammaEps) break;
  }
  return sum * std::exp(log_prefactor(a, x));
}

double gamma_q_fraction(double a, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < kMaxGammaIter; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kGammaEps) break;
  }
  return std::exp(log_prefactor(a, x)) * h;
}

void check_df(int df) {
  if (df < 1) throw std::invalid_argument("chi-square needs df >= 1, got " + std::to_string(df));
}

TestResult infinite_result(const SsmelFit& fit, const ParamVector& restricted, int df) {
  TestResult out;
  out.statistic = out.raw_statistic = std::numeric_limits<double>::infinity();
  out.df = df;
  out.p_value = 0.0;
  out.reject = true;
  out.diverged_hull = true;
  out.nuisance_converged = false;
  out.theta_hat_used = fit.theta_hat;
  out.theta_restricted = restricted;
  out.log_el_restricted = std::numeric_limits<double>::infinity();
  return out;
}

}  // namespace

double regularized_gamma_p(double a, double x) {
  check_gamma_args(a, x);
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  return x < a + 1.0 ? gamma_p_series(a, x) : 1.0 - gamma_q_fraction(a, x);
}

double regularized_gamma_q(double a, double x) {
  check_gamma_args(a, x);
  if (x == 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  return x < a + 1.0 ? 1.0 - gamma_p_series(a, x) : gamma_q_fraction(a, x);
}

double chi2_cdf(double x, int df) {
  check_df(df);
  if (std::isnan(x)) throw std::invalid_argument("chi2_cdf of NaN");
  if (x <= 0.0) return 0.0;
  return regularized_gamma_p(0.5 * df, 0.5 * x);
}

double chi2_sf(double x, int df) {
  check_df(df);
  if (std::isnan(x)) throw std::invalid_argument("chi2_sf of NaN");
  if (x <= 0.0) return 1.0;
  return regularized_gamma_q(0.5 * df, 0.5 * x);
}

double chi2_quantile(double p, int df) {
  check_df(df);
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("chi2_quantile needs 0 < p < 1");
  double lo = 0.0, hi = std::max(1.0, 2.0 * df);
  while (chi2_cdf(hi, df) < p) hi *= 2.0;
  while (hi - lo > 1e-13 * std::max(1.0, hi)) {
    const double mid = 0.5 * (lo + hi);
    if (chi2_cdf(mid, df) < p)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

Constraint full_constraint(const ParamVector& theta0) {
  Constraint c;
  for (Index t = 0; t < theta0.size(); ++t) {
    c.indices.push_back(t);
    c.values.push_back(theta0[t]);
  }
  return c;
}

TestResult profile_test(const MomentModel& model, const Dataset& data, const SsmelFit& fit,
                        const Constraint& constraint, double alpha, const SolverConfig& config) {
  const Index p = model.param_dim();
  if (constraint.indices.empty()) throw std::invalid_argument("constraint has no coordinates");
  if (constraint.indices.size() != constraint.values.size())
    throw std::invalid_argument("constraint indices and values differ in length");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must be in (0, 1)");
  if (fit.theta_hat.size() != p) throw std::invalid_argument("fit does not belong to this model");

  std::vector<bool> free(static_cast<std::size_t>(p), true);
  ParamVector restricted = fit.theta_hat;
  for (std::size_t i = 0; i < constraint.indices.size(); ++i) {
    const Index t = constraint.indices[i];
    if (t < 0 || t >= p) throw std::invalid_argument("constraint index " + std::to_string(t) + " out of range");
    if (!free[static_cast<std::size_t>(t)]) throw std::invalid_argument("constraint repeats an index");
    free[static_cast<std::size_t>(t)] = false;
    restricted[t] = constraint.values[i];
  }
  const int df = static_cast<int>(constraint.indices.size());

  if (!model.in_bounds(restricted)) return infinite_result(fit, restricted, df);

  const bool any_free = std::find(free.begin(), free.end(), true) != free.end();
  bool nuisance_converged = true;
  if (any_free) {
    try {
      SolverConfig nuisance = config;
      nuisance.record_trace = false;
      const SsmelFit sub = fit_ssmel_on_plan(model, data, fit.split, nuisance, restricted, free);
      restricted = sub.theta_hat;
      nuisance_converged = sub.converged;
    } catch (const HullDivergenceError&) {
      return infinite_result(fit, restricted, df);
    }
  }

  const LogElValue at_hat = evaluate_log_el(model, data, fit.split, fit.theta_hat, config);
  const LogElValue at_null = evaluate_log_el(model, data, fit.split, restricted, config);
  if (at_null.diverged_hull) return infinite_result(fit, restricted, df);

  TestResult out;
  out.df = df;
  out.theta_hat_used = fit.theta_hat;
  out.theta_restricted = restricted;
  out.nuisance_converged = nuisance_converged;
  out.log_el_hat = at_hat.log_el;
  out.log_el_restricted = at_null.log_el;
  out.raw_statistic = 2.0 * (at_null.log_el - at_hat.log_el);
  out.statistic = 2.0 * (at_null.log_el - std::min(at_hat.log_el, at_null.log_el));
  out.p_value = chi2_sf(out.statistic, df);
  out.reject = out.p_value < alpha;
  return out;
}

TestResult profile_test(const MomentModel& model, const Dataset& data, Index K, const Constraint& constraint,
                        double alpha, const SolverConfig& config, std::uint64_t seed) {
  const SsmelFit fit = fit_ssmel(model, data, K, config, seed);
  return profile_test(model, data, fit, constraint, alpha, config);
}

TestResult wilks_test(const MomentModel& model, const Dataset& data, Index K, const ParamVector& theta0,
                      double alpha, const SolverConfig& config, std::uint64_t seed) {
  if (theta0.size() != model.param_dim()) throw std::invalid_argument("theta0 has the wrong dimension");
  return profile_test(model, data, K, full_constraint(theta0), alpha, config, seed);
}

ConfidenceScan confidence_set_scan(const MomentModel& model, const Dataset& data, Index K, Index param_index,
                                   double level, const std::vector<double>& grid, const SolverConfig& config,
                                   std::uint64_t seed) {
  if (param_index < 0 || param_index >= model.param_dim()) throw std::invalid_argument("param_index out of range");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("level must be in (0, 1)");
  if (grid.empty()) throw std::invalid_argument("empty grid");
  if (!std::is_sorted(grid.begin(), grid.end())) throw std::invalid_argument("grid must be sorted");

  const SsmelFit fit = fit_ssmel(model, data, K, config, seed);
  const double estimate = fit.theta_hat[param_index];
  if (estimate < grid.front() || estimate > grid.back())
    throw std::invalid_argument("grid [" + std::to_string(grid.front()) + ", " + std::to_string(grid.back()) +
                                "] does not span the estimate " + std::to_string(estimate));

  const auto n_grid = static_cast<Index>(grid.size());
  ConfidenceScan scan;
  scan.grid = grid;
  scan.theta_hat = fit.theta_hat;
  scan.statistic.assign(grid.size(), 0.0);
  std::vector<char> member(grid.size(), 0);
  const double alpha = 1.0 - level;
  std::vector<std::exception_ptr> errors(grid.size());
#pragma omp parallel for schedule(dynamic)
  for (Index i = 0; i < n_grid; ++i) {
    try {
      const Constraint c{{param_index}, {grid[static_cast<std::size_t>(i)]}};
      const TestResult res = profile_test(model, data, fit, c, alpha, config);
      scan.statistic[static_cast<std::size_t>(i)] = res.statistic;
      member[static_cast<std::size_t>(i)] = res.reject ? 0 : 1;
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  scan.member.assign(member.begin(), member.end());

  Index first = -1, last = -1, members = 0;
  for (Index i = 0; i < n_grid; ++i) {
    if (!member[static_cast<std::size_t>(i)]) continue;
    if (first < 0) first = i;
    last = i;
    ++members;
  }
  if (members == 0) throw std::runtime_error("no grid point is inside the confidence set; refine the grid");
  scan.contiguous = members == last - first + 1;
  scan.interval.lo = std::min(grid[static_cast<std::size_t>(first)], estimate);
  scan.interval.hi = std::max(grid[static_cast<std::size_t>(last)], estimate);
  scan.interval.level = level;
  scan.interval.param_index = param_index;
  scan.interval.grid_step = n_grid > 1 ? (grid.back() - grid.front()) / static_cast<double>(n_grid - 1) : 0.0;
  return scan;
}

}  // namespace ssmel

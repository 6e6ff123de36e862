#include "doctest.h"

#include "ssmel/errors.hpp"
#include "ssmel/generators.hpp"
#include "ssmel/mean_blocks.hpp"
#include "ssmel/rng.hpp"
#include "ssmel/solver.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace ssmel;

namespace {

Dataset column(const std::vector<double>& v) {
  Dataset d;
  d.rows.resize(static_cast<Index>(v.size()), 1);
  for (std::size_t i = 0; i < v.size(); ++i) d.rows(static_cast<Index>(i), 0) = v[i];
  return d;
}

// Integer-valued design with y = z'beta exactly, so every g vanishes at beta.
Dataset noiseless_regression(Index n, const ParamVector& beta, std::uint64_t seed) {
  Rng rng(seed);
  const Index p = beta.size();
  Dataset d;
  d.rows.resize(n, p + 1);
  for (Index i = 0; i < n; ++i) {
    d.rows(i, 1) = 1.0;
    for (Index j = 2; j <= p; ++j) d.rows(i, j) = static_cast<double>(rng.bounded(11)) - 5.0;
    double y = 0.0;
    for (Index j = 0; j < p; ++j) y += beta[j] * d.rows(i, j + 1);
    d.rows(i, 0) = y;
  }
  return d;
}

void check_descent(const SsmelFit& fit) {
  double last = INFINITY;
  for (const auto& e : fit.trace) {
    if (!e.accepted) continue;
    CHECK(e.objective <= last);
    last = e.objective;
  }
}

}  // namespace

TEST_CASE("make_split") {
  const SplitPlan plan = make_split(6, 3, 1);
  CHECK(plan.sizes == std::vector<Index>{2, 2, 2});
  std::set<Index> seen(plan.assignment.begin(), plan.assignment.end());
  CHECK(seen.size() == 6);
  CHECK_THROWS_AS(make_split(7, 3, 1), std::invalid_argument);
  CHECK_THROWS_AS(make_split(5, 6, 1), std::invalid_argument);
  CHECK_THROWS_AS(make_split(5, 0, 1), std::invalid_argument);

  const SplitPlan trimmed = make_split(7, 3, 1, SplitPolicy::trim);
  CHECK(trimmed.sizes == std::vector<Index>{2, 2, 2});
  CHECK(trimmed.excluded.size() == 1);
  std::set<Index> all(trimmed.assignment.begin(), trimmed.assignment.end());
  all.insert(trimmed.excluded.begin(), trimmed.excluded.end());
  CHECK(all.size() == 7);

  CHECK(make_split(100, 10, 5).assignment == make_split(100, 10, 5).assignment);
  CHECK(make_split(100, 10, 5).assignment != make_split(100, 10, 6).assignment);

  const SplitPlan singletons = make_split(4, 4, 77);
  CHECK(singletons.assignment == std::vector<Index>{0, 1, 2, 3});

  CHECK_THROWS_AS(require_enough_blocks(3, 5), InfeasibleSplitError);
  CHECK_NOTHROW(require_enough_blocks(5, 5));
}

TEST_CASE("block means") {
  const auto sim = gen_normal(120, 3);
  const NormalModel m;
  const ParamVector th = sim.truth;

  SUBCASE("K = n gives the raw estimating functions") {
    const auto blocks = compute_mean_blocks(m, sim.data, make_split(120, 120, 1), th, false);
    for (Index k = 0; k < 120; ++k) CHECK(blocks.values.row(k).transpose() == eval_g(m, sim.data.row(k), th));
  }
  SUBCASE("constant data gives identical rows") {
    const Dataset flat = column(std::vector<double>(60, 1.25));
    const auto blocks = compute_mean_blocks(m, flat, make_split(60, 6, 2), th, true);
    for (Index k = 1; k < 6; ++k) CHECK(blocks.values.row(k) == blocks.values.row(0));
  }
  SUBCASE("averaging identity and serial reference") {
    const auto plan = make_split(120, 12, 9);
    const auto blocks = compute_mean_blocks(m, sim.data, plan, th, true);
    const Vector grand = grand_mean_g(m, sim.data, th);
    const Vector avg = blocks.values.colwise().mean().transpose();
    CHECK((avg - grand).cwiseAbs().maxCoeff() < 1e-12 * std::max(1.0, grand.cwiseAbs().maxCoeff()));
    const auto serial = compute_mean_blocks_serial(m, sim.data, plan, th, true);
    CHECK(serial.values == blocks.values);
    CHECK(serial.jacobians == blocks.jacobians);
    CHECK(serial.second_partials == blocks.second_partials);
  }
  SUBCASE("parallel kernel is bitwise equal to the serial one on a large input") {
    const auto big = gen_bivariate(20000, 4);
    const BivariateNormalModel bm;
    const auto plan = make_split(20000, 100, 8);
    const auto a = compute_mean_blocks(bm, big.data, plan, big.truth, true);
    const auto b = compute_mean_blocks_serial(bm, big.data, plan, big.truth, true);
    CHECK(a.values == b.values);
    CHECK(a.jacobians == b.jacobians);
  }
  SUBCASE("mismatches are rejected") {
    CHECK_THROWS_AS(compute_mean_blocks(m, sim.data, make_split(60, 6, 1), th, false), std::invalid_argument);
    CHECK_THROWS_AS(compute_mean_blocks(BivariateNormalModel{}, sim.data, make_split(120, 6, 1),
                                        ParamVector::Zero(5), false),
                    std::invalid_argument);
  }
}

TEST_CASE("profile Newton step vanishes at a stationary point") {
  const Matrix blocks = Matrix::Zero(4, 1);
  const Matrix jac = Matrix::Ones(4, 1);
  CHECK(profile_newton_step(blocks, Vector::Zero(1), jac, Matrix::Zero(4, 1), PseudoLog({0.25})) == 0.0);
}

TEST_CASE("noiseless regression recovers beta exactly") {
  ParamVector beta(3);
  beta << 2.0, -1.0, 0.5;
  const Dataset d = noiseless_regression(200, beta, 4);
  const RegressionModel m(3);
  SolverConfig cfg;
  cfg.record_trace = true;
  const SsmelFit fit = fit_ssmel(m, d, 20, cfg, 1, beta);
  CHECK(fit.theta_hat == beta);
  CHECK(fit.lambda_hat.isZero(0.0));
  CHECK(fit.log_el == 0.0);
  CHECK(fit.converged);

  // Off the exact root every block mean is -G_k delta with nearly equal G_k,
  // so zero leaves their hull: noiseless data admit only the exact start.
  ParamVector nudged = beta;
  nudged[0] += 1e-3;
  CHECK_THROWS_AS(fit_ssmel(m, d, 20, cfg, 1, nudged), HullDivergenceError);
}

TEST_CASE("mean model estimate is the sample mean for any K") {
  const auto sim = gen_normal(600, 21);
  const MeanModel m;
  const double mean = sim.data.rows.col(0).mean();
  // Start off the root but inside the hull of the block means.
  const double start = mean + 0.02 * init_theta(NormalModel{}, sim.data)[1];
  SolverConfig tight;
  tight.gamma = 1e-10;
  for (Index K : {6, 20, 100, 600}) {
    const SsmelFit fit = fit_ssmel(m, sim.data, K, tight, 3, ParamVector::Constant(1, start));
    CHECK(fit.converged);
    CHECK(std::abs(fit.theta_hat[0] - mean) < 1e-8);
  }
  CHECK(std::abs(fit_cel(m, sim.data, tight, ParamVector::Constant(1, start)).theta_hat[0] - mean) < 1e-8);
  CHECK(std::abs(fit_del(m, sim.data, 6, {}, 3)[0] - mean) < 1e-12);
}

TEST_CASE("K = n is the full-data likelihood, bit for bit") {
  const auto sim = gen_normal(400, 8);
  const NormalModel m;
  SolverConfig cfg;
  cfg.record_trace = true;
  const SsmelFit a = fit_ssmel(m, sim.data, 400, cfg, 12345);
  const SsmelFit b = fit_cel(m, sim.data, cfg);
  CHECK(a.theta_hat == b.theta_hat);
  CHECK(a.lambda_hat == b.lambda_hat);
  CHECK(a.log_el == b.log_el);
  CHECK(a.outer_iters == b.outer_iters);
}

TEST_CASE("full-data fit on the normal model") {
  const auto sim = gen_normal(2000, 31);
  const NormalModel m;
  SolverConfig cfg;
  cfg.record_trace = true;
  const SsmelFit fit = fit_cel(m, sim.data, cfg);
  REQUIRE(fit.converged);
  check_descent(fit);
  CHECK(fit.theta_hat.allFinite());
  CHECK(grand_mean_g(m, sim.data, fit.theta_hat).norm() < 5.0 / std::sqrt(2000.0));
}

TEST_CASE("SSMEL fit is a local minimum of the profile") {
  const auto sim = gen_normal(5000, 41);
  const NormalModel m;
  SolverConfig cfg;
  cfg.gamma = 1e-7;
  cfg.record_trace = true;
  const SsmelFit fit = fit_ssmel(m, sim.data, 50, cfg, 2);
  REQUIRE(fit.converged);
  check_descent(fit);
  const double at = evaluate_log_el(m, sim.data, fit.split, fit.theta_hat, cfg).log_el;
  for (Index t = 0; t < 2; ++t)
    for (double d : {-1e-3, -1e-4, 1e-4, 1e-3}) {
      ParamVector probe = fit.theta_hat;
      probe[t] += d;
      CHECK(evaluate_log_el(m, sim.data, fit.split, probe, cfg).log_el >= at - 1e-8);
    }
}

TEST_CASE("fresh and round_stale schedules reach the same estimate") {
  const auto sim = gen_normal(3000, 51);
  const NormalModel m;
  SolverConfig stale;
  stale.gamma = 1e-8;
  stale.record_trace = true;
  SolverConfig fresh = stale;
  fresh.schedule = Schedule::fresh;
  const SsmelFit a = fit_ssmel(m, sim.data, 30, stale, 5);
  const SsmelFit b = fit_ssmel(m, sim.data, 30, fresh, 5);
  REQUIRE(a.converged);
  REQUIRE(b.converged);
  check_descent(a);
  check_descent(b);
  CHECK((a.theta_hat - b.theta_hat).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("just-identified estimates do not depend on K") {
  const auto sim = gen_regression(2000, 4, 0.5, 61);
  const RegressionModel m(5);
  SolverConfig cfg;
  cfg.gamma = 1e-9;
  const ParamVector ref = fit_ssmel(m, sim.data, 2000, cfg, 1).theta_hat;
  for (Index K : {10, 100})
    CHECK((fit_ssmel(m, sim.data, K, cfg, 7).theta_hat - ref).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("solver failure modes") {
  const auto sim = gen_normal(200, 71);
  const MeanModel m;
  SUBCASE("zero outside the hull at the start") {
    const double far = sim.data.rows.col(0).maxCoeff() + 10.0;
    CHECK_THROWS_AS(fit_ssmel(m, sim.data, 20, {}, 1, ParamVector::Constant(1, far)), HullDivergenceError);
  }
  SUBCASE("iteration cap returns a flagged result") {
    SolverConfig cfg;
    cfg.max_outer = 1;
    const ParamVector init = init_theta(NormalModel{}, sim.data);
    const SsmelFit fit = fit_ssmel(NormalModel{}, sim.data, 20, cfg, 1, ParamVector(Eigen::Vector2d(init[0] + 0.05, init[1] * 1.05)));
    CHECK_FALSE(fit.converged);
    CHECK(fit.outer_iters == 1);
  }
  SUBCASE("too few blocks") {
    CHECK_THROWS_AS(fit_ssmel(BivariateNormalModel{}, gen_bivariate(100, 1).data, 4, {}, 1), InfeasibleSplitError);
  }
  SUBCASE("bad config") {
    SolverConfig cfg;
    cfg.gamma = 0.0;
    CHECK_THROWS_AS(fit_ssmel(m, sim.data, 20, cfg, 1), std::invalid_argument);
  }
}

TEST_CASE("DEL baseline") {
  const auto sim = gen_normal(1200, 81);
  const NormalModel m;
  CHECK(fit_del(m, sim.data, 1, {}, 4) == fit_cel(m, sim.data, {}).theta_hat);

  SUBCASE("result does not depend on the thread count") {
#ifdef _OPENMP
    omp_set_num_threads(1);
    const ParamVector one = fit_del(m, sim.data, 12, {}, 4);
    omp_set_num_threads(4);
    const ParamVector four = fit_del(m, sim.data, 12, {}, 4);
    omp_set_num_threads(omp_get_num_procs());
    CHECK(one == four);
#endif
  }

  SUBCASE("a failing subset is named") {
    FunctionModelSpec spec;
    spec.obs_dim = spec.param_dim = spec.num_equations = 1;
    spec.g = [](ConstSpan x, ConstSpan th, MutSpan out) {
      if (x[0] > 1e6) throw std::runtime_error("poisoned observation");
      out[0] = th[0] - x[0];
    };
    spec.jacobian = [](ConstSpan, ConstSpan, MutSpan out) { out[0] = 1.0; };
    spec.second_partials = [](ConstSpan, ConstSpan, MutSpan out) { out[0] = 0.0; };
    spec.init_theta = [](const Dataset&) { return ParamVector::Zero(1); };
    const FunctionModel fm(spec);
    Dataset d = column(std::vector<double>(40, 0.0));
    for (Index i = 0; i < 40; ++i) d.rows(i, 0) = (i % 2 == 0) ? 1.0 : -1.0;
    d.rows(17, 0) = 1e7;
    const SplitPlan plan = make_split(40, 4, 9);
    Index poisoned = -1;
    for (Index k = 0; k < 4; ++k)
      for (Index i : plan.subset(k))
        if (i == 17) poisoned = k;
    try {
      fit_del(fm, d, 4, {}, 9);
      FAIL("expected SubsetFitError");
    } catch (const SubsetFitError& e) {
      CHECK(e.subset() == poisoned);
      CHECK(std::string(e.what()).find("poisoned") != std::string::npos);
    }
  }
}

TEST_CASE("sandwich covariance") {
  const auto sim = gen_normal(3000, 91);
  SUBCASE("mean model collapses to the sample variance") {
    const MeanModel m;
    const double mean = sim.data.rows.col(0).mean();
    const double var = (sim.data.rows.col(0).array() - mean).square().mean();
    const Matrix s = estimate_covariance(m, sim.data, ParamVector::Constant(1, mean));
    CHECK(s(0, 0) == doctest::Approx(var).epsilon(1e-12));
  }
  SUBCASE("normal model: symmetric positive definite") {
    const NormalModel m;
    const Matrix s = estimate_covariance(m, sim.data, fit_cel(m, sim.data, {}).theta_hat);
    CHECK((s - s.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(Eigen::SelfAdjointEigenSolver<Matrix>(s).eigenvalues().minCoeff() > 0.0);
  }
  SUBCASE("singular Omega") {
    const Dataset flat = column(std::vector<double>(10, 2.0));
    CHECK_THROWS_AS(estimate_covariance(MeanModel{}, flat, ParamVector::Constant(1, 2.0)), SingularMatrixError);
  }
}

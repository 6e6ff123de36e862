#include "doctest.h"
#include "oracles.hpp"

#include "ssmel/el_core.hpp"
#include "ssmel/rng.hpp"

#include <cmath>

using namespace ssmel;

namespace {

Matrix col(std::initializer_list<double> v) {
  Matrix m(static_cast<Index>(v.size()), 1);
  Index i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

std::vector<std::vector<double>> rows_of(const Matrix& m) {
  std::vector<std::vector<double>> out(static_cast<std::size_t>(m.rows()));
  for (Index k = 0; k < m.rows(); ++k)
    for (Index j = 0; j < m.cols(); ++j) out[static_cast<std::size_t>(k)].push_back(m(k, j));
  return out;
}

}  // namespace

TEST_CASE("pseudo-log values") {
  const PseudoLogParams p{0.01};
  CHECK(pseudo_log(1.0, p) == 0.0);
  CHECK(pseudo_log(0.0, p) == doctest::Approx(std::log(0.01) - 1.5).epsilon(1e-14));
  CHECK(pseudo_log(0.0, p) == doctest::Approx(-6.10517).epsilon(1e-6));
  CHECK(pseudo_log(0.01, p) == std::log(0.01));
}

TEST_CASE("pseudo-log branches meet at the knot") {
  for (double eps : {1e-4, 0.01, 0.5, 1.0}) {
    const PseudoLogParams p{eps};
    const double below = std::nextafter(eps, 0.0);
    CHECK(std::abs(pseudo_log(below, p) - pseudo_log(eps, p)) < 1e-12);
    CHECK(std::abs(pseudo_log_d1(below, p) - pseudo_log_d1(eps, p)) < 1e-12 / eps);
    CHECK(std::abs(pseudo_log_d2(below, p) - pseudo_log_d2(eps, p)) < 1e-12 / (eps * eps));
    // The quadratic branch formula evaluated at the knot itself.
    const double quad = std::log(eps) - 1.5 + 2.0 - 0.5;
    CHECK(std::abs(quad - std::log(eps)) < 1e-12);
  }
}

TEST_CASE("inner objective") {
  const PseudoLogParams p{1e-4};
  Vector lam(1);
  lam << 0.5;
  const Matrix g = col({-0.5, 1.0});
  const long double ref = oracle::dual_objective(rows_of(g), {0.5L}, 1e-4L);
  CHECK(inner_objective(g, lam, p) == doctest::Approx(static_cast<double>(ref)).epsilon(1e-14));
  CHECK(inner_objective(g, lam, p) == doctest::Approx(0.058891).epsilon(1e-5));
  CHECK(inner_objective(g, Vector::Zero(1), p) == 0.0);
  CHECK(inner_objective(Matrix::Zero(4, 2), Vector::Constant(2, 3.0), p) == 0.0);
  CHECK_THROWS_AS(inner_objective(g, Vector::Zero(2), p), std::invalid_argument);
}

TEST_CASE("solve_lambda on two-point instances") {
  const PseudoLogParams p{0.5};
  SUBCASE("symmetric blocks") {
    const auto sol = solve_lambda(col({0.7, -0.7}), Vector::Zero(1), {}, p);
    CHECK(sol.converged);
    CHECK(sol.lambda[0] == 0.0);
  }
  SUBCASE("closed form root") {
    const double g1 = -0.5, g2 = 1.0;
    const auto sol = solve_lambda(col({g1, g2}), Vector::Zero(1), {}, p);
    const double closed = -(g1 + g2) / (2.0 * g1 * g2);
    CHECK(sol.converged);
    CHECK(sol.lambda[0] == doctest::Approx(closed).epsilon(1e-9));
    const auto grid = oracle::grid_maximize(
        [&](const std::vector<long double>& l) { return oracle::dual_objective({{g1}, {g2}}, l, 0.5L); }, 1, 2.0L);
    CHECK(std::abs(sol.lambda[0] - static_cast<double>(grid.argmax[0])) < 1e-6);
  }
  SUBCASE("same-sign blocks diverge") {
    const auto sol = solve_lambda(col({1.0, 2.0}), Vector::Zero(1), {}, p);
    CHECK(sol.diverged_hull);
    // f keeps increasing in lambda on this instance.
    const auto g = rows_of(col({1.0, 2.0}));
    CHECK(oracle::dual_objective(g, {20.0L}, 0.5L) > oracle::dual_objective(g, {10.0L}, 0.5L));
  }
}

TEST_CASE("hull diagnostic") {
  CHECK(hull_diagnostic(col({0.3, -0.3})) == HullVerdict::interior);
  CHECK(hull_diagnostic(col({1.0, 2.0})) == HullVerdict::exterior);
  CHECK(hull_diagnostic(Matrix::Zero(5, 2)) == HullVerdict::interior);
  CHECK(std::string(to_string(HullVerdict::boundary_suspect)) == "boundary_suspect");
}

TEST_CASE("solver properties on random instances") {
  Rng rng(99);
  int tested = 0;
  while (tested < 30) {
    const Index K = 3 + static_cast<Index>(rng.bounded(4));
    Matrix g(K, 2);
    for (Index k = 0; k < K; ++k) g.row(k) << rng.uniform(-1, 1), rng.uniform(-1, 1);
    if (!oracle::zero_inside_hull_2d(rows_of(g), 0.2)) continue;
    ++tested;
    const PseudoLogParams p{1.0 / static_cast<double>(K)};
    LambdaSolveConfig cfg;
    cfg.record_trace = true;
    const auto sol = solve_lambda(g, Vector::Zero(2), cfg, p);
    REQUIRE(sol.converged);
    REQUIRE_FALSE(sol.diverged_hull);
    CHECK(sol.objective >= 0.0);
    CHECK(inner_gradient(g, sol.lambda, p).cwiseAbs().maxCoeff() < 1e-6);
    for (std::size_t i = 1; i < sol.trace.size(); ++i) CHECK(sol.trace[i] >= sol.trace[i - 1]);
    // Nothing on a local grid beats the solution.
    double worst = -INFINITY;
    for (int a = -5; a <= 5; ++a)
      for (int b = -5; b <= 5; ++b) {
        Vector l = sol.lambda;
        l[0] += 1e-3 * a;
        l[1] += 1e-3 * b;
        worst = std::max(worst, inner_objective(g, l, p) - sol.objective);
      }
    CHECK(worst <= 1e-12);
    // Determinism.
    const auto again = solve_lambda(g, Vector::Zero(2), cfg, p);
    CHECK(again.lambda == sol.lambda);
    CHECK(again.objective == sol.objective);
  }
}

TEST_CASE("zero columns are skipped and bad blocks rejected") {
  Matrix g(3, 2);
  g << 0.5, 0.0, -0.2, 0.0, -0.4, 0.0;
  const auto sol = solve_lambda(g, Vector::Zero(2), {}, PseudoLogParams{1.0 / 3});
  CHECK(sol.converged);
  CHECK(sol.lambda[1] == 0.0);

  Matrix bad = g;
  bad(1, 0) = NAN;
  CHECK_THROWS_AS(solve_lambda(bad, Vector::Zero(2), {}, PseudoLogParams{0.5}), std::invalid_argument);
  CHECK_THROWS_AS(solve_lambda(g, Vector::Zero(3), {}, PseudoLogParams{0.5}), std::invalid_argument);
}

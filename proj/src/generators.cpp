#include "ssmel/generators.hpp"

#include "ssmel/rng.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ssmel {

namespace {

void check_n(Index n) {
  if (n < 1) throw std::invalid_argument("sample size must be positive");
}

}  // namespace

SimulatedData gen_normal(Index n, std::uint64_t seed) {
  check_n(n);
  Rng rng(seed);
  const double mu = rng.uniform(-2.0, 2.0);
  const double sigma = rng.uniform(0.5, 2.0);
  SimulatedData out;
  out.truth.resize(2);
  out.truth << mu, sigma;
  out.data.rows.resize(n, 1);
  for (Index i = 0; i < n; ++i) out.data.rows(i, 0) = rng.normal(mu, sigma);
  return out;
}

SimulatedData gen_regression(Index n, Index p, double rho, std::uint64_t seed) {
  check_n(n);
  if (p < 1) throw std::invalid_argument("regression needs p >= 1");
  if (!(rho >= 0.0 && rho < 1.0)) throw std::invalid_argument("rho must lie in [0, 1)");

  SimulatedData out;
  out.truth = ParamVector::Ones(p + 1);
  const double head[] = {1.0, 5.0, 4.0, 3.0, 2.0};
  for (Index j = 0; j < std::min<Index>(p + 1, 5); ++j) out.truth[j] = head[j];

  Rng rng(seed);
  const double a = std::sqrt(rho), b = std::sqrt(1.0 - rho);
  out.data.rows.resize(n, p + 2);
  for (Index i = 0; i < n; ++i) {
    auto row = out.data.rows.row(i);
    const double z0 = rng.normal();
    row[1] = 1.0;
    double y = out.truth[0];
    for (Index j = 1; j <= p; ++j) {
      row[j + 1] = a * z0 + b * rng.normal();
      y += out.truth[j] * row[j + 1];
    }
    row[0] = y + rng.normal();
  }
  return out;
}

SimulatedData gen_bivariate(Index n, std::uint64_t seed) {
  check_n(n);
  constexpr double rho = 0.5;
  const double c = std::sqrt(1.0 - rho * rho);
  SimulatedData out;
  out.truth.resize(5);
  out.truth << 0.0, 0.0, 1.0, 1.0, rho;
  Rng rng(seed);
  out.data.rows.resize(n, 2);
  for (Index i = 0; i < n; ++i) {
    const double x = rng.normal();
    const double z = rng.normal();
    out.data.rows(i, 0) = x;
    out.data.rows(i, 1) = rho * x + c * z;
  }
  return out;
}

}  // namespace ssmel

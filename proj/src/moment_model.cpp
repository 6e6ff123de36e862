#include "ssmel/moment_model.hpp"

#include "ssmel/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace ssmel {

bool MomentModel::in_bounds(const ParamVector& theta) const {
  if (theta.size() != param_dim() || !theta.allFinite()) return false;
  for (const auto& b : bounds()) {
    const double v = theta[b.index];
    if (!(v > b.lower && v < b.upper)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Normal model

void NormalModel::g(ConstSpan x, ConstSpan theta, MutSpan out) const {
  const double mu = theta[0], sigma = theta[1], v = x[0];
  const double dev = v - mu;
  out[0] = mu - v;
  out[1] = sigma * sigma - dev * dev;
  out[2] = v * v * v - mu * (mu * mu + 3.0 * sigma * sigma);
}

void NormalModel::jacobian(ConstSpan x, ConstSpan theta, MutSpan out) const {
  const double mu = theta[0], sigma = theta[1];
  // column mu
  out[0] = 1.0;
  out[1] = 2.0 * (x[0] - mu);
  out[2] = -3.0 * (mu * mu + sigma * sigma);
  // column sigma
  out[3] = 0.0;
  out[4] = 2.0 * sigma;
  out[5] = -6.0 * mu * sigma;
}

void NormalModel::second_partials(ConstSpan, ConstSpan theta, MutSpan out) const {
  const double mu = theta[0];
  out[0] = 0.0;
  out[1] = -2.0;
  out[2] = -6.0 * mu;
  out[3] = 0.0;
  out[4] = 2.0;
  out[5] = -6.0 * mu;
}

ParamVector NormalModel::init_theta(const Dataset& data) const {
  const auto col = data.rows.col(0);
  const double mean = col.mean();
  const double var = (col.array() - mean).square().mean();
  ParamVector theta(2);
  theta << mean, std::max(std::sqrt(var), kScaleFloor);
  return theta;
}

std::vector<OpenInterval> NormalModel::bounds() const {
  return {{1, 0.0, std::numeric_limits<double>::infinity()}};
}

// ---------------------------------------------------------------------------
// Bivariate normal model

void BivariateNormalModel::g(ConstSpan x, ConstSpan theta, MutSpan out) const {
  const double dx = x[0] - theta[0];
  const double dy = x[1] - theta[1];
  out[0] = theta[0] - x[0];
  out[1] = theta[1] - x[1];
  out[2] = theta[2] * theta[2] - dx * dx;
  out[3] = theta[3] * theta[3] - dy * dy;
  out[4] = dx * dy - theta[4] * theta[2] * theta[3];
}

void BivariateNormalModel::jacobian(ConstSpan x, ConstSpan theta, MutSpan out) const {
  const double dx = x[0] - theta[0];
  const double dy = x[1] - theta[1];
  const double s1 = theta[2], s2 = theta[3], rho = theta[4];
  std::fill(out.begin(), out.end(), 0.0);
  auto at = [&](Index j, Index t) -> double& { return out[j + 5 * t]; };
  at(0, 0) = 1.0;
  at(1, 1) = 1.0;
  at(2, 0) = 2.0 * dx;
  at(2, 2) = 2.0 * s1;
  at(3, 1) = 2.0 * dy;
  at(3, 3) = 2.0 * s2;
  at(4, 0) = -dy;
  at(4, 1) = -dx;
  at(4, 2) = -rho * s2;
  at(4, 3) = -rho * s1;
  at(4, 4) = -s1 * s2;
}

void BivariateNormalModel::second_partials(ConstSpan, ConstSpan, MutSpan out) const {
  std::fill(out.begin(), out.end(), 0.0);
  out[2 + 5 * 0] = -2.0;
  out[3 + 5 * 1] = -2.0;
  out[2 + 5 * 2] = 2.0;
  out[3 + 5 * 3] = 2.0;
}

ParamVector BivariateNormalModel::init_theta(const Dataset& data) const {
  const auto xs = data.rows.col(0).array();
  const auto ys = data.rows.col(1).array();
  const double mx = xs.mean(), my = ys.mean();
  const double vx = (xs - mx).square().mean();
  const double vy = (ys - my).square().mean();
  const double cxy = ((xs - mx) * (ys - my)).mean();
  const double sx = std::max(std::sqrt(vx), kScaleFloor);
  const double sy = std::max(std::sqrt(vy), kScaleFloor);
  const double rho = std::clamp(cxy / (sx * sy), -0.999, 0.999);
  ParamVector theta(5);
  theta << mx, my, sx, sy, rho;
  return theta;
}

std::vector<OpenInterval> BivariateNormalModel::bounds() const {
  const double inf = std::numeric_limits<double>::infinity();
  return {{2, 0.0, inf}, {3, 0.0, inf}, {4, -1.0, 1.0}};
}

// ---------------------------------------------------------------------------
// Regression model

RegressionModel::RegressionModel(Index num_coefficients) : p_(num_coefficients) {
  if (p_ < 1) throw std::invalid_argument("regression model needs at least one coefficient");
}

void RegressionModel::g(ConstSpan x, ConstSpan theta, MutSpan out) const {
  double fitted = 0.0;
  for (Index j = 0; j < p_; ++j) fitted += x[j + 1] * theta[j];
  const double resid = x[0] - fitted;
  for (Index j = 0; j < p_; ++j) out[j] = x[j + 1] * resid;
}

void RegressionModel::jacobian(ConstSpan x, ConstSpan, MutSpan out) const {
  for (Index t = 0; t < p_; ++t)
    for (Index j = 0; j < p_; ++j) out[j + p_ * t] = -x[j + 1] * x[t + 1];
}

void RegressionModel::second_partials(ConstSpan, ConstSpan, MutSpan out) const {
  std::fill(out.begin(), out.end(), 0.0);
}

ParamVector RegressionModel::init_theta(const Dataset& data) const {
  const Matrix design = data.rows.rightCols(p_);
  const Vector response = data.rows.col(0);
  Eigen::ColPivHouseholderQR<Matrix> qr(design);
  if (qr.rank() < p_) {
    throw SingularMatrixError("regression design matrix is rank deficient (rank " + std::to_string(qr.rank()) +
                              " < " + std::to_string(p_) + ")");
  }
  return qr.solve(response);
}

// ---------------------------------------------------------------------------
// Mean model

void MeanModel::g(ConstSpan x, ConstSpan theta, MutSpan out) const { out[0] = theta[0] - x[0]; }
void MeanModel::jacobian(ConstSpan, ConstSpan, MutSpan out) const { out[0] = 1.0; }
void MeanModel::second_partials(ConstSpan, ConstSpan, MutSpan out) const { out[0] = 0.0; }

ParamVector MeanModel::init_theta(const Dataset& data) const {
  ParamVector theta(1);
  theta << data.rows.col(0).mean();
  return theta;
}

// ---------------------------------------------------------------------------
// Custom models

void finite_difference_jacobian(const FunctionModelSpec::Kernel& g, Index r, ConstSpan x, ConstSpan theta,
                                double h, MutSpan out) {
  const auto p = static_cast<Index>(theta.size());
  std::vector<double> shifted(theta.begin(), theta.end());
  Vector plus(r), minus(r);
  for (Index t = 0; t < p; ++t) {
    const double step = h * (1.0 + std::abs(theta[t]));
    shifted[t] = theta[t] + step;
    g(x, shifted, {plus.data(), static_cast<std::size_t>(r)});
    shifted[t] = theta[t] - step;
    g(x, shifted, {minus.data(), static_cast<std::size_t>(r)});
    shifted[t] = theta[t];
    for (Index j = 0; j < r; ++j) out[j + r * t] = (plus[j] - minus[j]) / (2.0 * step);
  }
}

FunctionModel::FunctionModel(FunctionModelSpec spec) : spec_(std::move(spec)) {
  if (!spec_.g) throw std::invalid_argument("custom model needs an estimating function");
  if (spec_.num_equations < spec_.param_dim || spec_.param_dim < 1)
    throw std::invalid_argument("custom model needs r >= p >= 1");
  if ((!spec_.jacobian || !spec_.second_partials) && !spec_.allow_finite_differences)
    throw std::invalid_argument("custom model '" + spec_.name +
                                "' lacks analytic derivatives; set allow_finite_differences to opt in");
  if (!spec_.init_theta) throw std::invalid_argument("custom model needs an initializer");
}

void FunctionModel::g(ConstSpan x, ConstSpan theta, MutSpan out) const { spec_.g(x, theta, out); }

void FunctionModel::jacobian(ConstSpan x, ConstSpan theta, MutSpan out) const {
  if (spec_.jacobian) {
    spec_.jacobian(x, theta, out);
  } else {
    finite_difference_jacobian(spec_.g, spec_.num_equations, x, theta, 1e-5, out);
  }
}

void FunctionModel::second_partials(ConstSpan x, ConstSpan theta, MutSpan out) const {
  if (spec_.second_partials) {
    spec_.second_partials(x, theta, out);
    return;
  }
  // Central difference of the Jacobian column, analytic or numeric.
  const Index r = spec_.num_equations, p = spec_.param_dim;
  std::vector<double> shifted(theta.begin(), theta.end());
  Vector plus(r * p), minus(r * p);
  for (Index t = 0; t < p; ++t) {
    const double step = 1e-5 * (1.0 + std::abs(theta[t]));
    shifted[t] = theta[t] + step;
    jacobian(x, shifted, {plus.data(), static_cast<std::size_t>(r * p)});
    shifted[t] = theta[t] - step;
    jacobian(x, shifted, {minus.data(), static_cast<std::size_t>(r * p)});
    shifted[t] = theta[t];
    for (Index j = 0; j < r; ++j) out[j + r * t] = (plus[j + r * t] - minus[j + r * t]) / (2.0 * step);
  }
}

ParamVector FunctionModel::init_theta(const Dataset& data) const { return spec_.init_theta(data); }

bool FunctionModel::uses_finite_differences() const { return !spec_.jacobian || !spec_.second_partials; }

std::unique_ptr<MomentModel> make_model(const std::string& name, Index num_coefficients) {
  if (name == "normal") return std::make_unique<NormalModel>();
  if (name == "bivariate") return std::make_unique<BivariateNormalModel>();
  if (name == "mean") return std::make_unique<MeanModel>();
  if (name == "regression") return std::make_unique<RegressionModel>(num_coefficients);
  throw std::invalid_argument("unknown model '" + name + "' (expected normal, bivariate, mean, regression)");
}

// ---------------------------------------------------------------------------
// Checked entry points

namespace {

ConstSpan as_span(const ParamVector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

void check_point(const MomentModel& model, ConstSpan x, const ParamVector& theta) {
  if (static_cast<Index>(x.size()) != model.obs_dim())
    throw std::invalid_argument("observation has dimension " + std::to_string(x.size()) + ", model '" +
                                model.name() + "' expects " + std::to_string(model.obs_dim()));
  if (theta.size() != model.param_dim())
    throw std::invalid_argument("parameter has dimension " + std::to_string(theta.size()) + ", model '" +
                                model.name() + "' expects " + std::to_string(model.param_dim()));
  if (!model.in_bounds(theta)) throw std::invalid_argument("parameter outside the model bounds");
}

double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
}

}  // namespace

Vector eval_g(const MomentModel& model, ConstSpan x, const ParamVector& theta) {
  check_point(model, x, theta);
  Vector out(model.num_equations());
  model.g(x, as_span(theta), {out.data(), static_cast<std::size_t>(out.size())});
  return out;
}

Matrix eval_jacobian(const MomentModel& model, ConstSpan x, const ParamVector& theta) {
  check_point(model, x, theta);
  Matrix out(model.num_equations(), model.param_dim());
  model.jacobian(x, as_span(theta), {out.data(), static_cast<std::size_t>(out.size())});
  return out;
}

Vector eval_second_partial(const MomentModel& model, ConstSpan x, const ParamVector& theta, Index t) {
  if (t < 0 || t >= model.param_dim())
    throw std::invalid_argument("coordinate index " + std::to_string(t) + " out of range");
  check_point(model, x, theta);
  Matrix all(model.num_equations(), model.param_dim());
  model.second_partials(x, as_span(theta), {all.data(), static_cast<std::size_t>(all.size())});
  return all.col(t);
}

ParamVector init_theta(const MomentModel& model, const Dataset& data) {
  if (data.size() == 0) throw std::invalid_argument("cannot initialize from an empty dataset");
  if (data.dim() != model.obs_dim())
    throw std::invalid_argument("dataset dimension does not match model '" + model.name() + "'");
  return model.init_theta(data);
}

double check_derivatives(const MomentModel& model, ConstSpan x, const ParamVector& theta, double h) {
  const Index r = model.num_equations(), p = model.param_dim();
  auto g = [&](ConstSpan xx, ConstSpan th, MutSpan out) { model.g(xx, th, out); };

  Matrix analytic_jac(r, p), numeric_jac(r, p), analytic_second(r, p);
  model.jacobian(x, as_span(theta), {analytic_jac.data(), static_cast<std::size_t>(r * p)});
  model.second_partials(x, as_span(theta), {analytic_second.data(), static_cast<std::size_t>(r * p)});
  finite_difference_jacobian(g, r, x, as_span(theta), h, {numeric_jac.data(), static_cast<std::size_t>(r * p)});

  double worst = 0.0;
  for (Index t = 0; t < p; ++t)
    for (Index j = 0; j < r; ++j) worst = std::max(worst, rel_error(analytic_jac(j, t), numeric_jac(j, t)));

  Vector center(r), plus(r), minus(r);
  model.g(x, as_span(theta), {center.data(), static_cast<std::size_t>(r)});
  ParamVector shifted = theta;
  for (Index t = 0; t < p; ++t) {
    const double step = 100.0 * h * (1.0 + std::abs(theta[t]));
    shifted[t] = theta[t] + step;
    model.g(x, as_span(shifted), {plus.data(), static_cast<std::size_t>(r)});
    shifted[t] = theta[t] - step;
    model.g(x, as_span(shifted), {minus.data(), static_cast<std::size_t>(r)});
    shifted[t] = theta[t];
    for (Index j = 0; j < r; ++j) {
      const double numeric = (plus[j] - 2.0 * center[j] + minus[j]) / (step * step);
      worst = std::max(worst, rel_error(analytic_second(j, t), numeric));
    }
  }
  return worst;
}

}  // namespace ssmel

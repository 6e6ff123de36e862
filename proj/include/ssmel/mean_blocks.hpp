#pragma once

#include "ssmel/moment_model.hpp"
#include "ssmel/split.hpp"

namespace ssmel {

/// Block means gbar^(k)(theta) of the estimating function, optionally with
/// the block-mean Jacobians and per-coordinate second partials.
///
/// Derivative matrices are K x (r * p): column j + r * t holds the
/// (j, t) entry for every block, so jacobians.middleCols(r * t, r) is the
/// K x r matrix of d gbar / d theta_t.
struct MeanBlocks {
  Matrix values;
  Matrix jacobians;
  Matrix second_partials;
  ParamVector theta_at;

  Index num_blocks() const { return values.rows(); }
  Index num_equations() const { return values.cols(); }
  Index param_dim() const { return theta_at.size(); }
  bool has_derivatives() const { return jacobians.size() > 0; }

  auto jacobian_wrt(Index t) const { return jacobians.middleCols(num_equations() * t, num_equations()); }
  auto second_wrt(Index t) const { return second_partials.middleCols(num_equations() * t, num_equations()); }
};

/// Mean of g (and derivatives) over one subset. jac and second are r * p
/// column-major.
struct BlockMean {
  Vector gbar;
  Vector jac;
  Vector second;
};

namespace detail {

/// The one summation kernel behind every block mean in the library. Both the
/// single-machine path and the distributed workers go through it, which is
/// what makes their results bitwise equal.
template <class RowAt>
void accumulate_block(const MomentModel& model, Index count, RowAt&& row_at, ConstSpan theta,
                      bool with_derivatives, BlockMean& out) {
  const Index r = model.num_equations(), p = model.param_dim();
  out.gbar.setZero(r);
  Vector g(r);
  Vector jac, second;
  if (with_derivatives) {
    out.jac.setZero(r * p);
    out.second.setZero(r * p);
    jac.resize(r * p);
    second.resize(r * p);
  }
  for (Index i = 0; i < count; ++i) {
    const ConstSpan x = row_at(i);
    model.g(x, theta, {g.data(), static_cast<std::size_t>(r)});
    out.gbar += g;
    if (with_derivatives) {
      model.jacobian(x, theta, {jac.data(), static_cast<std::size_t>(r * p)});
      model.second_partials(x, theta, {second.data(), static_cast<std::size_t>(r * p)});
      out.jac += jac;
      out.second += second;
    }
  }
  const double m = static_cast<double>(count);
  out.gbar /= m;
  if (with_derivatives) {
    out.jac /= m;
    out.second /= m;
  }
}

}  // namespace detail

/// Block means over the subsets of `plan`, blocks evaluated in parallel.
/// Each block is summed sequentially, so the result does not depend on the
/// thread count. Throws std::invalid_argument on dimension mismatches or a
/// theta outside the model bounds.
MeanBlocks compute_mean_blocks(const MomentModel& model, const Dataset& data, const SplitPlan& plan,
                               const ParamVector& theta, bool with_derivatives);

/// Single-threaded reference for compute_mean_blocks.
MeanBlocks compute_mean_blocks_serial(const MomentModel& model, const Dataset& data, const SplitPlan& plan,
                                      const ParamVector& theta, bool with_derivatives);

/// (1/n) sum_i g(x_i, theta) over the whole dataset.
Vector grand_mean_g(const MomentModel& model, const Dataset& data, const ParamVector& theta);

}  // namespace ssmel

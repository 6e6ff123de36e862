#include "ssmel/mean_blocks.hpp"

#include <exception>
#include <stdexcept>
#include <string>
#include <vector>

namespace ssmel {

namespace {

void validate(const MomentModel& model, const Dataset& data, const SplitPlan& plan, const ParamVector& theta) {
  if (data.dim() != model.obs_dim())
    throw std::invalid_argument("dataset has dimension " + std::to_string(data.dim()) + ", model '" +
                                model.name() + "' expects " + std::to_string(model.obs_dim()));
  if (plan.n != data.size())
    throw std::invalid_argument("split plan covers " + std::to_string(plan.n) + " points, dataset has " +
                                std::to_string(data.size()));
  if (theta.size() != model.param_dim()) throw std::invalid_argument("parameter has the wrong dimension");
  if (!model.in_bounds(theta)) throw std::invalid_argument("parameter outside the model bounds");
}

MeanBlocks allocate(const MomentModel& model, const SplitPlan& plan, const ParamVector& theta,
                    bool with_derivatives) {
  const Index r = model.num_equations(), p = model.param_dim();
  MeanBlocks blocks;
  blocks.values.resize(plan.K, r);
  if (with_derivatives) {
    blocks.jacobians.resize(plan.K, r * p);
    blocks.second_partials.resize(plan.K, r * p);
  }
  blocks.theta_at = theta;
  return blocks;
}

void fill_block(const MomentModel& model, const Dataset& data, const SplitPlan& plan, ConstSpan theta, Index k,
                bool with_derivatives, BlockMean& scratch, MeanBlocks& blocks) {
  const auto idx = plan.subset(k);
  detail::accumulate_block(
      model, static_cast<Index>(idx.size()), [&](Index i) { return data.row(idx[i]); }, theta, with_derivatives,
      scratch);
  blocks.values.row(k) = scratch.gbar.transpose();
  if (with_derivatives) {
    blocks.jacobians.row(k) = scratch.jac.transpose();
    blocks.second_partials.row(k) = scratch.second.transpose();
  }
}

}  // namespace

MeanBlocks compute_mean_blocks(const MomentModel& model, const Dataset& data, const SplitPlan& plan,
                               const ParamVector& theta, bool with_derivatives) {
  validate(model, data, plan, theta);
  MeanBlocks blocks = allocate(model, plan, theta, with_derivatives);
  const ConstSpan th(theta.data(), static_cast<std::size_t>(theta.size()));
  const Index K = plan.K;
  // Exceptions must not cross the parallel region; the lowest failing block
  // is rethrown after it.
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(K));
#pragma omp parallel if (K > 1 && plan.n >= 4096)
  {
    BlockMean scratch;
#pragma omp for schedule(static)
    for (Index k = 0; k < K; ++k) {
      try {
        fill_block(model, data, plan, th, k, with_derivatives, scratch, blocks);
      } catch (...) {
        errors[static_cast<std::size_t>(k)] = std::current_exception();
      }
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return blocks;
}

MeanBlocks compute_mean_blocks_serial(const MomentModel& model, const Dataset& data, const SplitPlan& plan,
                                      const ParamVector& theta, bool with_derivatives) {
  validate(model, data, plan, theta);
  MeanBlocks blocks = allocate(model, plan, theta, with_derivatives);
  const ConstSpan th(theta.data(), static_cast<std::size_t>(theta.size()));
  BlockMean scratch;
  for (Index k = 0; k < plan.K; ++k) fill_block(model, data, plan, th, k, with_derivatives, scratch, blocks);
  return blocks;
}

Vector grand_mean_g(const MomentModel& model, const Dataset& data, const ParamVector& theta) {
  const Index r = model.num_equations();
  Vector sum = Vector::Zero(r), g(r);
  const ConstSpan th(theta.data(), static_cast<std::size_t>(theta.size()));
  for (Index i = 0; i < data.size(); ++i) {
    model.g(data.row(i), th, {g.data(), static_cast<std::size_t>(r)});
    sum += g;
  }
  return sum / static_cast<double>(data.size());
}

}  // namespace ssmel

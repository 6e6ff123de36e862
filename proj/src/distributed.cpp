#include "ssmel/distributed.hpp"

#include "ssmel/mean_blocks.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>

namespace ssmel {

Worker::Worker(Index id, Dataset subset) : id_(id), data_(std::move(subset)) {
  if (data_.size() == 0) throw std::invalid_argument("worker " + std::to_string(id) + " holds no data");
}

WorkerReport worker_report(const Worker& worker, const MomentModel& model, const Broadcast& broadcast) {
  if (worker.data().dim() != model.obs_dim())
    throw std::invalid_argument("worker " + std::to_string(worker.id()) + " data has the wrong dimension");
  if (broadcast.theta.size() != model.param_dim() || !model.in_bounds(broadcast.theta))
    throw std::invalid_argument("broadcast theta is invalid for model '" + model.name() + "'");

  const Index r = model.num_equations(), p = model.param_dim();
  BlockMean block;
  const Dataset& data = worker.data();
  detail::accumulate_block(
      model, data.size(), [&](Index i) { return data.row(i); },
      ConstSpan(broadcast.theta.data(), static_cast<std::size_t>(p)), true, block);

  WorkerReport report;
  report.worker_id = worker.id();
  report.round = broadcast.round;
  report.gbar = std::move(block.gbar);
  report.jac = Eigen::Map<const Matrix>(block.jac.data(), r, p);
  report.second = Eigen::Map<const Matrix>(block.second.data(), r, p);
  return report;
}

Coordinator::Coordinator(const MomentModel& model, Index num_workers, const SolverConfig& config, ParamVector theta0)
    : model_(model),
      num_workers_(num_workers),
      solver_(model.bounds(), num_workers, model.num_equations(), config, std::move(theta0)) {
  require_enough_blocks(num_workers, model.param_dim());
}

Broadcast Coordinator::broadcast() const {
  if (done()) throw std::logic_error("coordinator has finished");
  return Broadcast{solver_.rounds() + 1, solver_.pending_theta(), solver_.lambda()};
}

RoundSummary Coordinator::coordinator_round(std::vector<WorkerReport> reports) {
  const Index K = num_workers_, r = model_.num_equations(), p = model_.param_dim();
  const Index round = solver_.rounds() + 1;
  if (static_cast<Index>(reports.size()) != K)
    throw std::invalid_argument("expected " + std::to_string(K) + " reports, got " + std::to_string(reports.size()));
  std::sort(reports.begin(), reports.end(),
            [](const WorkerReport& a, const WorkerReport& b) { return a.worker_id < b.worker_id; });

  MeanBlocks stats;
  stats.values.resize(K, r);
  stats.jacobians.resize(K, r * p);
  stats.second_partials.resize(K, r * p);
  stats.theta_at = solver_.pending_theta();
  for (Index k = 0; k < K; ++k) {
    const WorkerReport& rep = reports[static_cast<std::size_t>(k)];
    if (rep.worker_id != k)
      throw std::invalid_argument("missing or duplicate report: expected worker " + std::to_string(k) + ", got " +
                                  std::to_string(rep.worker_id));
    if (rep.round != round)
      throw std::invalid_argument("worker " + std::to_string(k) + " reported for round " +
                                  std::to_string(rep.round) + " during round " + std::to_string(round));
    if (rep.gbar.size() != r || rep.jac.rows() != r || rep.jac.cols() != p || rep.second.rows() != r ||
        rep.second.cols() != p)
      throw std::invalid_argument("worker " + std::to_string(k) + " sent a misshapen report");
    stats.values.row(k) = rep.gbar.transpose();
    stats.jacobians.row(k) = Eigen::Map<const Vector>(rep.jac.data(), r * p).transpose();
    stats.second_partials.row(k) = Eigen::Map<const Vector>(rep.second.data(), r * p).transpose();
  }
  return solver_.advance(stats);
}

DistributedRun run_distributed(const MomentModel& model, const std::vector<Dataset>& subsets,
                               const SolverConfig& config, const std::optional<ParamVector>& theta0) {
  const auto K = static_cast<Index>(subsets.size());
  if (K == 0) throw std::invalid_argument("no subsets");
  std::vector<Worker> workers;
  workers.reserve(subsets.size());
  for (Index k = 0; k < K; ++k) workers.emplace_back(k, subsets[static_cast<std::size_t>(k)]);

  ParamVector start;
  if (theta0) {
    start = *theta0;
  } else {
    Dataset all;
    Index n = 0;
    for (const auto& s : subsets) n += s.size();
    all.rows.resize(n, model.obs_dim());
    Index at = 0;
    for (const auto& s : subsets) {
      all.rows.middleRows(at, s.size()) = s.rows;
      at += s.size();
    }
    start = init_theta(model, all);
  }

  Coordinator coordinator(model, K, config, start);
  const Index r = model.num_equations(), p = model.param_dim();
  DistributedRun run;
  run.log.payload_up = r + 2 * r * p;
  run.log.payload_down = p + r;

  std::vector<WorkerReport> reports(static_cast<std::size_t>(K));
  std::vector<std::string> errors(static_cast<std::size_t>(K));
  while (!coordinator.done()) {
    const Broadcast msg = coordinator.broadcast();
#pragma omp parallel for schedule(static)
    for (Index k = 0; k < K; ++k) {
      try {
        reports[static_cast<std::size_t>(k)] = worker_report(workers[static_cast<std::size_t>(k)], model, msg);
      } catch (const std::exception& e) {
        errors[static_cast<std::size_t>(k)] = e.what();
      }
    }
    for (Index k = 0; k < K; ++k)
      if (!errors[static_cast<std::size_t>(k)].empty())
        throw std::runtime_error("worker " + std::to_string(k) + " failed in round " + std::to_string(msg.round) +
                                 ": " + errors[static_cast<std::size_t>(k)]);

    const RoundSummary summary = coordinator.coordinator_round(reports);
    RoundLogEntry entry;
    entry.round = msg.round;
    entry.max_delta = summary.max_delta;
    entry.messages_up = K;
    entry.messages_down = K;
    entry.payload_scalars = K * (run.log.payload_up + run.log.payload_down);
    run.log.entries.push_back(entry);
    run.log.rounds += 1;
    run.log.messages_up += K;
    run.log.messages_down += K;
  }
  run.fit = coordinator.result();
  return run;
}

DistributedRun run_distributed(const MomentModel& model, const Dataset& data, const SplitPlan& plan,
                               const SolverConfig& config, const std::optional<ParamVector>& theta0) {
  if (plan.n != data.size()) throw std::invalid_argument("split plan does not match the dataset");
  std::vector<Dataset> subsets;
  subsets.reserve(static_cast<std::size_t>(plan.K));
  for (Index k = 0; k < plan.K; ++k) subsets.push_back(subset_data(data, plan, k));
  DistributedRun run = run_distributed(model, subsets, config, theta0 ? *theta0 : init_theta(model, data));
  run.fit.split = plan;
  return run;
}

void write_round_log_csv(const RoundLog& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write round log to '" + path + "'");
  out << "round,max_delta,messages,payload_scalars\n";
  char buf[64];
  for (const auto& e : log.entries) {
    std::snprintf(buf, sizeof buf, "%.17g", e.max_delta);
    out << e.round << ',' << buf << ',' << (e.messages_up + e.messages_down) << ',' << e.payload_scalars << '\n';
  }
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

}  // namespace ssmel

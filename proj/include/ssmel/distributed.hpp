#pragma once

#include "ssmel/moment_model.hpp"
#include "ssmel/solver.hpp"
#include "ssmel/split.hpp"

#include <optional>
#include <string>
#include <vector>

namespace ssmel {

/// Coordinator -> worker message.
struct Broadcast {
  Index round = 0;
  ParamVector theta;
  Vector lambda;
};

/// Worker -> coordinator message: block mean of g with its Jacobian and
/// per-coordinate second partials (both r x p) at the broadcast theta.
struct WorkerReport {
  Index worker_id = 0;
  Index round = 0;
  Vector gbar;
  Matrix jac;
  Matrix second;
};

/// Holds one subset of the data. Shares nothing with the coordinator; all
/// exchange goes through Broadcast / WorkerReport values.
class Worker {
 public:
  Worker(Index id, Dataset subset);

  Index id() const { return id_; }
  Index size() const { return data_.size(); }
  const Dataset& data() const { return data_; }

 private:
  Index id_;
  Dataset data_;
};

/// Block statistics of `worker` at broadcast.theta. Throws
/// std::invalid_argument on dimension mismatch or an out-of-bounds theta.
WorkerReport worker_report(const Worker& worker, const MomentModel& model, const Broadcast& broadcast);

struct RoundLogEntry {
  Index round = 0;
  double max_delta = 0.0;
  Index messages_up = 0;
  Index messages_down = 0;
  Index payload_scalars = 0;
};

struct RoundLog {
  Index rounds = 0;
  Index messages_up = 0;
  Index messages_down = 0;
  /// Scalars per message: r + 2 r p upstream, p + r downstream.
  Index payload_up = 0;
  Index payload_down = 0;
  std::vector<RoundLogEntry> entries;
};

class Coordinator {
 public:
  Coordinator(const MomentModel& model, Index num_workers, const SolverConfig& config, ParamVector theta0);

  bool done() const { return solver_.done(); }
  Index num_workers() const { return num_workers_; }
  Broadcast broadcast() const;

  /// Consumes exactly one report per worker for the current round, in any
  /// order. Reports are assembled in worker-id order before any arithmetic.
  /// Throws std::invalid_argument on a missing, duplicate, stale, or
  /// misshapen report.
  RoundSummary coordinator_round(std::vector<WorkerReport> reports);

  SsmelFit result() const { return solver_.result(); }

 private:
  const MomentModel& model_;
  Index num_workers_;
  OuterSolver solver_;
};

struct DistributedRun {
  SsmelFit fit;
  RoundLog log;
};

/// Runs the protocol to completion with one worker per subset. Workers of a
/// round evaluate concurrently. theta0 defaults to the model initializer on
/// the concatenated subsets. A worker error aborts the run with a
/// std::runtime_error naming the worker.
DistributedRun run_distributed(const MomentModel& model, const std::vector<Dataset>& subsets,
                               const SolverConfig& config, const std::optional<ParamVector>& theta0 = std::nullopt);

/// Same, with workers holding the subsets of `plan`; theta0 defaults to the
/// initializer on the full data, as in fit_ssmel.
DistributedRun run_distributed(const MomentModel& model, const Dataset& data, const SplitPlan& plan,
                               const SolverConfig& config, const std::optional<ParamVector>& theta0 = std::nullopt);

/// CSV with columns round,max_delta,messages,payload_scalars.
void write_round_log_csv(const RoundLog& log, const std::string& path);

}  // namespace ssmel

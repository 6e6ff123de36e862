#pragma once

#include "ssmel/config.hpp"
#include "ssmel/solver.hpp"

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace ssmel {

enum class ExperimentKind {
  normal_mse,
  normal_timing,
  regression_mse,
  bivariate_rejection,
  bivariate_power,
  csv_regression,
};

ExperimentKind parse_experiment_kind(const std::string& name);
const char* to_string(ExperimentKind kind);

struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::normal_mse;
  Index n = 1000;
  std::vector<Index> K_list;
  Index reps = 1;
  std::uint64_t base_seed = 1;
  double alpha = 0.05;
  /// Tested rho values for bivariate_power.
  std::vector<double> grid;
  std::string output_path;
  /// Any of ssmel, del, cel. ssmel at K = n is reported as cel.
  std::vector<std::string> methods{"ssmel"};
  /// Regression designs: number of covariates and their correlation.
  Index p = 4;
  double rho = 0.0;
  /// csv_regression input.
  std::string csv_path;
  std::string response;
  std::vector<std::string> features;
  bool signed_log = false;
  double train_fraction = 0.7;
  /// Concurrent replications; 0 leaves the OpenMP default.
  int jobs = 0;
  SolverConfig solver;
};

/// Reads an experiment from key-value settings. Keys: example, n, K (list),
/// reps, seed, alpha, grid (list or lo:hi:step), output, methods, p, rho,
/// csv, response, features, signed_log, train_fraction, jobs, and the
/// solver keys of solver_config_from.
ExperimentSpec parse_experiment_spec(const KeyValueConfig& cfg);

/// Validates reps >= 1, K_list entries in [1, n], known methods, and the
/// per-kind inputs; throws std::invalid_argument otherwise.
void validate(const ExperimentSpec& spec);

/// One line of the output table. Summary rows have rep = -1.
struct ExperimentRecord {
  std::string row_type;
  std::string experiment;
  long rep = -1;
  std::uint64_t seed = 0;
  std::string method;
  Index K = 0;
  std::string quantity;
  double value = 0.0;
  bool converged = true;
  double wall_seconds = 0.0;
};

struct ExperimentResult {
  std::vector<ExperimentRecord> records;
  std::vector<ExperimentRecord> summary;
};

inline constexpr int kExperimentSchemaVersion = 1;

/// Runs the replications concurrently (up to spec.jobs) and reduces them in
/// rep order. Replication i uses derive_seed(base_seed, i). A replication
/// that throws is recorded as an `error` row; K < p becomes an
/// `infeasible` row.
///
/// Summary rows per (method, K, quantity): mean_<q>, sd_<q> and n_<q> over
/// the finite rep values, plus converged_rate. Their wall_seconds is the
/// mean over the group.
ExperimentResult run_experiment(const ExperimentSpec& spec);

/// Recomputes the summary rows from per-replication records.
std::vector<ExperimentRecord> summarize(const std::vector<ExperimentRecord>& records);

/// Long-format CSV: schema_version,row_type,experiment,rep,seed,method,K,
/// quantity,value,converged,wall_seconds. Values are printed with 17
/// significant digits, so reruns differ only in wall_seconds.
void write_experiment_csv(const ExperimentResult& result, std::ostream& out);
void write_experiment_csv(const ExperimentResult& result, const std::string& path);

}  // namespace ssmel

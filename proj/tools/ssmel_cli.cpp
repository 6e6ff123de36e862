// Command-line front end: fit, experiment, scan, distributed.

#include "CLI11.hpp"

#include "ssmel/config.hpp"
#include "ssmel/csv.hpp"
#include "ssmel/distributed.hpp"
#include "ssmel/errors.hpp"
#include "ssmel/experiment.hpp"
#include "ssmel/generators.hpp"
#include "ssmel/inference.hpp"
#include "ssmel/solver.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace ssmel;

namespace {

struct DataOptions {
  std::string model = "normal";
  std::string data_path;
  std::vector<std::string> columns;
  bool intercept = true;
  bool signed_log = false;
  long simulate = 0;
  long p = 4;
  double rho = 0.0;
  std::uint64_t seed = 1;
  std::string config_path;
  long K = 100;
  int jobs = 0;
};

void add_data_options(CLI::App* cmd, DataOptions& o) {
  cmd->add_option("--model", o.model, "normal, bivariate, mean, or regression")->capture_default_str();
  cmd->add_option("--data", o.data_path, "headed CSV file");
  cmd->add_option("--columns", o.columns,
                  "columns to read (regression: response first, then features; default all)")
      ->delimiter(',');
  cmd->add_option("--intercept", o.intercept, "regression: prepend an intercept column")->capture_default_str();
  cmd->add_flag("--signed-log", o.signed_log, "apply sign(x) log|x| to every loaded column");
  cmd->add_option("--simulate", o.simulate, "generate n observations from the model's simulation design instead");
  cmd->add_option("--p", o.p, "regression covariates for --simulate")->capture_default_str();
  cmd->add_option("--rho", o.rho, "regression covariate correlation for --simulate")->capture_default_str();
  cmd->add_option("--seed", o.seed, "split (and simulation) seed")->capture_default_str();
  cmd->add_option("--config", o.config_path, "key = value solver settings");
  cmd->add_option("-k,--k", o.K, "number of blocks K")->capture_default_str();
  cmd->add_option("--jobs", o.jobs, "worker threads (SSMEL_JOBS overrides)");
}

int resolve_jobs(int requested) {
  if (const char* env = std::getenv("SSMEL_JOBS")) {
    try {
      const int v = std::stoi(env);
      if (v >= 1) return v;
    } catch (const std::exception&) {
    }
    throw std::invalid_argument(std::string("SSMEL_JOBS must be a positive integer, got '") + env + "'");
  }
  return requested;
}

void apply_jobs(int jobs) {
#ifdef _OPENMP
  if (jobs > 0) omp_set_num_threads(jobs);
#else
  (void)jobs;
#endif
}

SolverConfig load_solver(const std::string& path) {
  return path.empty() ? SolverConfig{} : solver_config_from(KeyValueConfig::load(path));
}

struct Problem {
  std::unique_ptr<MomentModel> model;
  Dataset data;
  std::optional<ParamVector> truth;
};

Problem load_problem(const DataOptions& o) {
  Problem pr;
  if (o.simulate > 0) {
    SimulatedData sim;
    if (o.model == "normal" || o.model == "mean") {
      sim = gen_normal(o.simulate, o.seed);
    } else if (o.model == "bivariate") {
      sim = gen_bivariate(o.simulate, o.seed);
    } else if (o.model == "regression") {
      sim = gen_regression(o.simulate, o.p, o.rho, o.seed);
    } else {
      throw std::invalid_argument("unknown model '" + o.model + "'");
    }
    pr.data = std::move(sim.data);
    if (o.model != "mean") pr.truth = sim.truth;
    else pr.truth = sim.truth.head(1);
  } else if (!o.data_path.empty()) {
    CsvDataset csv;
    if (o.model == "regression") {
      if (o.columns.empty()) throw std::invalid_argument("regression needs --columns response,feature,...");
      CsvOptions opts;
      opts.signed_log = o.signed_log;
      opts.add_intercept = o.intercept;
      const std::vector<std::string> features(o.columns.begin() + 1, o.columns.end());
      csv = load_csv(o.data_path, o.columns.front(), features, opts);
    } else {
      if (o.columns.empty()) throw std::invalid_argument("--columns is required with --data");
      csv = load_columns(o.data_path, o.columns, o.signed_log);
    }
    if (csv.rows_dropped > 0)
      std::cerr << "dropped " << csv.rows_dropped << " of " << csv.rows_read << " rows with missing values\n";
    pr.data = std::move(csv.data);
  } else {
    throw std::invalid_argument("give --data or --simulate");
  }
  const Index ncoef = o.model == "regression" ? pr.data.dim() - 1 : 0;
  pr.model = make_model(o.model, ncoef);
  return pr;
}

void print_vector(const std::string& key, const Vector& v) {
  for (Index j = 0; j < v.size(); ++j) std::printf("%s_%ld = %.12g\n", key.c_str(), static_cast<long>(j), v[j]);
}

void print_fit(const SsmelFit& fit) {
  print_vector("theta", fit.theta_hat);
  print_vector("lambda", fit.lambda_hat);
  std::printf("log_el = %.12g\nouter_iters = %ld\nconverged = %s\n", fit.log_el, static_cast<long>(fit.outer_iters),
              fit.converged ? "true" : "false");
}

int cmd_fit(const DataOptions& o, const std::string& method, bool covariance) {
  apply_jobs(resolve_jobs(o.jobs));
  const SolverConfig config = load_solver(o.config_path);
  const Problem pr = load_problem(o);
  std::printf("model = %s\nmethod = %s\nn = %ld\n", pr.model->name().c_str(), method.c_str(),
              static_cast<long>(pr.data.size()));
  ParamVector theta;
  if (method == "del") {
    theta = fit_del(*pr.model, pr.data, o.K, config, o.seed);
    std::printf("K = %ld\n", o.K);
    print_vector("theta", theta);
  } else {
    const SsmelFit fit = method == "cel" ? fit_cel(*pr.model, pr.data, config)
                                         : fit_ssmel(*pr.model, pr.data, o.K, config, o.seed);
    std::printf("K = %ld\n", static_cast<long>(fit.split.K));
    print_fit(fit);
    theta = fit.theta_hat;
  }
  if (covariance) {
    const Matrix sigma = estimate_covariance(*pr.model, pr.data, theta);
    for (Index i = 0; i < sigma.rows(); ++i)
      for (Index j = 0; j < sigma.cols(); ++j)
        std::printf("covariance_%ld_%ld = %.12g\n", static_cast<long>(i), static_cast<long>(j), sigma(i, j));
  }
  if (pr.truth) print_vector("truth", *pr.truth);
  return 0;
}

int cmd_experiment(const std::string& spec_path, const std::string& output, int jobs) {
  KeyValueConfig cfg = KeyValueConfig::load(spec_path);
  ExperimentSpec spec = parse_experiment_spec(cfg);
  if (!output.empty()) spec.output_path = output;
  if (spec.output_path.empty()) throw std::invalid_argument("no output path (set 'output' or pass --output)");
  const int resolved = resolve_jobs(jobs > 0 ? jobs : spec.jobs);
  spec.jobs = resolved;
  // Fail on an unwritable path before spending time on replications.
  { std::ofstream probe(spec.output_path); if (!probe) throw std::runtime_error("cannot write '" + spec.output_path + "'"); }
  const ExperimentResult result = run_experiment(spec);
  write_experiment_csv(result, spec.output_path);
  std::printf("experiment = %s\nreps = %ld\nrows = %zu\noutput = %s\n", to_string(spec.kind),
              static_cast<long>(spec.reps), result.records.size() + result.summary.size(), spec.output_path.c_str());
  return 0;
}

int cmd_scan(const DataOptions& o, long param, double level, const std::string& grid_text, const std::string& out) {
  apply_jobs(resolve_jobs(o.jobs));
  const SolverConfig config = load_solver(o.config_path);
  const Problem pr = load_problem(o);
  const std::vector<double> grid = parse_number_list(grid_text);
  const ConfidenceScan scan = confidence_set_scan(*pr.model, pr.data, o.K, param, level, grid, config, o.seed);
  std::printf("estimate = %.12g\nlo = %.12g\nhi = %.12g\nlevel = %g\ncontiguous = %s\n", scan.theta_hat[param],
              scan.interval.lo, scan.interval.hi, level, scan.contiguous ? "true" : "false");
  if (!out.empty()) {
    std::ofstream f(out);
    if (!f) throw std::runtime_error("cannot write '" + out + "'");
    f << "value,statistic,member\n";
    char buf[96];
    for (std::size_t i = 0; i < scan.grid.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%d\n", scan.grid[i], scan.statistic[i], scan.member[i] ? 1 : 0);
      f << buf;
    }
  }
  return 0;
}

int cmd_distributed(const DataOptions& o, const std::string& log_path) {
  apply_jobs(resolve_jobs(o.jobs));
  SolverConfig config = load_solver(o.config_path);
  config.schedule = Schedule::round_stale;
  const Problem pr = load_problem(o);
  require_enough_blocks(o.K, pr.model->param_dim());
  const SplitPlan plan = make_split(pr.data.size(), o.K, o.seed);
  const DistributedRun run = run_distributed(*pr.model, pr.data, plan, config);
  print_fit(run.fit);
  std::printf("rounds = %ld\nmessages_up = %ld\nmessages_down = %ld\npayload_up = %ld\npayload_down = %ld\n",
              static_cast<long>(run.log.rounds), static_cast<long>(run.log.messages_up),
              static_cast<long>(run.log.messages_down), static_cast<long>(run.log.payload_up),
              static_cast<long>(run.log.payload_down));
  if (!log_path.empty()) write_round_log_csv(run.log, log_path);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Split-sample mean empirical likelihood estimation and testing"};
  app.require_subcommand(1);

  DataOptions fit_opts;
  std::string method = "ssmel";
  bool covariance = false;
  auto* fit = app.add_subcommand("fit", "fit one dataset");
  add_data_options(fit, fit_opts);
  fit->add_option("--method", method, "ssmel, cel, or del")
      ->check(CLI::IsMember({"ssmel", "cel", "del"}))
      ->capture_default_str();
  fit->add_flag("--covariance", covariance, "print the sandwich covariance at the estimate");

  std::string spec_path, output;
  int exp_jobs = 0;
  auto* exp = app.add_subcommand("experiment", "run a simulation experiment from a key = value spec");
  exp->add_option("spec", spec_path, "experiment spec file")->required();
  exp->add_option("-o,--output", output, "CSV output (overrides the spec)");
  exp->add_option("--jobs", exp_jobs, "concurrent replications (SSMEL_JOBS overrides)");

  DataOptions scan_opts;
  scan_opts.model = "bivariate";
  long param = 4;
  double level = 0.95;
  std::string grid = "0.40:0.60:0.005", scan_out;
  auto* scan = app.add_subcommand("scan", "confidence set for one coordinate by grid inversion");
  add_data_options(scan, scan_opts);
  scan->add_option("--param", param, "coordinate index")->capture_default_str();
  scan->add_option("--level", level, "coverage level")->capture_default_str();
  scan->add_option("--grid", grid, "values: lo:hi:step or a comma list")->capture_default_str();
  scan->add_option("--out", scan_out, "CSV of value,statistic,member");

  DataOptions dist_opts;
  std::string log_path;
  auto* dist = app.add_subcommand("distributed", "run the coordinator/worker simulation");
  add_data_options(dist, dist_opts);
  dist->add_option("--log", log_path, "round log CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*fit) return cmd_fit(fit_opts, method, covariance);
    if (*exp) return cmd_experiment(spec_path, output, exp_jobs);
    if (*scan) return cmd_scan(scan_opts, param, level, grid, scan_out);
    if (*dist) return cmd_distributed(dist_opts, log_path);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

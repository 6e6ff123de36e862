#include "ssmel/experiment.hpp"

#include "ssmel/csv.hpp"
#include "ssmel/errors.hpp"
#include "ssmel/generators.hpp"
#include "ssmel/inference.hpp"
#include "ssmel/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <tuple>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ssmel {

namespace {

constexpr std::pair<ExperimentKind, const char*> kKindNames[] = {
    {ExperimentKind::normal_mse, "normal_mse"},
    {ExperimentKind::normal_timing, "normal_timing"},
    {ExperimentKind::regression_mse, "regression_mse"},
    {ExperimentKind::bivariate_rejection, "bivariate_rejection"},
    {ExperimentKind::bivariate_power, "bivariate_power"},
    {ExperimentKind::csv_regression, "csv_regression"},
};

const double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string grid_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// Collects the rows of one (rep, method, K) cell.
struct Cell {
  const ExperimentSpec& spec;
  long rep;
  std::uint64_t seed;
  std::string method;
  Index K;
  std::vector<ExperimentRecord>& out;

  void add(const std::string& quantity, double value, bool converged, double wall) const {
    out.push_back({"rep", to_string(spec.kind), rep, seed, method, K, quantity, value, converged, wall});
  }
  void add_theta(const ParamVector& theta, const ParamVector* truth, bool converged, double wall) const {
    double total = 0.0;
    for (Index j = 0; j < theta.size(); ++j) {
      add("theta_" + std::to_string(j), theta[j], converged, wall);
      if (truth) {
        const double se = (theta[j] - (*truth)[j]) * (theta[j] - (*truth)[j]);
        add("sqerr_" + std::to_string(j), se, converged, wall);
        total += se;
      }
    }
    if (truth) add("sqerr_total", total, converged, wall);
  }
};

struct MethodRun {
  std::string label;
  Index K;
};

// The (label, K) cells a method expands to.
std::vector<MethodRun> expand_methods(const ExperimentSpec& spec, Index n) {
  std::vector<MethodRun> runs;
  for (const auto& m : spec.methods) {
    if (m == "cel") {
      runs.push_back({"cel", n});
    } else {
      for (Index K : spec.K_list) runs.push_back({m == "ssmel" && K == n ? "cel" : m, K});
    }
  }
  return runs;
}

// Fits one method; returns theta and convergence. Throws InfeasibleSplitError
// when the split cannot identify the parameters.
std::pair<ParamVector, bool> fit_method(const MomentModel& model, const Dataset& data, const MethodRun& run,
                                        const SolverConfig& config, std::uint64_t split_seed, SplitPolicy policy) {
  if (run.label == "del") {
    if (data.size() / run.K < model.param_dim())
      throw InfeasibleSplitError("subsets too small for p parameters");
    return {fit_del(model, data, run.K, config, split_seed, policy), true};
  }
  const SsmelFit fit = run.K == data.size() ? fit_cel(model, data, config)
                                      : fit_ssmel(model, data, run.K, config, split_seed, std::nullopt, policy);
  return {fit.theta_hat, fit.converged};
}

void run_estimation_rep(const ExperimentSpec& spec, long rep, std::uint64_t seed,
                        std::vector<ExperimentRecord>& out) {
  std::unique_ptr<MomentModel> model;
  SimulatedData sim;
  if (spec.kind == ExperimentKind::regression_mse) {
    sim = gen_regression(spec.n, spec.p, spec.rho, seed);
    model = std::make_unique<RegressionModel>(spec.p + 1);
  } else {
    sim = gen_normal(spec.n, seed);
    model = std::make_unique<NormalModel>();
  }
  for (const auto& run : expand_methods(spec, spec.n)) {
    const Cell cell{spec, rep, seed, run.label, run.K, out};
    const auto start = std::chrono::steady_clock::now();
    try {
      const auto [theta, converged] =
          fit_method(*model, sim.data, run, spec.solver, derive_seed(seed, static_cast<std::uint64_t>(run.K)),
                     SplitPolicy::strict_equal);
      cell.add_theta(theta, &sim.truth, converged, seconds_since(start));
    } catch (const InfeasibleSplitError&) {
      cell.add("infeasible", 1.0, false, 0.0);
    } catch (const std::exception&) {
      cell.add("error", 1.0, false, seconds_since(start));
    }
  }
}

void run_bivariate_rep(const ExperimentSpec& spec, long rep, std::uint64_t seed, std::vector<ExperimentRecord>& out) {
  const SimulatedData sim = gen_bivariate(spec.n, seed);
  const BivariateNormalModel model;
  for (Index K : spec.K_list) {
    const Cell cell{spec, rep, seed, K == spec.n ? "cel" : "ssmel", K, out};
    const auto start = std::chrono::steady_clock::now();
    try {
      const SsmelFit fit = fit_ssmel(model, sim.data, K, spec.solver, derive_seed(seed, static_cast<std::uint64_t>(K)));
      std::vector<std::pair<std::string, Constraint>> tests;
      if (spec.kind == ExperimentKind::bivariate_rejection) {
        tests.emplace_back("H01", full_constraint(sim.truth));
        tests.emplace_back("H02", Constraint{{0, 2}, {0.0, 1.0}});
        tests.emplace_back("H03", Constraint{{4}, {0.5}});
      } else {
        for (double v : spec.grid) tests.emplace_back("rho=" + grid_label(v), Constraint{{4}, {v}});
      }
      std::vector<TestResult> results;
      for (const auto& [name, c] : tests) results.push_back(profile_test(model, sim.data, fit, c, spec.alpha, spec.solver));
      const double wall = seconds_since(start);
      cell.add_theta(fit.theta_hat, &sim.truth, fit.converged, wall);
      const char* reject_name = spec.kind == ExperimentKind::bivariate_rejection ? "reject_" : "exclude_";
      for (std::size_t i = 0; i < tests.size(); ++i) {
        const bool ok = fit.converged && results[i].nuisance_converged;
        cell.add("W_" + tests[i].first, results[i].statistic, ok, wall);
        cell.add(reject_name + tests[i].first, results[i].reject ? 1.0 : 0.0, ok, wall);
      }
    } catch (const InfeasibleSplitError&) {
      cell.add("infeasible", 1.0, false, 0.0);
    } catch (const std::exception&) {
      cell.add("error", 1.0, false, seconds_since(start));
    }
  }
}

void run_csv_rep(const ExperimentSpec& spec, const Dataset& all, long rep, std::uint64_t seed,
                 std::vector<ExperimentRecord>& out) {
  const Index n = all.size();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng(seed);
  for (Index i = n - 1; i > 0; --i)
    std::swap(order[static_cast<std::size_t>(i)], order[rng.bounded(static_cast<std::uint64_t>(i + 1))]);
  const auto n_train = static_cast<Index>(std::floor(spec.train_fraction * static_cast<double>(n)));
  if (n_train < 1 || n_train >= n) throw std::invalid_argument("train_fraction leaves an empty train or test set");

  Dataset train, test;
  train.rows.resize(n_train, all.dim());
  test.rows.resize(n - n_train, all.dim());
  for (Index i = 0; i < n; ++i) {
    if (i < n_train)
      train.rows.row(i) = all.rows.row(order[static_cast<std::size_t>(i)]);
    else
      test.rows.row(i - n_train) = all.rows.row(order[static_cast<std::size_t>(i)]);
  }
  const RegressionModel model(all.dim() - 1);

  for (const auto& run : expand_methods(spec, n_train)) {
    const Cell cell{spec, rep, seed, run.label, run.K, out};
    const auto start = std::chrono::steady_clock::now();
    try {
      const auto [theta, converged] = fit_method(model, train, run, spec.solver,
                                                 derive_seed(seed, static_cast<std::uint64_t>(run.K)), SplitPolicy::trim);
      const Vector resid = test.rows.col(0) - test.rows.rightCols(theta.size()) * theta;
      const double wall = seconds_since(start);
      cell.add_theta(theta, nullptr, converged, wall);
      cell.add("mspe", resid.squaredNorm() / static_cast<double>(resid.size()), converged, wall);
    } catch (const InfeasibleSplitError&) {
      cell.add("infeasible", 1.0, false, 0.0);
    } catch (const std::exception&) {
      cell.add("error", 1.0, false, seconds_since(start));
    }
  }
}

}  // namespace

ExperimentKind parse_experiment_kind(const std::string& name) {
  for (const auto& [kind, label] : kKindNames)
    if (name == label) return kind;
  throw std::invalid_argument("unknown experiment '" + name + "'");
}

const char* to_string(ExperimentKind kind) {
  for (const auto& [k, label] : kKindNames)
    if (k == kind) return label;
  return "unknown";
}

ExperimentSpec parse_experiment_spec(const KeyValueConfig& cfg) {
  ExperimentSpec spec;
  spec.kind = parse_experiment_kind(cfg.get_string("example", ""));
  spec.n = cfg.get_int("n", spec.n);
  for (double k : cfg.get_doubles("K")) {
    if (k != std::floor(k)) throw std::invalid_argument("K values must be integers");
    spec.K_list.push_back(static_cast<Index>(k));
  }
  spec.reps = cfg.get_int("reps", spec.reps);
  spec.base_seed = static_cast<std::uint64_t>(cfg.get_int("seed", static_cast<long>(spec.base_seed)));
  spec.alpha = cfg.get_double("alpha", spec.alpha);
  spec.grid = cfg.get_doubles("grid");
  spec.output_path = cfg.get_string("output", "");
  if (cfg.has("methods")) spec.methods = cfg.get_strings("methods");
  spec.p = cfg.get_int("p", spec.p);
  spec.rho = cfg.get_double("rho", spec.rho);
  spec.csv_path = cfg.get_string("csv", "");
  spec.response = cfg.get_string("response", "");
  spec.features = cfg.get_strings("features");
  spec.signed_log = cfg.get_bool("signed_log", spec.signed_log);
  spec.train_fraction = cfg.get_double("train_fraction", spec.train_fraction);
  spec.jobs = static_cast<int>(cfg.get_int("jobs", spec.jobs));
  spec.solver = solver_config_from(cfg);
  if (spec.kind == ExperimentKind::bivariate_power && spec.grid.empty())
    spec.grid = parse_number_list("0.46:0.54:0.01");
  if (spec.K_list.empty()) spec.K_list.push_back(100);
  return spec;
}

void validate(const ExperimentSpec& spec) {
  if (spec.reps < 1) throw std::invalid_argument("reps must be at least 1");
  if (!(spec.alpha > 0.0 && spec.alpha < 1.0)) throw std::invalid_argument("alpha must be in (0, 1)");
  if (spec.methods.empty()) throw std::invalid_argument("no methods selected");
  for (const auto& m : spec.methods)
    if (m != "ssmel" && m != "del" && m != "cel") throw std::invalid_argument("unknown method '" + m + "'");
  if (spec.K_list.empty()) throw std::invalid_argument("K list is empty");
  for (Index K : spec.K_list) {
    if (K < 1) throw std::invalid_argument("K must be positive");
    if (spec.kind != ExperimentKind::csv_regression && K > spec.n)
      throw std::invalid_argument("K=" + std::to_string(K) + " exceeds n=" + std::to_string(spec.n));
  }
  if (spec.kind != ExperimentKind::csv_regression && spec.n < 1) throw std::invalid_argument("n must be positive");
  if (spec.kind == ExperimentKind::regression_mse && (spec.p < 1 || !(spec.rho >= 0.0 && spec.rho < 1.0)))
    throw std::invalid_argument("regression needs p >= 1 and 0 <= rho < 1");
  if (spec.kind == ExperimentKind::bivariate_power && spec.grid.empty())
    throw std::invalid_argument("bivariate_power needs a grid");
  if (spec.kind == ExperimentKind::csv_regression) {
    if (spec.csv_path.empty() || spec.response.empty())
      throw std::invalid_argument("csv_regression needs csv and response");
    if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
      throw std::invalid_argument("train_fraction must be in (0, 1)");
  }
  if (spec.jobs < 0) throw std::invalid_argument("jobs must be non-negative");
}

ExperimentResult run_experiment(const ExperimentSpec& spec) {
  validate(spec);
  Dataset csv_data;
  if (spec.kind == ExperimentKind::csv_regression) {
    CsvOptions opts;
    opts.signed_log = spec.signed_log;
    csv_data = load_csv(spec.csv_path, spec.response, spec.features, opts).data;
  }

  const long reps = static_cast<long>(spec.reps);
  std::vector<std::vector<ExperimentRecord>> per_rep(static_cast<std::size_t>(reps));
#ifdef _OPENMP
  const int threads = spec.jobs > 0 ? spec.jobs : omp_get_max_threads();
#endif
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (long rep = 0; rep < reps; ++rep) {
    const std::uint64_t seed = derive_seed(spec.base_seed, static_cast<std::uint64_t>(rep));
    auto& out = per_rep[static_cast<std::size_t>(rep)];
    try {
      switch (spec.kind) {
        case ExperimentKind::normal_mse:
        case ExperimentKind::normal_timing:
        case ExperimentKind::regression_mse:
          run_estimation_rep(spec, rep, seed, out);
          break;
        case ExperimentKind::bivariate_rejection:
        case ExperimentKind::bivariate_power:
          run_bivariate_rep(spec, rep, seed, out);
          break;
        case ExperimentKind::csv_regression:
          run_csv_rep(spec, csv_data, rep, seed, out);
          break;
      }
    } catch (const std::exception&) {
      out.push_back({"rep", to_string(spec.kind), rep, seed, "", 0, "error", 1.0, false, 0.0});
    }
  }

  ExperimentResult result;
  for (auto& rows : per_rep)
    for (auto& r : rows) result.records.push_back(std::move(r));
  result.summary = summarize(result.records);
  return result;
}

std::vector<ExperimentRecord> summarize(const std::vector<ExperimentRecord>& records) {
  struct Acc {
    std::string experiment;
    double sum = 0.0, sum_sq = 0.0, wall = 0.0;
    long finite = 0, total = 0, converged = 0;
  };
  using Key = std::tuple<std::string, Index, std::string>;
  std::vector<Key> order;
  std::map<Key, Acc> acc;
  for (const auto& r : records) {
    const Key key{r.method, r.K, r.quantity};
    auto [it, inserted] = acc.try_emplace(key);
    if (inserted) {
      order.push_back(key);
      it->second.experiment = r.experiment;
    }
    Acc& a = it->second;
    ++a.total;
    a.wall += r.wall_seconds;
    if (r.converged) ++a.converged;
    if (std::isfinite(r.value)) {
      ++a.finite;
      a.sum += r.value;
    }
  }
  // Second pass for the spread, around the finished mean.
  for (const auto& r : records) {
    Acc& a = acc[{r.method, r.K, r.quantity}];
    if (std::isfinite(r.value)) {
      const double d = r.value - a.sum / static_cast<double>(a.finite);
      a.sum_sq += d * d;
    }
  }

  std::vector<ExperimentRecord> out;
  for (const auto& key : order) {
    const Acc& a = acc[key];
    const auto& [method, K, quantity] = key;
    const double mean = a.finite > 0 ? a.sum / static_cast<double>(a.finite) : kNaN;
    const double sd = a.finite > 1 ? std::sqrt(a.sum_sq / static_cast<double>(a.finite - 1)) : kNaN;
    const double wall = a.wall / static_cast<double>(a.total);
    const bool all_converged = a.converged == a.total;
    auto push = [&](const std::string& q, double v) {
      out.push_back({"summary", a.experiment, -1, 0, method, K, q, v, all_converged, wall});
    };
    push("mean_" + quantity, mean);
    push("sd_" + quantity, sd);
    push("n_" + quantity, static_cast<double>(a.finite));
    push("converged_rate_" + quantity, static_cast<double>(a.converged) / static_cast<double>(a.total));
  }
  return out;
}

void write_experiment_csv(const ExperimentResult& result, std::ostream& out) {
  out << "schema_version,row_type,experiment,rep,seed,method,K,quantity,value,converged,wall_seconds\n";
  auto write = [&](const ExperimentRecord& r) {
    out << kExperimentSchemaVersion << ',' << r.row_type << ',' << r.experiment << ',';
    if (r.rep >= 0) out << r.rep;
    out << ',';
    if (r.rep >= 0) out << r.seed;
    out << ',' << r.method << ',' << r.K << ',' << r.quantity << ',' << format_number(r.value) << ','
        << (r.converged ? 1 : 0) << ',' << format_number(r.wall_seconds) << '\n';
  };
  for (const auto& r : result.records) write(r);
  for (const auto& r : result.summary) write(r);
}

void write_experiment_csv(const ExperimentResult& result, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write experiment output to '" + path + "'");
  write_experiment_csv(result, out);
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

}  // namespace ssmel

#include "doctest.h"
#include "oracles.hpp"

#include "ssmel/config.hpp"
#include "ssmel/csv.hpp"
#include "ssmel/experiment.hpp"
#include "ssmel/generators.hpp"
#include "ssmel/rng.hpp"

#include <cmath>
#include <map>
#include <sstream>
#include <string>

using namespace ssmel;

namespace {

std::string fixture(const std::string& name) { return std::string(SSMEL_TEST_DATA) + "/" + name; }

// CSV text with the wall_seconds column removed.
std::string without_wall(const ExperimentResult& r) {
  std::ostringstream os;
  write_experiment_csv(r, os);
  std::istringstream is(os.str());
  std::string line, out;
  while (std::getline(is, line)) out += line.substr(0, line.rfind(',')) + "\n";
  return out;
}

}  // namespace

TEST_CASE("generators are deterministic and match their designs") {
  const auto a = gen_normal(50000, 3), b = gen_normal(50000, 3), c = gen_normal(50000, 4);
  CHECK(a.data.rows == b.data.rows);
  CHECK(a.truth == b.truth);
  CHECK(a.data.rows != c.data.rows);
  const double mu = a.truth[0], sigma = a.truth[1];
  CHECK(mu >= -2.0);
  CHECK(mu < 2.0);
  CHECK(sigma >= 0.5);
  CHECK(sigma < 2.0);
  const auto x = a.data.rows.col(0).array();
  const double mean = x.mean();
  const double sd = std::sqrt((x - mean).square().sum() / (x.size() - 1));
  CHECK(std::abs(mean - mu) < 5.0 * sigma / std::sqrt(50000.0));
  CHECK(std::abs(sd / sigma - 1.0) < 0.02);
  const double skew = ((x - mean) / sd).cube().mean();
  CHECK(std::abs(skew) < 5.0 * std::sqrt(6.0 / 50000.0));

  const auto biv = gen_bivariate(50000, 8);
  CHECK(biv.truth == (ParamVector(5) << 0, 0, 1, 1, 0.5).finished());
  const auto xs = biv.data.rows.col(0).array(), ys = biv.data.rows.col(1).array();
  const double corr = ((xs - xs.mean()) * (ys - ys.mean())).mean() /
                      std::sqrt((xs - xs.mean()).square().mean() * (ys - ys.mean()).square().mean());
  CHECK(std::abs(corr - 0.5) < 0.02);

  const auto reg = gen_regression(20000, 6, 0.5, 2);
  CHECK(reg.truth == (ParamVector(7) << 1, 5, 4, 3, 2, 1, 1).finished());
  CHECK(reg.data.dim() == 8);
  CHECK((reg.data.rows.col(1).array() == 1.0).all());
  const auto x1 = reg.data.rows.col(2).array(), x2 = reg.data.rows.col(3).array();
  CHECK(std::abs((x1 * x2).mean() - 0.5) < 0.05);
  const auto small = gen_regression(10, 2, 0.0, 1);
  CHECK(small.truth.size() == 3);
  CHECK_THROWS_AS(gen_regression(10, 2, 1.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(gen_regression(10, 0, 0.0, 1), std::invalid_argument);
}

TEST_CASE("CSV loading") {
  CHECK(signed_log(std::exp(2.0)) == doctest::Approx(2.0));
  CHECK(signed_log(-std::exp(1.0)) == doctest::Approx(-1.0));
  CHECK(signed_log(0.0) == 0.0);

  const auto split = split_csv_line("1,\"a, b\",3");
  REQUIRE(split.size() == 3);
  CHECK(split[1] == "a, b");

  const CsvDataset reg = load_csv(fixture("small_regression.csv"), "y", {"x1", "x2"});
  CHECK(reg.data.size() == 60);
  CHECK(reg.data.dim() == 4);
  CHECK((reg.data.rows.col(1).array() == 1.0).all());
  CHECK(reg.columns.front() == "y");

  const CsvDataset miss = load_csv(fixture("missing.csv"), "y", {}, {});
  CHECK(miss.rows_read == 3);
  CHECK(miss.rows_dropped == 1);
  CHECK(miss.data.size() == 2);
  CHECK(miss.data.rows(1, 0) == -2.0);
  CHECK(miss.data.rows(1, 3) == 4.0);

  CsvOptions logged;
  logged.signed_log = true;
  logged.add_intercept = false;
  const CsvDataset lg = load_csv(fixture("missing.csv"), "y", {"x2"}, logged);
  CHECK(lg.data.dim() == 2);
  CHECK(lg.data.rows(0, 1) == doctest::Approx(-std::log(3.0)));

  const CsvDataset cols = load_columns(fixture("missing.csv"), {"x2", "x1"});
  CHECK(cols.data.rows(0, 0) == -3.0);
  CHECK(cols.data.size() == 3);

  try {
    load_csv(fixture("malformed.csv"), "y", {"x1"});
    FAIL("expected a parse error");
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("abc") != std::string::npos);
    CHECK(msg.find("x1") != std::string::npos);
  }
  CHECK_THROWS_AS(load_csv(fixture("small_regression.csv"), "y", {"x9"}), std::runtime_error);
  CHECK_THROWS_AS(load_csv(fixture("absent.csv"), "y", {}), std::runtime_error);
}

TEST_CASE("key-value configuration") {
  const auto cfg = KeyValueConfig::parse(
      "# comment\n gamma = 1e-6 \nmax_outer=12\nschedule = fresh\ntrace = true\nK = 10, 20\ngrid = 0.1:0.3:0.1\n"
      "gamma = 2e-6\n");
  CHECK(cfg.get_double("gamma", 0) == 2e-6);
  CHECK(cfg.get_int("max_outer", 0) == 12);
  CHECK(cfg.get_bool("trace", false));
  CHECK(cfg.get_string("missing", "dflt") == "dflt");
  CHECK(cfg.get_doubles("K") == std::vector<double>{10, 20});
  const auto grid = cfg.get_doubles("grid");
  REQUIRE(grid.size() == 3);
  CHECK(grid[2] == doctest::Approx(0.3));
  const SolverConfig s = solver_config_from(cfg);
  CHECK(s.gamma == 2e-6);
  CHECK(s.max_outer == 12);
  CHECK(s.schedule == Schedule::fresh);
  CHECK(s.record_trace);
  CHECK(parse_schedule(to_string(Schedule::round_stale)) == Schedule::round_stale);
  CHECK_THROWS_AS(parse_schedule("eager"), std::invalid_argument);
  CHECK_THROWS(KeyValueConfig::parse("no equals sign here\n"));
  CHECK_THROWS(KeyValueConfig::parse("n = twelve\n").get_int("n", 0));
  CHECK_THROWS(KeyValueConfig::load("/nonexistent/spec.cfg"));

  const auto spec = parse_experiment_spec(KeyValueConfig::parse("example = bivariate_power\nn = 100\n"));
  CHECK(spec.kind == ExperimentKind::bivariate_power);
  CHECK(spec.grid.size() == 9);
  CHECK(spec.K_list == std::vector<Index>{100});
  CHECK_THROWS_AS(parse_experiment_spec(KeyValueConfig::parse("example = bogus_kind\n")), std::invalid_argument);
}

TEST_CASE("experiment specs are validated") {
  ExperimentSpec spec;
  spec.K_list = {10};
  spec.n = 100;
  CHECK_NOTHROW(validate(spec));
  spec.reps = 0;
  CHECK_THROWS_AS(validate(spec), std::invalid_argument);
  spec.reps = 1;
  spec.K_list = {200};
  CHECK_THROWS_AS(validate(spec), std::invalid_argument);
  spec.K_list = {10};
  spec.methods = {"ssel"};
  CHECK_THROWS_AS(validate(spec), std::invalid_argument);
}

TEST_CASE("single-replication CEL experiment") {
  ExperimentSpec spec;
  spec.n = 200;
  spec.K_list = {200};
  spec.reps = 1;
  spec.base_seed = 5;
  const ExperimentResult r = run_experiment(spec);
  std::map<std::string, double> q;
  for (const auto& rec : r.records) {
    CHECK(rec.method == "cel");
    CHECK(rec.K == 200);
    q[rec.quantity] = rec.value;
  }
  const auto sim = gen_normal(200, derive_seed(5, 0));
  const SsmelFit cel = fit_cel(NormalModel{}, sim.data, {});
  CHECK(q["theta_0"] == cel.theta_hat[0]);
  CHECK(q["theta_1"] == cel.theta_hat[1]);
  CHECK(q["sqerr_total"] == doctest::Approx(q["sqerr_0"] + q["sqerr_1"]));
}

TEST_CASE("experiments are deterministic and independent of the job count") {
  ExperimentSpec spec;
  spec.n = 400;
  spec.K_list = {10, 40};
  spec.reps = 5;
  spec.methods = {"ssmel", "del", "cel"};
  spec.jobs = 1;
  const ExperimentResult a = run_experiment(spec);
  const ExperimentResult b = run_experiment(spec);
  spec.jobs = 3;
  const ExperimentResult c = run_experiment(spec);
  CHECK(without_wall(a) == without_wall(b));
  CHECK(without_wall(a) == without_wall(c));

  // Header and schema.
  std::ostringstream os;
  write_experiment_csv(a, os);
  CHECK(os.str().rfind("schema_version,row_type,experiment,rep,seed,method,K,quantity,value,converged,wall_seconds\n",
                       0) == 0);

  // Aggregation recomputed from the rep rows.
  std::map<std::tuple<std::string, Index, std::string>, std::vector<double>> groups;
  for (const auto& rec : a.records) groups[{rec.method, rec.K, rec.quantity}].push_back(rec.value);
  for (const auto& s : a.summary) {
    if (s.quantity.rfind("mean_", 0) != 0) continue;
    const auto& v = groups.at({s.method, s.K, s.quantity.substr(5)});
    double sum = 0.0;
    for (double x : v) sum += x;
    CHECK(s.value == doctest::Approx(sum / v.size()).epsilon(1e-12));
  }
  for (const auto& s : a.summary) {
    if (s.quantity.rfind("sd_", 0) != 0) continue;
    const auto& v = groups.at({s.method, s.K, s.quantity.substr(3)});
    if (v.size() < 2) continue;
    double mean = 0.0, ss = 0.0;
    for (double x : v) mean += x / v.size();
    for (double x : v) ss += (x - mean) * (x - mean);
    CHECK(s.value == doctest::Approx(std::sqrt(ss / (v.size() - 1))).epsilon(1e-10).scale(1e-300));
  }
}

TEST_CASE("infeasible splits are recorded, not fatal") {
  ExperimentSpec spec;
  spec.kind = ExperimentKind::regression_mse;
  spec.n = 200;
  spec.p = 18;
  spec.K_list = {10};
  spec.reps = 2;
  const ExperimentResult r = run_experiment(spec);
  REQUIRE(r.records.size() == 2);
  for (const auto& rec : r.records) {
    CHECK(rec.quantity == "infeasible");
    CHECK_FALSE(rec.converged);
  }
}

TEST_CASE("bivariate experiment rows") {
  ExperimentSpec spec;
  spec.kind = ExperimentKind::bivariate_rejection;
  spec.n = 500;
  spec.K_list = {25};
  spec.reps = 2;
  const ExperimentResult r = run_experiment(spec);
  int w = 0, rej = 0;
  for (const auto& rec : r.records) {
    if (rec.quantity.rfind("W_H0", 0) == 0) {
      ++w;
      CHECK(rec.value >= 0.0);
    }
    if (rec.quantity.rfind("reject_H0", 0) == 0) {
      ++rej;
      CHECK((rec.value == 0.0 || rec.value == 1.0));
    }
  }
  CHECK(w == 6);
  CHECK(rej == 6);
}

TEST_CASE("CSV regression experiment") {
  ExperimentSpec spec;
  spec.kind = ExperimentKind::csv_regression;
  spec.csv_path = fixture("small_regression.csv");
  spec.response = "y";
  spec.features = {"x1", "x2"};
  spec.K_list = {6, 42};
  spec.reps = 2;
  const ExperimentResult r = run_experiment(spec);
  int mspe = 0;
  for (const auto& rec : r.records) {
    CHECK(rec.quantity != "error");
    if (rec.quantity == "mspe") {
      ++mspe;
      CHECK(rec.value > 0.05);
      CHECK(rec.value < 1.0);
    }
    if (rec.quantity == "theta_1") CHECK(rec.value == doctest::Approx(2.0).epsilon(0.15));
  }
  CHECK(mspe == 4);
}

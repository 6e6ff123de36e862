#pragma once

#include "ssmel/solver.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ssmel {

/// Plain-text `key = value` file. '#' starts a comment; blank lines are
/// ignored; later keys override earlier ones.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text, const std::string& origin = "<string>");
  static KeyValueConfig load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long get_int(const std::string& key, long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  /// Comma-separated numbers, or lo:hi:step for an inclusive range.
  std::vector<double> get_doubles(const std::string& key) const;
  std::vector<std::string> get_strings(const std::string& key) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::string require(const std::string& key) const;

  std::map<std::string, std::string> values_;
  std::string origin_;
};

/// Reads the solver keys (gamma, max_outer, schedule, epsilon,
/// outer_max_halvings, inner_tol, inner_max_iter, inner_max_halvings,
/// lambda_cap, trace) on top of `base`.
SolverConfig solver_config_from(const KeyValueConfig& cfg, SolverConfig base = {});

Schedule parse_schedule(const std::string& name);
const char* to_string(Schedule schedule);

/// Parses "1, 2, 3" or "0.46:0.54:0.01" (inclusive, tolerant to rounding).
std::vector<double> parse_number_list(const std::string& text);

}  // namespace ssmel

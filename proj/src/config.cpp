#include "ssmel/config.hpp"

#include "ssmel/csv.hpp"

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ssmel {

namespace {

std::string strip(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& text, const std::string& what) {
  const std::string s = strip(text);
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE)
    throw std::invalid_argument(what + ": '" + text + "' is not a number");
  return v;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text, const std::string& origin) {
  KeyValueConfig cfg;
  cfg.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = strip(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key = strip(line.substr(0, eq));
    if (key.empty()) throw std::invalid_argument(origin + ":" + std::to_string(line_no) + ": empty key");
    cfg.values_[key] = strip(line.substr(eq + 1));
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

std::string KeyValueConfig::require(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw std::invalid_argument(origin_ + ": missing key '" + key + "'");
  return it->second;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  return has(key) ? require(key) : fallback;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  return has(key) ? to_double(require(key), origin_ + ": key '" + key + "'") : fallback;
}

long KeyValueConfig::get_int(const std::string& key, long fallback) const {
  if (!has(key)) return fallback;
  const double v = to_double(require(key), origin_ + ": key '" + key + "'");
  if (v != std::floor(v)) throw std::invalid_argument(origin_ + ": key '" + key + "' must be an integer");
  return static_cast<long>(v);
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string v = require(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument(origin_ + ": key '" + key + "' must be a boolean");
}

std::vector<double> KeyValueConfig::get_doubles(const std::string& key) const {
  return has(key) ? parse_number_list(require(key)) : std::vector<double>{};
}

std::vector<std::string> KeyValueConfig::get_strings(const std::string& key) const {
  std::vector<std::string> out;
  if (!has(key)) return out;
  for (auto& s : split_csv_line(require(key)))
    if (!s.empty()) out.push_back(s);
  return out;
}

std::vector<double> parse_number_list(const std::string& text) {
  const std::string s = strip(text);
  std::vector<double> out;
  if (s.empty()) return out;
  if (s.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(s);
    std::string part;
    while (std::getline(ss, part, ':')) parts.push_back(part);
    if (parts.size() != 3) throw std::invalid_argument("range '" + s + "' must be lo:hi:step");
    const double lo = to_double(parts[0], "range"), hi = to_double(parts[1], "range"),
                 step = to_double(parts[2], "range");
    if (!(step > 0.0) || hi < lo) throw std::invalid_argument("range '" + s + "' is empty or has a bad step");
    const auto count = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
    for (long i = 0; i <= count; ++i) out.push_back(lo + static_cast<double>(i) * step);
    return out;
  }
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!strip(item).empty()) out.push_back(to_double(item, "number list"));
  return out;
}

Schedule parse_schedule(const std::string& name) {
  if (name == "round_stale") return Schedule::round_stale;
  if (name == "fresh") return Schedule::fresh;
  throw std::invalid_argument("unknown schedule '" + name + "' (round_stale or fresh)");
}

const char* to_string(Schedule schedule) { return schedule == Schedule::fresh ? "fresh" : "round_stale"; }

SolverConfig solver_config_from(const KeyValueConfig& cfg, SolverConfig base) {
  base.gamma = cfg.get_double("gamma", base.gamma);
  base.max_outer = static_cast<int>(cfg.get_int("max_outer", base.max_outer));
  base.outer_max_halvings = static_cast<int>(cfg.get_int("outer_max_halvings", base.outer_max_halvings));
  if (cfg.has("schedule")) base.schedule = parse_schedule(cfg.get_string("schedule", ""));
  if (cfg.has("epsilon")) base.epsilon = cfg.get_double("epsilon", 0.0);
  base.record_trace = cfg.get_bool("trace", base.record_trace);
  base.inner.tol = cfg.get_double("inner_tol", base.inner.tol);
  base.inner.max_iter = static_cast<int>(cfg.get_int("inner_max_iter", base.inner.max_iter));
  base.inner.max_halvings = static_cast<int>(cfg.get_int("inner_max_halvings", base.inner.max_halvings));
  base.inner.lambda_cap = cfg.get_double("lambda_cap", base.inner.lambda_cap);
  if (!(base.gamma > 0.0)) throw std::invalid_argument("gamma must be positive");
  if (base.max_outer < 1) throw std::invalid_argument("max_outer must be at least 1");
  if (!(base.inner.tol > 0.0) || base.inner.max_iter < 1 || base.inner.max_halvings < 1 ||
      !(base.inner.lambda_cap > 0.0))
    throw std::invalid_argument("inner solver settings must be positive");
  if (base.epsilon && !(*base.epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  return base;
}

}  // namespace ssmel

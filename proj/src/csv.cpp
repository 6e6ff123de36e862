#include "ssmel/csv.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <stdexcept>

namespace ssmel {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

bool is_missing(const std::string& field) {
  std::string lower;
  for (char c : field) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return lower.empty() || lower == "na" || lower == "nan" || lower == "null";
}

}  // namespace

double signed_log(double x) {
  if (x == 0.0) return 0.0;
  return std::copysign(std::log(std::abs(x)), x);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(trim(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(trim(cur));
  return fields;
}

namespace {

std::vector<std::string> read_header(std::ifstream& in, const std::string& path) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("'" + path + "' is empty");
  return split_csv_line(line);
}

CsvDataset read_selected(std::ifstream& in, const std::string& path, const std::vector<std::string>& header,
                         const std::vector<std::string>& names, bool apply_signed_log) {
  std::vector<std::size_t> selected;
  for (const auto& name : names) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw std::runtime_error("column '" + name + "' not found in '" + path + "'");
    selected.push_back(static_cast<std::size_t>(it - header.begin()));
  }

  CsvDataset out;
  out.columns = names;
  std::vector<double> values;
  std::string line;
  long line_no = 1;
  Index kept = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    ++out.rows_read;
    const auto fields = split_csv_line(line);
    const std::size_t mark = values.size();
    bool missing = false;
    for (std::size_t s = 0; s < selected.size(); ++s) {
      const std::size_t c = selected[s];
      const std::string field = c < fields.size() ? fields[c] : std::string();
      if (is_missing(field)) {
        missing = true;
        break;
      }
      errno = 0;
      char* end = nullptr;
      const double v = std::strtod(field.c_str(), &end);
      if (end != field.c_str() + field.size() || errno == ERANGE || !std::isfinite(v))
        throw std::runtime_error("'" + path + "' line " + std::to_string(line_no) + ", column '" + names[s] +
                                 "': malformed number '" + field + "'");
      values.push_back(apply_signed_log ? signed_log(v) : v);
    }
    if (missing) {
      values.resize(mark);
      ++out.rows_dropped;
      continue;
    }
    ++kept;
  }
  if (kept == 0) throw std::runtime_error("no usable rows in '" + path + "'");
  out.data.rows = Eigen::Map<const RowMatrix>(values.data(), kept, static_cast<Index>(names.size()));
  return out;
}

}  // namespace

CsvDataset load_columns(const std::string& path, const std::vector<std::string>& columns, bool apply_signed_log) {
  if (columns.empty()) throw std::invalid_argument("no columns selected");
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  const auto header = read_header(in, path);
  return read_selected(in, path, header, columns, apply_signed_log);
}

CsvDataset load_csv(const std::string& path, const std::string& response_column,
                    const std::vector<std::string>& feature_columns, const CsvOptions& options) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  const auto header = read_header(in, path);
  std::vector<std::string> names{response_column};
  if (feature_columns.empty()) {
    for (const auto& h : header)
      if (h != response_column) names.push_back(h);
  } else {
    names.insert(names.end(), feature_columns.begin(), feature_columns.end());
  }
  CsvDataset out = read_selected(in, path, header, names, options.signed_log);
  if (options.add_intercept) {
    const Index n = out.data.size();
    RowMatrix rows(n, out.data.dim() + 1);
    rows.col(0) = out.data.rows.col(0);
    rows.col(1).setOnes();
    rows.rightCols(out.data.dim() - 1) = out.data.rows.rightCols(out.data.dim() - 1);
    out.data.rows = std::move(rows);
    out.columns.insert(out.columns.begin() + 1, "(intercept)");
  }
  return out;
}

}  // namespace ssmel

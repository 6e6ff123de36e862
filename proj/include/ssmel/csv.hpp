#pragma once

#include "ssmel/moment_model.hpp"

#include <string>
#include <vector>

namespace ssmel {

/// sign(x) log|x|, with 0 mapped to 0.
double signed_log(double x);

struct CsvOptions {
  /// Apply signed_log to the response and every feature.
  bool signed_log = false;
  /// Insert a column of ones in front of the features.
  bool add_intercept = true;
};

struct CsvDataset {
  /// (y, [1,] features...), the layout RegressionModel expects.
  Dataset data;
  std::vector<std::string> columns;
  Index rows_read = 0;
  /// Rows with an empty / NA / NaN field in a selected column.
  Index rows_dropped = 0;
};

/// Loads a headed CSV. Only the selected columns are parsed; an empty
/// feature list selects every column except the response.
///
/// Throws std::runtime_error when the file cannot be read, a selected
/// column is absent, a field is not a number (row and column in the
/// message), or no rows survive the filtering.
CsvDataset load_csv(const std::string& path, const std::string& response_column,
                    const std::vector<std::string>& feature_columns, const CsvOptions& options = {});

/// Loads exactly `columns` (in that order) from a headed CSV, with the same
/// missing-value and error handling as load_csv.
CsvDataset load_columns(const std::string& path, const std::vector<std::string>& columns, bool apply_signed_log = false);

/// Splits a line on commas, honouring double quotes.
std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace ssmel

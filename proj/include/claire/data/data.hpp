#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "claire/numerics/matrix.hpp"
#include "claire/scm/dataset.hpp"

namespace claire::data {

enum class ColumnType {
  continuous,
  categorical,  // one-hot, one column per category ("name=value")
  binary        // single 0/1 column: 1 when the cell is in `positive`
};

struct FeatureSpec {
  std::string name;
  ColumnType type = ColumnType::continuous;
  std::vector<std::string> categories;  // categorical; discovered (sorted) when empty
  std::vector<std::string> positive;    // binary
};

struct Schema {
  std::vector<FeatureSpec> features;
  std::string sensitive;
  std::vector<std::string> sensitive_values;  // index = encoded sensitive value
  std::string target;
  Task task = Task::regression;
  std::vector<std::string> positive_labels;  // classification with text labels
  // Column names for header-less files; empty means the first line is a header.
  std::vector<std::string> columns;

  void validate() const;
  static Schema from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct LoadReport {
  std::size_t rows_read = 0;
  std::size_t rows_kept = 0;
  std::size_t dropped_sensitive = 0;    // sensitive value outside the allowed set
  std::size_t dropped_missing = 0;      // empty or "?" in a used column
  std::size_t skipped_unparseable = 0;  // numeric cell that does not parse

  nlohmann::json to_json() const;
};

struct LoadResult {
  Dataset data;
  LoadReport report;
  std::vector<std::size_t> continuous_columns;
};

LoadResult load_csv(const std::string& path, const Schema& schema);
LoadResult parse_csv(std::istream& in, const Schema& schema);

// Train-fitted z-scoring of selected columns.
struct Scaler {
  std::vector<std::size_t> columns;
  std::vector<double> mean;
  std::vector<double> scale;  // 1 for zero-variance columns
  std::vector<std::string> warnings;

  Matrix transform(const Matrix& x) const;
  Matrix inverse(const Matrix& x) const;
  nlohmann::json to_json() const;
  static Scaler from_json(const nlohmann::json& j);
};

Scaler fit_scaler(const Matrix& x, std::span<const std::size_t> fit_rows, std::span<const std::size_t> columns);

struct Standardized {
  Dataset data;
  Scaler scaler;
};

Standardized standardize(const Dataset& d, std::span<const std::size_t> fit_rows,
                         std::span<const std::size_t> columns);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

// Seeded shuffle, then cuts at floor(0.6 n) and floor(0.8 n).
SplitIndices split(std::size_t n, std::uint64_t seed);

std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace claire::data

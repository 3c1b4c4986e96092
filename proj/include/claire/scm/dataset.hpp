#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "claire/numerics/matrix.hpp"

namespace claire {

enum class Task { regression, classification };

// Column-oriented table: features X, sensitive value s, target y.
struct Dataset {
  std::vector<std::string> feature_names;
  Matrix x;
  std::vector<std::size_t> s;
  std::vector<double> y;
  std::size_t num_sensitive = 0;
  Task task = Task::regression;

  std::size_t size() const { return y.size(); }
  std::size_t dim() const { return x.cols(); }

  // Throws ValidationError on inconsistent lengths or out-of-range s.
  void validate() const;
  Dataset subset(std::span<const std::size_t> idx) const;
  // Row indices per sensitive value.
  std::vector<std::vector<std::size_t>> groups() const;
  Matrix y_column() const { return Matrix::column(y); }
  std::size_t feature_index(const std::string& name) const;
};

std::string to_string(Task t);
Task task_from_string(const std::string& s);

}  // namespace claire

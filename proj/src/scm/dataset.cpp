#include "claire/scm/dataset.hpp"

#include <algorithm>

#include "claire/error.hpp"

namespace claire {

void Dataset::validate() const {
  const std::size_t n = y.size();
  if (x.rows() != n || s.size() != n) {
    throw ValidationError("dataset lengths disagree: x " + x.shape_string() + ", s " +
                          std::to_string(s.size()) + ", y " + std::to_string(n));
  }
  if (feature_names.size() != x.cols()) {
    throw ValidationError("dataset has " + std::to_string(x.cols()) + " columns but " +
                          std::to_string(feature_names.size()) + " names");
  }
  for (std::size_t v : s) {
    if (v >= num_sensitive) {
      throw ValidationError("sensitive value " + std::to_string(v) + " outside 0.." +
                            std::to_string(num_sensitive == 0 ? 0 : num_sensitive - 1));
    }
  }
}

Dataset Dataset::subset(std::span<const std::size_t> idx) const {
  Dataset out;
  out.feature_names = feature_names;
  out.num_sensitive = num_sensitive;
  out.task = task;
  out.x = gather_rows(x, idx);
  out.s.reserve(idx.size());
  out.y.reserve(idx.size());
  for (std::size_t i : idx) {
    out.s.push_back(s.at(i));
    out.y.push_back(y.at(i));
  }
  return out;
}

std::vector<std::vector<std::size_t>> Dataset::groups() const {
  std::vector<std::vector<std::size_t>> g(num_sensitive);
  for (std::size_t i = 0; i < s.size(); ++i) g.at(s[i]).push_back(i);
  return g;
}

std::size_t Dataset::feature_index(const std::string& name) const {
  const auto it = std::find(feature_names.begin(), feature_names.end(), name);
  if (it == feature_names.end()) throw DataError("no feature column '" + name + "'");
  return static_cast<std::size_t>(it - feature_names.begin());
}

std::string to_string(Task t) { return t == Task::regression ? "regression" : "classification"; }

Task task_from_string(const std::string& s) {
  if (s == "regression") return Task::regression;
  if (s == "classification") return Task::classification;
  throw ConfigError("unknown task '" + s + "'");
}

}  // namespace claire

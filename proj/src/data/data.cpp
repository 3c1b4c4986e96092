#include "claire/data/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "claire/error.hpp"
#include "claire/numerics/random.hpp"

namespace claire::data {

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  s = s.substr(first, last - first + 1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

// Case-insensitive match; a trailing '.' on the cell is ignored (label
// spelling differs between the two halves of some public releases).
bool same_label(const std::string& cell, const std::string& want) {
  std::string c = lower(cell);
  const std::string w = lower(want);
  if (c == w) return true;
  if (!c.empty() && c.back() == '.') c.pop_back();
  return c == w;
}

bool is_missing(const std::string& cell) { return cell.empty() || cell == "?" || lower(cell) == "na"; }

bool parse_double(const std::string& s, double& out) {
  const char* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

std::string type_name(ColumnType t) {
  switch (t) {
    case ColumnType::continuous:
      return "continuous";
    case ColumnType::categorical:
      return "categorical";
    case ColumnType::binary:
      return "binary";
  }
  return "continuous";
}

ColumnType type_from(const std::string& s) {
  if (s == "continuous") return ColumnType::continuous;
  if (s == "categorical") return ColumnType::categorical;
  if (s == "binary") return ColumnType::binary;
  throw ConfigError("unknown column type '" + s + "'");
}

}  // namespace

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
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
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

void Schema::validate() const {
  if (features.empty()) throw ConfigError("schema lists no feature columns");
  if (sensitive.empty() || target.empty()) throw ConfigError("schema needs sensitive and target columns");
  if (sensitive == target) throw ConfigError("sensitive and target columns must differ");
  if (sensitive_values.size() < 2) throw ConfigError("schema needs at least two sensitive values");
  std::set<std::string> seen;
  for (const auto& f : features) {
    if (f.name == sensitive || f.name == target) {
      throw ConfigError("column '" + f.name + "' cannot be both a feature and the sensitive/target column");
    }
    if (!seen.insert(f.name).second) throw ConfigError("duplicate feature '" + f.name + "'");
    if (f.type == ColumnType::binary && f.positive.empty()) {
      throw ConfigError("binary feature '" + f.name + "' needs a positive value list");
    }
  }
}

Schema Schema::from_json(const nlohmann::json& j) {
  try {
    Schema s;
    for (const auto& f : j.at("features")) {
      FeatureSpec spec;
      spec.name = f.at("name").get<std::string>();
      spec.type = type_from(f.value("type", std::string("continuous")));
      spec.categories = f.value("categories", std::vector<std::string>{});
      spec.positive = f.value("positive", std::vector<std::string>{});
      s.features.push_back(std::move(spec));
    }
    s.sensitive = j.at("sensitive").at("name").get<std::string>();
    s.sensitive_values = j.at("sensitive").at("values").get<std::vector<std::string>>();
    s.target = j.at("target").at("name").get<std::string>();
    s.task = task_from_string(j.at("target").value("task", std::string("regression")));
    s.positive_labels = j.at("target").value("positive", std::vector<std::string>{});
    s.columns = j.value("columns", std::vector<std::string>{});
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed schema: ") + e.what());
  }
}

nlohmann::json Schema::to_json() const {
  nlohmann::json feats = nlohmann::json::array();
  for (const auto& f : features) {
    nlohmann::json o{{"name", f.name}, {"type", type_name(f.type)}};
    if (!f.categories.empty()) o["categories"] = f.categories;
    if (!f.positive.empty()) o["positive"] = f.positive;
    feats.push_back(o);
  }
  nlohmann::json j{{"features", feats},
                   {"sensitive", {{"name", sensitive}, {"values", sensitive_values}}},
                   {"target", {{"name", target}, {"task", to_string(task)}}}};
  if (!positive_labels.empty()) j["target"]["positive"] = positive_labels;
  if (!columns.empty()) j["columns"] = columns;
  return j;
}

nlohmann::json LoadReport::to_json() const {
  return {{"rows_read", rows_read},
          {"rows_kept", rows_kept},
          {"dropped_sensitive", dropped_sensitive},
          {"dropped_missing", dropped_missing},
          {"skipped_unparseable", skipped_unparseable}};
}

LoadResult load_csv(const std::string& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return parse_csv(in, schema);
}

LoadResult parse_csv(std::istream& in, const Schema& schema) {
  schema.validate();
  std::string line;
  std::vector<std::string> header = schema.columns;
  if (header.empty()) {
    while (std::getline(in, line) && trim(line).empty()) {
    }
    if (trim(line).empty()) throw DataError("empty file: no header and no rows");
    header = split_csv_line(line);
  }
  auto column_of = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError("missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t sens_col = column_of(schema.sensitive);
  const std::size_t target_col = column_of(schema.target);
  std::vector<std::size_t> feat_col;
  for (const auto& f : schema.features) feat_col.push_back(column_of(f.name));

  struct Row {
    std::size_t s;
    double y;
    std::vector<std::string> cells;
  };
  std::vector<Row> rows;
  LoadReport report;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++report.rows_read;
    const auto cells = split_csv_line(line);
    if (cells.size() < header.size()) {
      ++report.skipped_unparseable;
      continue;
    }
    const auto& sv = cells[sens_col];
    const auto sit = std::find_if(schema.sensitive_values.begin(), schema.sensitive_values.end(),
                                  [&](const std::string& v) { return same_label(sv, v); });
    if (sit == schema.sensitive_values.end()) {
      ++report.dropped_sensitive;
      continue;
    }
    bool missing = is_missing(cells[target_col]);
    for (std::size_t c : feat_col) missing = missing || is_missing(cells[c]);
    if (missing) {
      ++report.dropped_missing;
      continue;
    }
    Row r{static_cast<std::size_t>(sit - schema.sensitive_values.begin()), 0.0, {}};
    bool ok = true;
    if (schema.task == Task::classification && !schema.positive_labels.empty()) {
      r.y = std::any_of(schema.positive_labels.begin(), schema.positive_labels.end(),
                        [&](const std::string& p) { return same_label(cells[target_col], p); })
                ? 1.0
                : 0.0;
    } else {
      ok = parse_double(cells[target_col], r.y);
      if (ok && schema.task == Task::classification && r.y != 0.0 && r.y != 1.0) ok = false;
    }
    for (std::size_t k = 0; k < feat_col.size() && ok; ++k) {
      double tmp = 0.0;
      if (schema.features[k].type == ColumnType::continuous) ok = parse_double(cells[feat_col[k]], tmp);
    }
    if (!ok) {
      ++report.skipped_unparseable;
      continue;
    }
    for (std::size_t c : feat_col) r.cells.push_back(cells[c]);
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw DataError("dataset is empty after filtering");

  // Column layout after encoding.
  LoadResult out;
  Dataset& d = out.data;
  std::vector<std::vector<std::string>> cats(schema.features.size());
  for (std::size_t k = 0; k < schema.features.size(); ++k) {
    const auto& f = schema.features[k];
    if (f.type == ColumnType::categorical) {
      if (!f.categories.empty()) {
        cats[k] = f.categories;
      } else {
        std::set<std::string> uniq;
        for (const auto& r : rows) uniq.insert(r.cells[k]);
        cats[k].assign(uniq.begin(), uniq.end());
      }
      for (const auto& c : cats[k]) d.feature_names.push_back(f.name + "=" + c);
    } else {
      if (f.type == ColumnType::continuous) out.continuous_columns.push_back(d.feature_names.size());
      d.feature_names.push_back(f.name);
    }
  }
  d.x = Matrix(rows.size(), d.feature_names.size());
  d.num_sensitive = schema.sensitive_values.size();
  d.task = schema.task;
  std::size_t kept = 0;
  for (const auto& r : rows) {
    std::size_t col = 0;
    bool ok = true;
    auto xrow = d.x.row_span(kept);
    for (std::size_t k = 0; k < schema.features.size() && ok; ++k) {
      const auto& f = schema.features[k];
      const std::string& cell = r.cells[k];
      switch (f.type) {
        case ColumnType::continuous:
          parse_double(cell, xrow[col++]);
          break;
        case ColumnType::binary:
          xrow[col++] = std::any_of(f.positive.begin(), f.positive.end(),
                                    [&](const std::string& p) { return same_label(cell, p); })
                            ? 1.0
                            : 0.0;
          break;
        case ColumnType::categorical: {
          const auto it = std::find(cats[k].begin(), cats[k].end(), cell);
          if (it == cats[k].end()) {
            ok = false;  // value outside a declared category list
            break;
          }
          xrow[col + static_cast<std::size_t>(it - cats[k].begin())] = 1.0;
          col += cats[k].size();
          break;
        }
      }
    }
    if (!ok) {
      std::fill(xrow.begin(), xrow.end(), 0.0);
      ++report.skipped_unparseable;
      continue;
    }
    d.s.push_back(r.s);
    d.y.push_back(r.y);
    ++kept;
  }
  if (kept == 0) throw DataError("dataset is empty after filtering");
  if (kept < rows.size()) {
    std::vector<std::size_t> idx(kept);
    std::iota(idx.begin(), idx.end(), 0);
    d.x = gather_rows(d.x, idx);
  }
  report.rows_kept = kept;
  out.report = report;
  d.validate();
  return out;
}

Matrix Scaler::transform(const Matrix& x) const {
  Matrix out = x;
  for (std::size_t k = 0; k < columns.size(); ++k) {
    if (columns[k] >= x.cols()) throw ShapeError("scaler column out of range");
    for (std::size_t i = 0; i < x.rows(); ++i) out(i, columns[k]) = (x(i, columns[k]) - mean[k]) / scale[k];
  }
  return out;
}

Matrix Scaler::inverse(const Matrix& x) const {
  Matrix out = x;
  for (std::size_t k = 0; k < columns.size(); ++k) {
    if (columns[k] >= x.cols()) throw ShapeError("scaler column out of range");
    for (std::size_t i = 0; i < x.rows(); ++i) out(i, columns[k]) = x(i, columns[k]) * scale[k] + mean[k];
  }
  return out;
}

nlohmann::json Scaler::to_json() const {
  return {{"columns", columns}, {"mean", mean}, {"scale", scale}, {"warnings", warnings}};
}

Scaler Scaler::from_json(const nlohmann::json& j) {
  Scaler s;
  s.columns = j.at("columns").get<std::vector<std::size_t>>();
  s.mean = j.at("mean").get<std::vector<double>>();
  s.scale = j.at("scale").get<std::vector<double>>();
  s.warnings = j.value("warnings", std::vector<std::string>{});
  if (s.mean.size() != s.columns.size() || s.scale.size() != s.columns.size()) {
    throw ConfigError("scaler arrays differ in length");
  }
  return s;
}

Scaler fit_scaler(const Matrix& x, std::span<const std::size_t> fit_rows, std::span<const std::size_t> columns) {
  if (fit_rows.empty()) throw ValidationError("cannot fit a scaler on zero rows");
  Scaler s;
  for (std::size_t c : columns) {
    if (c >= x.cols()) throw ShapeError("scaler column " + std::to_string(c) + " out of range");
    double m = 0.0;
    for (std::size_t i : fit_rows) m += x(i, c);
    m /= static_cast<double>(fit_rows.size());
    double v = 0.0;
    for (std::size_t i : fit_rows) v += (x(i, c) - m) * (x(i, c) - m);
    v /= static_cast<double>(fit_rows.size());
    s.columns.push_back(c);
    if (v <= 1e-24) {
      // Constant column: leave it as is.
      s.mean.push_back(0.0);
      s.scale.push_back(1.0);
      s.warnings.push_back("column " + std::to_string(c) + " has zero variance and was left unscaled");
    } else {
      s.mean.push_back(m);
      s.scale.push_back(std::sqrt(v));
    }
  }
  return s;
}

Standardized standardize(const Dataset& d, std::span<const std::size_t> fit_rows,
                         std::span<const std::size_t> columns) {
  Standardized out{d, fit_scaler(d.x, fit_rows, columns)};
  out.data.x = out.scaler.transform(d.x);
  return out;
}

SplitIndices split(std::size_t n, std::uint64_t seed) {
  if (n < 5) throw ValidationError("need at least 5 rows to split, got " + std::to_string(n));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  // Fisher-Yates with the library's own index draw for portability.
  for (std::size_t i = n - 1; i > 0; --i) std::swap(idx[i], idx[rng.index(i + 1)]);
  const std::size_t a = (n * 6) / 10;
  const std::size_t b = (n * 8) / 10;
  SplitIndices s;
  s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(a));
  s.validation.assign(idx.begin() + static_cast<std::ptrdiff_t>(a), idx.begin() + static_cast<std::ptrdiff_t>(b));
  s.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(b), idx.end());
  return s;
}

}  // namespace claire::data

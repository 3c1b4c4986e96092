#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "claire/harness/experiment.hpp"

namespace claire::harness {

void write_csv(std::ostream& out, const std::vector<ResultRow>& rows);
nlohmann::json results_json(const ExperimentConfig& config, const std::vector<ResultRow>& rows);

// Two panels (RMSE and Wass against the swept value, log x-axis), one line per method.
std::string sweep_svg(const std::vector<ResultRow>& rows, const std::string& param);

// results.json and results.csv, plus plot.svg when the rows come from a sweep.
void write_outputs(const std::string& dir, const ExperimentConfig& config, const std::vector<ResultRow>& rows);

}  // namespace claire::harness

#include "claire/harness/report.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "claire/error.hpp"

namespace claire::harness {

namespace {

std::string number(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string short_number(double v) {
  std::ostringstream os;
  os << std::setprecision(3) << v;
  return os.str();
}

std::ofstream open(const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) throw DataError("cannot write " + p.string());
  return out;
}

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};

}  // namespace

void write_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
  const bool swept = std::any_of(rows.begin(), rows.end(), [](const ResultRow& r) { return !r.param.empty(); });
  out << "method,metric,mean,std" << (swept ? ",param,value" : "") << '\n';
  for (const auto& r : rows) {
    out << r.method << ',' << r.metric << ',' << number(r.mean) << ',' << number(r.std);
    if (swept) out << ',' << r.param << ',' << number(r.value);
    out << '\n';
  }
}

nlohmann::json results_json(const ExperimentConfig& config, const std::vector<ResultRow>& rows) {
  nlohmann::json j{{"config", config.to_json()}, {"rows", nlohmann::json::array()}};
  for (const auto& r : rows) j["rows"].push_back(r.to_json());
  return j;
}

std::string sweep_svg(const std::vector<ResultRow>& rows, const std::string& param) {
  constexpr double W = 360, H = 260, L = 55, R = 15, T = 30, B = 45;
  const std::vector<std::string> panels{"rmse", "wass"};
  std::vector<std::string> methods;
  for (const auto& r : rows) {
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
  }
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W * panels.size() << "\" height=\"" << H + 20 * methods.size()
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  for (std::size_t p = 0; p < panels.size(); ++p) {
    // value -> mean, per method
    std::map<std::string, std::vector<std::pair<double, double>>> series;
    for (const auto& r : rows) {
      if (r.metric == panels[p]) series[r.method].push_back({r.value, r.mean});
    }
    double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
    const bool logx = std::all_of(rows.begin(), rows.end(), [](const ResultRow& r) { return r.value > 0; });
    auto tx = [&](double v) { return logx ? std::log10(v) : v; };
    for (auto& [m, pts] : series) {
      std::sort(pts.begin(), pts.end());
      for (auto [x, y] : pts) {
        x0 = std::min(x0, tx(x));
        x1 = std::max(x1, tx(x));
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
      }
    }
    if (series.empty()) continue;
    if (x1 == x0) x1 = x0 + 1;
    if (y1 == y0) y1 = y0 + 1;
    const double ox = W * static_cast<double>(p);
    auto px = [&](double x) { return ox + L + (tx(x) - x0) / (x1 - x0) * (W - L - R); };
    auto py = [&](double y) { return T + (y1 - y) / (y1 - y0) * (H - T - B); };
    svg << "<text x=\"" << ox + W / 2 << "\" y=\"18\" text-anchor=\"middle\">" << panels[p] << " vs " << param
        << "</text>\n";
    svg << "<rect x=\"" << ox + L << "\" y=\"" << T << "\" width=\"" << W - L - R << "\" height=\"" << H - T - B
        << "\" fill=\"none\" stroke=\"#444\"/>\n";
    svg << "<text x=\"" << ox + L - 4 << "\" y=\"" << T + 4 << "\" text-anchor=\"end\">" << short_number(y1)
        << "</text>\n";
    svg << "<text x=\"" << ox + L - 4 << "\" y=\"" << H - B << "\" text-anchor=\"end\">" << short_number(y0)
        << "</text>\n";
    for (const auto& [m, pts] : series) {
      const auto colour = kPalette[static_cast<std::size_t>(std::find(methods.begin(), methods.end(), m) - methods.begin()) % 7];
      svg << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
      for (auto [x, y] : pts) svg << px(x) << ',' << py(y) << ' ';
      svg << "\"/>\n";
      for (auto [x, y] : pts) {
        svg << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"2.5\" fill=\"" << colour << "\"/>\n";
      }
    }
    for (const auto& [x, y] : series.begin()->second) {
      svg << "<text x=\"" << px(x) << "\" y=\"" << H - B + 14 << "\" text-anchor=\"middle\">" << short_number(x)
          << "</text>\n";
    }
  }
  for (std::size_t i = 0; i < methods.size(); ++i) {
    const double y = H + 20 * static_cast<double>(i);
    svg << "<rect x=\"" << L << "\" y=\"" << y - 8 << "\" width=\"10\" height=\"10\" fill=\"" << kPalette[i % 7]
        << "\"/><text x=\"" << L + 16 << "\" y=\"" << y + 1 << "\">" << methods[i] << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

void write_outputs(const std::string& dir, const ExperimentConfig& config, const std::vector<ResultRow>& rows) {
  const std::filesystem::path root(dir);
  std::error_code ec;
  std::filesystem::create_directories(root, ec);
  if (ec) throw DataError("cannot create " + dir + ": " + ec.message());
  open(root / "results.json") << results_json(config, rows).dump(2) << '\n';
  auto csv = open(root / "results.csv");
  write_csv(csv, rows);
  if (!rows.empty() && !rows.front().param.empty()) open(root / "plot.svg") << sweep_svg(rows, rows.front().param);
}

}  // namespace claire::harness

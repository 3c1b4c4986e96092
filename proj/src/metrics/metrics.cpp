#include "claire/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "claire/error.hpp"
#include "claire/numerics/kernels.hpp"
#include "claire/numerics/random.hpp"

namespace claire::metrics {

namespace {

void check_pair(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.empty() || b.empty()) throw ValidationError(std::string(what) + ": empty input");
  if (a.size() != b.size()) {
    throw ShapeError(std::string(what) + ": lengths " + std::to_string(a.size()) + " and " +
                     std::to_string(b.size()) + " differ");
  }
}

std::vector<double> subsample(std::span<const double> v, std::size_t k, std::uint64_t seed) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  // Partial Fisher-Yates: the first k positions form a uniform subset.
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.index(v.size() - i)]);
  std::vector<double> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = v[idx[i]];
  return out;
}

// Mean of exp(-||a_i - b_j||^2 / (2h^2)) over all pairs, in row blocks.
double kernel_mean(const Matrix& a, const Matrix& b, double h) {
  const auto& k = kernels::active();
  constexpr std::size_t kBlock = 256;
  const double scale = -1.0 / (2.0 * h * h);
  std::vector<double> buf(kBlock * b.rows());
  double total = 0.0;
  for (std::size_t r = 0; r < a.rows(); r += kBlock) {
    const std::size_t rows = std::min(kBlock, a.rows() - r);
    const std::size_t cells = rows * b.rows();
    k.sq_dist(a.data().data() + r * a.cols(), b.data().data(), buf.data(), rows, b.rows(), a.cols());
    k.scaled_exp(buf.data(), scale, buf.data(), cells);
    total += k.sum(buf.data(), cells);
  }
  return total / (static_cast<double>(a.rows()) * static_cast<double>(b.rows()));
}

}  // namespace

double rmse(std::span<const double> pred, std::span<const double> truth) {
  check_pair(pred, truth, "rmse");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - truth[i]) * (pred[i] - truth[i]);
  return std::sqrt(s / static_cast<double>(pred.size()));
}

double mae(std::span<const double> pred, std::span<const double> truth) {
  check_pair(pred, truth, "mae");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - truth[i]);
  return s / static_cast<double>(pred.size());
}

double accuracy(std::span<const double> pred, std::span<const double> truth) {
  check_pair(pred, truth, "accuracy");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double label = pred[i] >= 0.5 ? 1.0 : 0.0;
    if (label == (truth[i] >= 0.5 ? 1.0 : 0.0)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double wasserstein1(std::span<const double> a, std::span<const double> b, std::uint64_t seed) {
  if (a.empty() || b.empty()) throw ValidationError("wasserstein1: empty input");
  std::vector<double> x, y;
  if (a.size() > b.size()) {
    x = subsample(a, b.size(), seed);
    y.assign(b.begin(), b.end());
  } else if (b.size() > a.size()) {
    x.assign(a.begin(), a.end());
    y = subsample(b, a.size(), seed);
  } else {
    x.assign(a.begin(), a.end());
    y.assign(b.begin(), b.end());
  }
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += std::abs(x[i] - y[i]);
  return s / static_cast<double>(x.size());
}

double median_heuristic(const Matrix& a, const Matrix& b, std::size_t max_points) {
  const Matrix pooled = vcat(a, b);
  const std::size_t n = pooled.rows();
  const std::size_t stride = std::max<std::size_t>(1, (n + max_points - 1) / std::max<std::size_t>(max_points, 1));
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < n; i += stride) idx.push_back(i);
  const Matrix pts = gather_rows(pooled, idx);
  const std::size_t m = pts.rows();
  if (m < 2) return 1.0;
  std::vector<double> d2(m * m);
  kernels::active().sq_dist(pts.data().data(), pts.data().data(), d2.data(), m, m, pts.cols());
  std::vector<double> dist;
  dist.reserve(m * (m - 1) / 2);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) dist.push_back(std::sqrt(std::max(d2[i * m + j], 0.0)));
  }
  auto mid = dist.begin() + static_cast<std::ptrdiff_t>(dist.size() / 2);
  std::nth_element(dist.begin(), mid, dist.end());
  return *mid > 0.0 ? *mid : 1.0;
}

double mmd_rbf(const Matrix& a, const Matrix& b, std::optional<double> bandwidth) {
  if (a.rows() == 0 || b.rows() == 0) throw ValidationError("mmd_rbf: empty input");
  if (a.cols() != b.cols()) throw ShapeError("mmd_rbf: feature dimensions differ");
  if (bandwidth && !(*bandwidth > 0.0)) throw ConfigError("mmd_rbf: bandwidth must be positive");
  const double h = bandwidth ? *bandwidth : median_heuristic(a, b);
  const double v = kernel_mean(a, a, h) + kernel_mean(b, b, h) - 2.0 * kernel_mean(a, b, h);
  return std::max(v, 0.0);
}

double mmd_rbf(std::span<const double> a, std::span<const double> b, std::optional<double> bandwidth) {
  return mmd_rbf(Matrix::column(a), Matrix::column(b), bandwidth);
}

void CounterfactualSet::validate() const {
  if (predictions.size() < 2) {
    throw ValidationError("counterfactual divergence needs at least 2 sensitive values, got " +
                          std::to_string(predictions.size()));
  }
  const std::size_t n = predictions.front().size();
  if (n == 0) throw ValidationError("counterfactual predictions are empty");
  for (const auto& p : predictions) {
    if (p.size() != n) throw ShapeError("counterfactual prediction vectors differ in length");
  }
}

const PairDivergence& DivergenceReport::pair(std::size_t s, std::size_t s_prime) const {
  if (s > s_prime) std::swap(s, s_prime);
  for (const auto& p : pairs) {
    if (p.s == s && p.s_prime == s_prime) return p;
  }
  throw ValidationError("no divergence recorded for pair (" + std::to_string(s) + ", " +
                        std::to_string(s_prime) + ")");
}

DivergenceReport counterfactual_divergence(const CounterfactualSet& cf, std::uint64_t seed) {
  cf.validate();
  DivergenceReport r;
  const std::size_t k = cf.num_sensitive();
  for (std::size_t s = 0; s < k; ++s) {
    for (std::size_t t = s + 1; t < k; ++t) {
      PairDivergence p{s, t, mmd_rbf(cf.predictions[s], cf.predictions[t]),
                       wasserstein1(cf.predictions[s], cf.predictions[t], seed)};
      r.mmd_avg += p.mmd;
      r.wass_avg += p.wass;
      r.pairs.push_back(p);
    }
  }
  r.mmd_avg /= static_cast<double>(r.pairs.size());
  r.wass_avg /= static_cast<double>(r.pairs.size());
  return r;
}

double average_divergence(const CounterfactualSet& cf, Divergence which, std::uint64_t seed) {
  cf.validate();
  const std::size_t k = cf.num_sensitive();
  double total = 0.0;
  for (std::size_t s = 0; s < k; ++s) {
    for (std::size_t t = s + 1; t < k; ++t) {
      total += which == Divergence::mmd ? mmd_rbf(cf.predictions[s], cf.predictions[t])
                                        : wasserstein1(cf.predictions[s], cf.predictions[t], seed);
    }
  }
  return total / static_cast<double>(k * (k - 1) / 2);
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j;
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  j["rmse"] = opt(rmse);
  j["mae"] = opt(mae);
  j["accuracy"] = opt(accuracy);
  j["mmd_avg"] = divergence.mmd_avg;
  j["wass_avg"] = divergence.wass_avg;
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& p : divergence.pairs) {
    pairs.push_back({{"s", p.s}, {"s_prime", p.s_prime}, {"mmd", p.mmd}, {"wass", p.wass}});
  }
  j["pairs"] = pairs;
  return j;
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
  MetricsReport r;
  auto opt = [&](const char* key) -> std::optional<double> {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
  };
  r.rmse = opt("rmse");
  r.mae = opt("mae");
  r.accuracy = opt("accuracy");
  r.divergence.mmd_avg = j.at("mmd_avg").get<double>();
  r.divergence.wass_avg = j.at("wass_avg").get<double>();
  for (const auto& p : j.at("pairs")) {
    r.divergence.pairs.push_back({p.at("s").get<std::size_t>(), p.at("s_prime").get<std::size_t>(),
                                  p.at("mmd").get<double>(), p.at("wass").get<double>()});
  }
  return r;
}

}  // namespace claire::metrics

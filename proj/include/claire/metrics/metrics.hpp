#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"
#include "claire/numerics/matrix.hpp"

namespace claire::metrics {

double rmse(std::span<const double> pred, std::span<const double> truth);
double mae(std::span<const double> pred, std::span<const double> truth);
// pred holds probabilities, thresholded at 0.5; truth holds 0/1 labels.
double accuracy(std::span<const double> pred, std::span<const double> truth);

// Mean absolute difference of the sorted samples. The longer input is first
// subsampled without replacement (seeded) to the shorter length.
double wasserstein1(std::span<const double> a, std::span<const double> b, std::uint64_t seed = 0);

// Median pairwise Euclidean distance of the pooled rows (an evenly strided
// subset of at most max_points rows). Falls back to 1 when the median is 0.
double median_heuristic(const Matrix& a, const Matrix& b, std::size_t max_points = 1000);

// Biased estimate mean k(a,a) + mean k(b,b) - 2 mean k(a,b) with
// k = exp(-d^2 / (2 h^2)); h from the median heuristic when not given.
double mmd_rbf(const Matrix& a, const Matrix& b, std::optional<double> bandwidth = std::nullopt);
double mmd_rbf(std::span<const double> a, std::span<const double> b,
               std::optional<double> bandwidth = std::nullopt);

// Predictions under each intervention S <- s'; predictions[s'] has length n.
struct CounterfactualSet {
  std::vector<std::vector<double>> predictions;

  void validate() const;
  std::size_t num_sensitive() const { return predictions.size(); }
};

struct PairDivergence {
  std::size_t s = 0;
  std::size_t s_prime = 0;
  double mmd = 0.0;
  double wass = 0.0;
};

struct DivergenceReport {
  double mmd_avg = 0.0;
  double wass_avg = 0.0;
  std::vector<PairDivergence> pairs;  // s < s', lexicographic

  const PairDivergence& pair(std::size_t s, std::size_t s_prime) const;
};

enum class Divergence { mmd, wass };

DivergenceReport counterfactual_divergence(const CounterfactualSet& cf, std::uint64_t seed = 0);
// Average over the |S|(|S|-1)/2 unordered pairs of a single divergence.
double average_divergence(const CounterfactualSet& cf, Divergence which, std::uint64_t seed = 0);

struct MetricsReport {
  std::optional<double> rmse;
  std::optional<double> mae;
  std::optional<double> accuracy;
  DivergenceReport divergence;

  nlohmann::json to_json() const;
  static MetricsReport from_json(const nlohmann::json& j);
};

}  // namespace claire::metrics

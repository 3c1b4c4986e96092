#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "claire/numerics/matrix.hpp"
#include "claire/scm/dataset.hpp"
#include "claire/scm/graph.hpp"

namespace claire::scm {

struct CategoricalRoot {
  std::vector<double> probabilities;
};

// value = intercept + sum_k coefficients[k] * parent_k + noise_std * eps.
// The sensitive node, when a parent, contributes its integer value.
struct LinearGaussian {
  std::vector<double> coefficients;
  double intercept = 0.0;
  double noise_std = 1.0;
};

// value = intercept + sum_k coefficients[k] * parent_k
//         + sensitive_weights[s] * s + noise_std[s] * eps.
// coefficients cover the non-sensitive parents only. sensitive_weights is
// empty when the sensitive node is not a parent; the noise scale may still
// depend on s.
struct LinearGaussianByS {
  std::vector<double> coefficients;
  std::vector<double> sensitive_weights;
  std::vector<double> noise_std;
  double intercept = 0.0;
};

using Mechanism = std::variant<CategoricalRoot, LinearGaussian, LinearGaussianByS>;

// DAG plus one mechanism per node. Validated on construction and immutable.
class Scm {
 public:
  Scm(CausalGraph graph, std::vector<Mechanism> mechanisms);

  const CausalGraph& graph() const { return graph_; }
  const std::vector<Mechanism>& mechanisms() const { return mechanisms_; }
  const Mechanism& mechanism(std::size_t v) const { return mechanisms_.at(v); }
  const std::vector<std::size_t>& order() const { return order_; }
  std::size_t num_sensitive() const { return num_sensitive_; }
  std::span<const double> sensitive_probabilities() const;
  // Observed (non-target) nodes in index order; these are the feature columns.
  std::vector<std::size_t> feature_nodes() const;
  std::vector<std::string> feature_names() const;

  // Deterministic part of node v given node values and the sensitive value.
  double structural_mean(std::size_t v, std::span<const double> values, std::size_t s) const;
  double noise_std(std::size_t v, std::size_t s) const;

 private:
  CausalGraph graph_;
  std::vector<Mechanism> mechanisms_;
  std::vector<std::vector<std::size_t>> parents_;
  std::vector<std::size_t> order_;
  std::size_t num_sensitive_ = 0;
};

// Throws ValidationError describing the first violated invariant.
void validate(const CausalGraph& graph, const std::vector<Mechanism>& mechanisms);
inline void validate(const Scm& scm) { validate(scm.graph(), scm.mechanisms()); }

std::string mechanism_kind(const Mechanism& m);

struct SampleOptions {
  std::optional<std::size_t> fixed_sensitive;
  Task task = Task::regression;
};

struct SampleRecord {
  Dataset data;
  // n x nodes: every node's realized value, latents included.
  Matrix values;
  // n x nodes: additive noise realized at each node (zero for the sensitive one).
  Matrix noise;
};

SampleRecord sample(const Scm& scm, std::size_t n, std::uint64_t seed, const SampleOptions& opt = {});

// Gaussian posterior of the latent nodes given whichever nodes are observed.
struct LatentPosterior {
  std::vector<std::size_t> latent_nodes;
  std::vector<double> mean;
  Matrix covariance;
};

// node_values has one entry per node; nullopt marks an unobserved node.
// Latent and sensitive entries are ignored.
LatentPosterior latent_posterior(const Scm& scm, std::span<const std::optional<double>> node_values,
                                 std::size_t s);

struct Instance {
  std::span<const double> x;
  std::size_t s = 0;
  double y = 0.0;
};

struct Counterfactual {
  std::vector<double> x;
  double y = 0.0;
};

// Abduction (latent posterior draws, additive residuals), action (S <- s_new),
// prediction; averaged over n_samples draws.
Counterfactual counterfactual(const Scm& scm, const Instance& instance, std::size_t s_new,
                              std::size_t n_samples, std::uint64_t seed);

// Row-wise counterfactuals of a dataset whose feature columns are the scm's
// feature nodes. Row i uses derive_seed(seed, i).
Dataset counterfactual_dataset(const Scm& scm, const Dataset& data, std::size_t s_new,
                               std::size_t n_samples, std::uint64_t seed);

// Monte-Carlo mean of the latent posterior given features and s only (target
// unobserved). Returns n x latent-count.
Matrix posterior_latent_means(const Scm& scm, const Dataset& data, std::size_t n_samples,
                              std::uint64_t seed);

}  // namespace claire::scm

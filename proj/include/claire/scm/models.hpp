#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "claire/scm/dataset.hpp"
#include "claire/scm/graph.hpp"
#include "claire/scm/scm.hpp"

namespace claire::scm {

// Parameters of the four-group synthetic model.
struct SyntheticParams {
  std::vector<double> probabilities{0.5, 0.4, 0.05, 0.05};
  std::vector<double> noise_std{0.5, 1.0, 1.5, 2.0};
  std::vector<double> sensitive_weights{0.1, 0.2, 1.0, 2.0};
  double latent_std = 1.0;
  double root_std = 1.0;
};

// S -> X1 <- U, X1 -> Y <- X0, Y -> X2.
Scm claire_synthetic(const SyntheticParams& params = {});

// Per-node least squares on the parents' data columns (the sensitive value
// enters as a number). Latent parents get a unit coefficient and standard
// normal marginal; their variance is taken out of the residual variance.
Scm fit_linear_scm(const CausalGraph& graph, const Dataset& data);
// Refit of one node's mechanism; the building block of fit_linear_scm.
Mechanism fit_mechanism(const CausalGraph& graph, std::size_t node, const Dataset& data);

enum class Variant {
  reversed_child,   // M1: target -> child edges reversed
  missing_sensitive // M2: sensitive -> child edges removed
};

Variant variant_from_string(const std::string& tag);
std::string to_string(Variant v);

CausalGraph variant_graph(const CausalGraph& graph, Variant which);
// Misspecified model: edits the graph and refits the touched nodes on data.
Scm incorrect_variant(const Scm& truth, Variant which, const Dataset& data);
// Same, refitting on n rows sampled from truth.
Scm incorrect_variant(const Scm& truth, Variant which, std::uint64_t seed, std::size_t n = 100000);

}  // namespace claire::scm

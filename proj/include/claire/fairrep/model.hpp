#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"
#include "claire/augment/vae.hpp"
#include "claire/numerics/autodiff.hpp"
#include "claire/numerics/mlp.hpp"
#include "claire/scm/dataset.hpp"

namespace claire::fairrep {

// Settings for both stages. alpha, alpha_prime and k are read by the
// augmentation stage; the rest drive representation learning.
struct HyperParams {
  double alpha = 2.0;
  double alpha_prime = 1.0;
  double beta = 5.0;    // counterfactual constraint weight
  double lambda = 1.0;  // invariance penalty weight
  std::size_t k = 20;
  std::size_t epochs = 500;
  double lr = 1e-3;
  std::size_t hidden = 32;
  std::size_t rep_dim = 10;
  std::uint64_t seed = 0;
  // When set, keep the epoch with the lowest validation risk instead of the last.
  bool select_best_epoch = false;

  void validate() const;
  nlohmann::json to_json() const;
  static HyperParams from_json(const nlohmann::json& j);
};

// Representation network phi (x -> z) followed by the predictor g (z -> y).
class ClaireModel {
 public:
  ClaireModel(std::size_t features, Task task, const HyperParams& hp, Rng& rng);
  ClaireModel(Task task, Mlp phi, Mlp g);

  Matrix represent(const Matrix& x) const;
  // Regression values, or probabilities for classification.
  std::vector<double> predict(const Matrix& x) const;

  ad::Var represent(ad::Tape& tape, ad::Var x);
  // Output before the link (the value itself for regression).
  ad::Var output(ad::Tape& tape, ad::Var z);

  Task task() const { return task_; }
  std::size_t features() const { return phi_.input_dim(); }
  const Mlp& phi() const { return phi_; }
  const Mlp& g() const { return g_; }
  std::vector<ad::Parameter*> parameters();

  nlohmann::json to_json() const;
  static ClaireModel from_json(const nlohmann::json& j);

 private:
  Task task_;
  Mlp phi_;
  Mlp g_;
};

// Mean over instances of the average cosine distance between the
// representation of x and those of its counterfactuals for every s' != s.
// z_cf[s'] holds the representations of the counterfactuals under s'.
ad::Var cf_constraint(ad::Var z, std::span<const ad::Var> z_cf, std::span<const std::size_t> s);

struct IrmTerms {
  ad::Var risk;
  ad::Var penalty;  // squared derivative of the risk in a scalar output multiplier at 1
};

// `output` is the pre-link model output of one subgroup (n x 1). The
// derivative is written in closed form: 2 mean((f - y) f) for squared error,
// mean((sigmoid(f) - y) f) for cross-entropy.
IrmTerms irm_terms(ad::Var output, std::span<const double> y, Task task);

// Plain-value evaluation for one subgroup.
struct IrmValue {
  double risk;
  double derivative;
  double penalty;
};
IrmValue irm_penalty(const ClaireModel& model, const Matrix& x, std::span<const double> y);

// (1/|S|) sum_s (R^s + lambda * penalty^s) + beta * cf_constraint over the
// augmented counterfactual features.
ad::Var total_loss(ad::Tape& tape, ClaireModel& model, const Dataset& data, const augment::AugmentedSet& augmented,
                   const HyperParams& hp);

struct Trained {
  ClaireModel model;
  std::vector<double> loss;  // per epoch
  std::size_t best_epoch;    // last epoch unless select_best_epoch
};

// Full-batch Adam on total_loss. `validation` is required when
// hp.select_best_epoch is set.
Trained train(const Dataset& data, const augment::AugmentedSet& augmented, const HyperParams& hp,
              const Dataset* validation = nullptr);

// Mean prediction loss (squared error or cross-entropy) of the model on data.
double risk(const ClaireModel& model, const Dataset& data);

}  // namespace claire::fairrep

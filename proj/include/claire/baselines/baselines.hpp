#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "claire/numerics/matrix.hpp"
#include "claire/numerics/mlp.hpp"
#include "claire/scm/dataset.hpp"
#include "claire/scm/scm.hpp"

namespace claire::baselines {

enum class Link { identity, logistic };

struct LinearModel {
  std::vector<double> coefficients;
  double intercept = 0.0;
  Link link = Link::identity;

  std::vector<double> predict(const Matrix& x) const;
  nlohmann::json to_json() const;
  static LinearModel from_json(const nlohmann::json& j);
};

// OLS for regression; logistic regression by iteratively reweighted least
// squares for classification. Singular designs raise FitError.
LinearModel fit_linear(const Matrix& x, std::span<const double> y, Task task);

struct IrlsOptions {
  double tolerance = 1e-8;  // on the largest coefficient change
  std::size_t max_iterations = 100;
};
LinearModel fit_logistic(const Matrix& x, std::span<const double> y, const IrlsOptions& options = {});

// Common interface so the harness can score every method the same way.
// Predictions are values for regression and probabilities for classification.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual std::vector<double> predict(const Matrix& x, std::span<const std::size_t> s) const = 0;
  virtual nlohmann::json to_json() const = 0;
};

class ConstantPredictor final : public Predictor {
 public:
  explicit ConstantPredictor(double value) : value_(value) {}
  double value() const { return value_; }
  std::vector<double> predict(const Matrix& x, std::span<const std::size_t> s) const override;
  nlohmann::json to_json() const override;

 private:
  double value_;
};

// Linear model on the features, optionally followed by indicator columns for
// sensitive values 1..|S|-1 (value 0 is the reference level).
class LinearPredictor final : public Predictor {
 public:
  LinearPredictor(LinearModel model, std::size_t num_sensitive, bool uses_sensitive);
  const LinearModel& model() const { return model_; }
  bool uses_sensitive() const { return uses_sensitive_; }
  std::vector<double> predict(const Matrix& x, std::span<const std::size_t> s) const override;
  nlohmann::json to_json() const override;

 private:
  LinearModel model_;
  std::size_t num_sensitive_;
  bool uses_sensitive_;
};

ConstantPredictor constant_predictor(const Dataset& train);
LinearPredictor full_predictor(const Dataset& train);
LinearPredictor unaware_predictor(const Dataset& train);

// [x | sensitive indicators] as used by the full predictor.
Matrix with_sensitive_indicators(const Matrix& x, std::span<const std::size_t> s, std::size_t num_sensitive);

struct CfpConfig {
  scm::Scm scm;
  std::size_t posterior_samples = 500;
  std::size_t epochs = 2000;
  double lr = 1e-3;
  double fairness_weight = 1.0;  // CFP-O only
  std::size_t hidden = 32;       // CFP-O network width
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
};

// Feature columns that are graph nodes and not descendants of the sensitive node.
std::vector<std::string> non_descendant_features(const scm::Scm& scm, std::span<const std::string> feature_names);

class CfpUPredictor final : public Predictor {
 public:
  CfpUPredictor(CfpConfig config, std::vector<std::string> feature_names, LinearModel model);
  std::vector<double> predict(const Matrix& x, std::span<const std::size_t> s) const override;
  nlohmann::json to_json() const override;
  // Names of the inputs of the linear model, latent posterior means first.
  std::vector<std::string> inputs() const;
  // The design matrix fed to the linear model.
  Matrix design(const Matrix& x, std::span<const std::size_t> s) const;
  const LinearModel& model() const { return model_; }

 private:
  CfpConfig config_;
  std::vector<std::string> feature_names_;
  std::vector<std::size_t> kept_columns_;
  LinearModel model_;
};

CfpUPredictor cfp_u(const CfpConfig& config, const Dataset& train);

class CfpOPredictor final : public Predictor {
 public:
  CfpOPredictor(CfpConfig config, std::size_t num_sensitive, Task task, Mlp net);
  std::vector<double> predict(const Matrix& x, std::span<const std::size_t> s) const override;
  nlohmann::json to_json() const override;
  const Mlp& network() const { return net_; }

 private:
  CfpConfig config_;
  std::size_t num_sensitive_;
  Task task_;
  Mlp net_;
};

// Neural f(x, one-hot s) trained on the prediction loss plus
// fairness_weight * mean |f(x_cf(s'), s') - f(x, s)| over s' != s, with the
// counterfactuals generated under config.scm.
CfpOPredictor cfp_o(const CfpConfig& config, const Dataset& train);

// Rebuilds any predictor above from its to_json() document (dispatch on "kind").
std::unique_ptr<Predictor> predictor_from_json(const nlohmann::json& j);

}  // namespace claire::baselines

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "claire/baselines/baselines.hpp"
#include "claire/fairrep/model.hpp"

namespace claire::harness {

struct DatasetSource {
  enum class Kind { synthetic, csv };
  Kind kind = Kind::synthetic;
  std::size_t n = 2000;  // synthetic sample size
  std::string csv;       // csv inputs
  std::string schema;
  std::string graph;

  nlohmann::json to_json() const;
  static DatasetSource from_json(const nlohmann::json& j);
};

// A method name with an optional causal model for the CFP baselines, written
// "cfp_u", "cfp_o:M1", "cfp_u:true". Known kinds: constant, full, unaware,
// cfp_u, cfp_o, claire_m, claire_a, erm, irm, claire_ni.
struct MethodSpec {
  std::string kind;
  std::string model;  // "true", "M1" or "M2"; CFP methods only

  static MethodSpec parse(const std::string& text, const std::string& default_model);
  bool is_cfp() const { return kind == "cfp_u" || kind == "cfp_o"; }
  // Display name, e.g. "CFP-U(M1)" or "CLAIRE-M".
  std::string label() const;
};

struct ExperimentConfig {
  std::string id = "experiment";
  DatasetSource data;
  std::vector<std::string> methods;
  fairrep::HyperParams hp;
  std::string scm = "true";  // default causal model for CFP methods
  std::size_t repetitions = 10;
  std::uint64_t seed = 0;
  std::size_t posterior_samples = 500;
  std::size_t cfp_epochs = 2000;
  double cfp_lr = 1e-3;
  double cfp_fairness_weight = 1.0;
  std::size_t workers = 1;

  void validate() const;
  nlohmann::json to_json() const;
  // Missing keys keep their defaults.
  static ExperimentConfig from_json(const nlohmann::json& j);
};

struct ResultRow {
  std::string method;
  std::string metric;
  double mean = 0.0;
  double std = 0.0;
  std::string param;  // sweeps only
  double value = 0.0;

  nlohmann::json to_json() const;
};

// Every method on every repetition. Metrics: rmse and mae (regression) or
// accuracy (classification), mmd and wass averaged over sensitive-value
// pairs, and per-pair mmd_a_b / wass_a_b.
std::vector<ResultRow> run(const ExperimentConfig& config);

// ERM, IRM, CLAIRE-NI, CLAIRE-M and CLAIRE-A.
std::vector<ResultRow> ablation(ExperimentConfig config);

// One run of config.methods per value of param (alpha, K, beta or lambda).
std::vector<ResultRow> sweep(const ExperimentConfig& config, const std::string& param,
                             const std::vector<double>& values);

// Preset method lists and models for the four tables on top of `base`.
ExperimentConfig table_config(int id, const ExperimentConfig& base);

// Scores a trained representation model through the common predictor interface.
class ClairePredictor final : public baselines::Predictor {
 public:
  explicit ClairePredictor(fairrep::ClaireModel model) : model_(std::move(model)) {}
  const fairrep::ClaireModel& model() const { return model_; }
  std::vector<double> predict(const Matrix& x, std::span<const std::size_t> s) const override;
  nlohmann::json to_json() const override { return model_.to_json(); }

 private:
  fairrep::ClaireModel model_;
};

// Any predictor document: baselines by "kind", representation models by "format".
std::unique_ptr<baselines::Predictor> load_predictor(const nlohmann::json& j);

// Lookup helper; throws ValidationError when absent.
const ResultRow& find_row(const std::vector<ResultRow>& rows, const std::string& method, const std::string& metric,
                          std::optional<double> value = std::nullopt);

}  // namespace claire::harness

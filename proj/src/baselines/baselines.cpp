#include "claire/baselines/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "claire/error.hpp"
#include "claire/numerics/adam.hpp"
#include "claire/numerics/linalg.hpp"
#include "claire/numerics/mlp_io.hpp"
#include "claire/numerics/random.hpp"
#include "claire/scm/serialize.hpp"

namespace claire::baselines {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

Matrix select_cols(const Matrix& m, std::span<const std::size_t> cols) {
  Matrix out(m.rows(), cols.size());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < cols.size(); ++c) out(r, c) = m(r, cols[c]);
  }
  return out;
}

Matrix one_hot(std::span<const std::size_t> s, std::size_t k) {
  Matrix out(s.size(), k);
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] >= k) throw ValidationError("sensitive value " + std::to_string(s[i]) + " out of range");
    out(i, s[i]) = 1.0;
  }
  return out;
}

Dataset features_only(const std::vector<std::string>& names, const Matrix& x, std::span<const std::size_t> s,
                      std::size_t num_sensitive) {
  if (x.cols() != names.size()) throw ShapeError("expected " + std::to_string(names.size()) + " feature columns");
  if (s.size() != x.rows()) throw ShapeError("one sensitive value per row required");
  Dataset d;
  d.feature_names = names;
  d.x = x;
  d.s.assign(s.begin(), s.end());
  d.y.assign(x.rows(), 0.0);
  d.num_sensitive = num_sensitive;
  return d;
}

std::string to_string(Link l) { return l == Link::logistic ? "logistic" : "identity"; }

}  // namespace

std::vector<double> LinearModel::predict(const Matrix& x) const {
  if (x.cols() != coefficients.size()) {
    throw ShapeError("linear model expects " + std::to_string(coefficients.size()) + " inputs, got " +
                     std::to_string(x.cols()));
  }
  std::vector<double> out(x.rows(), intercept);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) out[r] += coefficients[c] * x(r, c);
    if (link == Link::logistic) out[r] = sigmoid(out[r]);
  }
  return out;
}

nlohmann::json LinearModel::to_json() const {
  return {{"coefficients", coefficients}, {"intercept", intercept}, {"link", to_string(link)}};
}

LinearModel LinearModel::from_json(const nlohmann::json& j) {
  try {
    LinearModel m;
    m.coefficients = j.at("coefficients").get<std::vector<double>>();
    m.intercept = j.at("intercept").get<double>();
    const auto l = j.at("link").get<std::string>();
    if (l != "identity" && l != "logistic") throw ConfigError("unknown link '" + l + "'");
    m.link = l == "logistic" ? Link::logistic : Link::identity;
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed linear model: ") + e.what());
  }
}

LinearModel fit_logistic(const Matrix& x, std::span<const double> y, const IrlsOptions& options) {
  const std::size_t n = x.rows(), p = x.cols() + 1;
  if (n == 0) throw FitError("logistic fit on an empty design");
  if (y.size() != n) throw ShapeError("logistic fit: target length does not match design rows");
  std::vector<double> beta(p, 0.0);
  std::vector<double> row(p);
  for (std::size_t iter = 0; iter < options.max_iterations; ++iter) {
    Matrix hess(p, p);
    Matrix grad(p, 1);
    for (std::size_t i = 0; i < n; ++i) {
      row[0] = 1.0;
      for (std::size_t c = 1; c < p; ++c) row[c] = x(i, c - 1);
      double eta = 0.0;
      for (std::size_t c = 0; c < p; ++c) eta += beta[c] * row[c];
      const double mu = sigmoid(eta);
      const double w = std::max(mu * (1.0 - mu), 1e-10);
      for (std::size_t a = 0; a < p; ++a) {
        grad[a] += (y[i] - mu) * row[a];
        for (std::size_t b = 0; b <= a; ++b) hess(a, b) += w * row[a] * row[b];
      }
    }
    for (std::size_t a = 0; a < p; ++a) {
      for (std::size_t b = a + 1; b < p; ++b) hess(a, b) = hess(b, a);
    }
    const Matrix step = linalg::cholesky_solve(linalg::cholesky(hess), grad);
    double change = 0.0;
    for (std::size_t c = 0; c < p; ++c) {
      beta[c] += step[c];
      change = std::max(change, std::abs(step[c]));
    }
    if (change < options.tolerance) break;
  }
  LinearModel m;
  m.intercept = beta[0];
  m.coefficients.assign(beta.begin() + 1, beta.end());
  m.link = Link::logistic;
  return m;
}

LinearModel fit_linear(const Matrix& x, std::span<const double> y, Task task) {
  if (task == Task::classification) return fit_logistic(x, y);
  const auto fit = linalg::ols(x, y, true);
  return {fit.coefficients, fit.intercept, Link::identity};
}

std::vector<double> ConstantPredictor::predict(const Matrix& x, std::span<const std::size_t>) const {
  return std::vector<double>(x.rows(), value_);
}

nlohmann::json ConstantPredictor::to_json() const { return {{"kind", "constant"}, {"value", value_}}; }

Matrix with_sensitive_indicators(const Matrix& x, std::span<const std::size_t> s, std::size_t num_sensitive) {
  if (s.size() != x.rows()) throw ShapeError("one sensitive value per row required");
  Matrix out(x.rows(), x.cols() + num_sensitive - 1);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) = x(r, c);
    if (s[r] >= num_sensitive) throw ValidationError("sensitive value " + std::to_string(s[r]) + " out of range");
    if (s[r] > 0) out(r, x.cols() + s[r] - 1) = 1.0;
  }
  return out;
}

LinearPredictor::LinearPredictor(LinearModel model, std::size_t num_sensitive, bool uses_sensitive)
    : model_(std::move(model)), num_sensitive_(num_sensitive), uses_sensitive_(uses_sensitive) {}

std::vector<double> LinearPredictor::predict(const Matrix& x, std::span<const std::size_t> s) const {
  return model_.predict(uses_sensitive_ ? with_sensitive_indicators(x, s, num_sensitive_) : x);
}

nlohmann::json LinearPredictor::to_json() const {
  return {{"kind", uses_sensitive_ ? "full" : "unaware"}, {"num_sensitive", num_sensitive_}, {"model", model_.to_json()}};
}

ConstantPredictor constant_predictor(const Dataset& train) {
  if (train.size() == 0) throw ValidationError("constant predictor needs training targets");
  return ConstantPredictor(std::accumulate(train.y.begin(), train.y.end(), 0.0) / static_cast<double>(train.size()));
}

LinearPredictor full_predictor(const Dataset& train) {
  train.validate();
  const Matrix design = with_sensitive_indicators(train.x, train.s, train.num_sensitive);
  return LinearPredictor(fit_linear(design, train.y, train.task), train.num_sensitive, true);
}

LinearPredictor unaware_predictor(const Dataset& train) {
  train.validate();
  return LinearPredictor(fit_linear(train.x, train.y, train.task), train.num_sensitive, false);
}

void CfpConfig::validate() const {
  if (posterior_samples == 0 || epochs == 0 || hidden == 0) throw ConfigError("CFP counts must be positive");
  if (!(lr > 0.0)) throw ConfigError("CFP learning rate must be positive");
  if (fairness_weight < 0.0) throw ConfigError("CFP fairness weight must be non-negative");
}

nlohmann::json CfpConfig::to_json() const {
  return {{"scm", scm::scm_to_json(scm)},
          {"posterior_samples", posterior_samples},
          {"epochs", epochs},
          {"lr", lr},
          {"fairness_weight", fairness_weight},
          {"hidden", hidden},
          {"seed", seed}};
}

std::vector<std::string> non_descendant_features(const scm::Scm& model, std::span<const std::string> feature_names) {
  const auto& g = model.graph();
  const std::size_t sens = g.sensitive();
  const auto desc = g.descendants(sens);
  std::vector<std::string> out;
  for (const auto& name : feature_names) {
    if (!g.contains(name)) continue;
    const std::size_t v = g.index_of(name);
    if (v == sens || desc[v] || g.nodes()[v].role != scm::NodeRole::observed) continue;
    out.push_back(name);
  }
  return out;
}

CfpUPredictor::CfpUPredictor(CfpConfig config, std::vector<std::string> feature_names, LinearModel model)
    : config_(std::move(config)), feature_names_(std::move(feature_names)), model_(std::move(model)) {
  for (const auto& name : non_descendant_features(config_.scm, feature_names_)) {
    kept_columns_.push_back(static_cast<std::size_t>(
        std::find(feature_names_.begin(), feature_names_.end(), name) - feature_names_.begin()));
  }
  if (config_.scm.graph().nodes_with_role(scm::NodeRole::latent).empty() && kept_columns_.empty()) {
    throw ConfigError("CFP-U has no inputs: the causal model has no latent node and every feature descends from " +
                      config_.scm.graph().nodes()[config_.scm.graph().sensitive()].name);
  }
}

std::vector<std::string> CfpUPredictor::inputs() const {
  std::vector<std::string> out;
  const auto& g = config_.scm.graph();
  for (std::size_t v : g.nodes_with_role(scm::NodeRole::latent)) out.push_back("E[" + g.nodes()[v].name + "]");
  for (std::size_t c : kept_columns_) out.push_back(feature_names_[c]);
  return out;
}

Matrix CfpUPredictor::design(const Matrix& x, std::span<const std::size_t> s) const {
  const Dataset d = features_only(feature_names_, x, s, config_.scm.num_sensitive());
  const Matrix kept = select_cols(x, kept_columns_);
  if (config_.scm.graph().nodes_with_role(scm::NodeRole::latent).empty()) return kept;
  return hcat(scm::posterior_latent_means(config_.scm, d, config_.posterior_samples, config_.seed), kept);
}

std::vector<double> CfpUPredictor::predict(const Matrix& x, std::span<const std::size_t> s) const {
  return model_.predict(design(x, s));
}

nlohmann::json CfpUPredictor::to_json() const {
  return {{"kind", "cfp_u"},
          {"config", config_.to_json()},
          {"feature_names", feature_names_},
          {"inputs", inputs()},
          {"model", model_.to_json()}};
}

CfpUPredictor cfp_u(const CfpConfig& config, const Dataset& train) {
  config.validate();
  train.validate();
  CfpUPredictor shell(config, train.feature_names, {});
  const Matrix design = shell.design(train.x, train.s);
  return CfpUPredictor(config, train.feature_names, fit_linear(design, train.y, train.task));
}

CfpOPredictor::CfpOPredictor(CfpConfig config, std::size_t num_sensitive, Task task, Mlp net)
    : config_(std::move(config)), num_sensitive_(num_sensitive), task_(task), net_(std::move(net)) {
  if (net_.output_dim() != 1) throw ShapeError("CFP-O network must have one output");
}

std::vector<double> CfpOPredictor::predict(const Matrix& x, std::span<const std::size_t> s) const {
  if (s.size() != x.rows()) throw ShapeError("one sensitive value per row required");
  return net_.forward(hcat(x, one_hot(s, num_sensitive_))).column_vector(0);
}

nlohmann::json CfpOPredictor::to_json() const {
  return {{"kind", "cfp_o"},
          {"config", config_.to_json()},
          {"num_sensitive", num_sensitive_},
          {"task", to_string(task_)},
          {"network", mlp_to_json(net_)}};
}

CfpOPredictor cfp_o(const CfpConfig& config, const Dataset& train) {
  config.validate();
  train.validate();
  const std::size_t n = train.size(), k = train.num_sensitive;
  if (k < 2) throw ConfigError("CFP-O needs at least two sensitive values");
  if (config.scm.num_sensitive() != k) throw ConfigError("causal model and data disagree on the sensitive values");

  Rng rng(derive_seed(config.seed, 0));
  const auto link = train.task == Task::classification ? OutputActivation::sigmoid : OutputActivation::identity;
  Mlp net({train.dim() + k, config.hidden, 1, link, 0.01}, rng);

  const Matrix inputs = hcat(train.x, one_hot(train.s, k));
  const Matrix target = train.y_column();
  std::vector<Matrix> cf_inputs, masks;
  if (config.fairness_weight > 0.0) {
    for (std::size_t sp = 0; sp < k; ++sp) {
      const Dataset cf = scm::counterfactual_dataset(config.scm, train, sp, config.posterior_samples,
                                                     derive_seed(config.seed, 1 + sp));
      cf_inputs.push_back(hcat(cf.x, one_hot(std::vector<std::size_t>(n, sp), k)));
      Matrix mask(n, 1);
      for (std::size_t i = 0; i < n; ++i) mask[i] = train.s[i] == sp ? 0.0 : 1.0;
      masks.push_back(std::move(mask));
    }
  }

  Adam opt({config.lr});
  auto params = net.parameters();
  const double pair_norm = 1.0 / (static_cast<double>(n) * static_cast<double>(k - 1));
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    ad::Tape tape;
    const ad::Var logits = net.logits(tape, tape.constant(inputs));
    ad::Var loss = train.task == Task::regression
                       ? ad::mean(ad::square(ad::sub(logits, tape.constant(target))))
                       : ad::mean(ad::bce_with_logits(logits, target));
    if (config.fairness_weight > 0.0) {
      const ad::Var f = apply_output_activation(logits, link);
      ad::Var gap;
      for (std::size_t sp = 0; sp < k; ++sp) {
        const ad::Var f_cf = net.forward(tape, tape.constant(cf_inputs[sp]));
        const ad::Var term = ad::sum(ad::mul(ad::abs(ad::sub(f_cf, f)), tape.constant(masks[sp])));
        gap = sp == 0 ? term : ad::add(gap, term);
      }
      loss = ad::add(loss, ad::scale(gap, config.fairness_weight * pair_norm));
    }
    tape.backward(loss);
    opt.step(params);
    Adam::zero_grad(params);
  }
  return CfpOPredictor(config, k, train.task, std::move(net));
}

std::unique_ptr<Predictor> predictor_from_json(const nlohmann::json& j) {
  try {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "constant") return std::make_unique<ConstantPredictor>(j.at("value").get<double>());
    if (kind == "full" || kind == "unaware") {
      return std::make_unique<LinearPredictor>(LinearModel::from_json(j.at("model")),
                                               j.at("num_sensitive").get<std::size_t>(), kind == "full");
    }
    if (kind == "cfp_u" || kind == "cfp_o") {
      const auto& c = j.at("config");
      CfpConfig cfg{scm::scm_from_json(c.at("scm"))};
      cfg.posterior_samples = c.at("posterior_samples").get<std::size_t>();
      cfg.epochs = c.at("epochs").get<std::size_t>();
      cfg.lr = c.at("lr").get<double>();
      cfg.fairness_weight = c.at("fairness_weight").get<double>();
      cfg.hidden = c.at("hidden").get<std::size_t>();
      cfg.seed = c.at("seed").get<std::uint64_t>();
      if (kind == "cfp_u") {
        return std::make_unique<CfpUPredictor>(std::move(cfg), j.at("feature_names").get<std::vector<std::string>>(),
                                               LinearModel::from_json(j.at("model")));
      }
      return std::make_unique<CfpOPredictor>(std::move(cfg), j.at("num_sensitive").get<std::size_t>(),
                                             task_from_string(j.at("task").get<std::string>()),
                                             mlp_from_json(j.at("network")));
    }
    throw ConfigError("unknown predictor kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed predictor document: ") + e.what());
  }
}

}  // namespace claire::baselines

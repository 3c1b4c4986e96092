#include "claire/fairrep/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "claire/error.hpp"
#include "claire/numerics/adam.hpp"
#include "claire/numerics/mlp_io.hpp"
#include "claire/numerics/random.hpp"

namespace claire::fairrep {

namespace {

OutputActivation link_for(Task task) {
  return task == Task::classification ? OutputActivation::sigmoid : OutputActivation::identity;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double bce(double z, double y) { return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z))); }

}  // namespace

void HyperParams::validate() const {
  if (alpha < 0.0 || alpha_prime < 0.0) throw ConfigError("alpha and alpha_prime must be non-negative");
  if (beta < 0.0 || lambda < 0.0) throw ConfigError("beta and lambda must be non-negative");
  if (k < 1) throw ConfigError("K must be at least 1");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (hidden < 1 || rep_dim < 1) throw ConfigError("network widths must be positive");
}

nlohmann::json HyperParams::to_json() const {
  return {{"alpha", alpha},   {"alpha_prime", alpha_prime}, {"beta", beta},       {"lambda", lambda},
          {"K", k},           {"epochs", epochs},           {"lr", lr},           {"hidden", hidden},
          {"rep_dim", rep_dim}, {"seed", seed},             {"select_best_epoch", select_best_epoch}};
}

HyperParams HyperParams::from_json(const nlohmann::json& j) {
  HyperParams hp;
  try {
    hp.alpha = j.value("alpha", hp.alpha);
    hp.alpha_prime = j.value("alpha_prime", hp.alpha_prime);
    hp.beta = j.value("beta", hp.beta);
    hp.lambda = j.value("lambda", hp.lambda);
    hp.k = j.value("K", hp.k);
    hp.epochs = j.value("epochs", hp.epochs);
    hp.lr = j.value("lr", hp.lr);
    hp.hidden = j.value("hidden", hp.hidden);
    hp.rep_dim = j.value("rep_dim", hp.rep_dim);
    hp.seed = j.value("seed", hp.seed);
    hp.select_best_epoch = j.value("select_best_epoch", hp.select_best_epoch);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed hyperparameters: ") + e.what());
  }
  hp.validate();
  return hp;
}

ClaireModel::ClaireModel(std::size_t features, Task task, const HyperParams& hp, Rng& rng)
    : task_(task),
      phi_({features, hp.hidden, hp.rep_dim, OutputActivation::identity, 0.01}, rng),
      g_({hp.rep_dim, hp.hidden, 1, link_for(task), 0.01}, rng) {}

ClaireModel::ClaireModel(Task task, Mlp phi, Mlp g) : task_(task), phi_(std::move(phi)), g_(std::move(g)) {
  if (phi_.output_dim() != g_.input_dim()) throw ShapeError("representation width does not match the predictor");
  if (g_.output_dim() != 1) throw ShapeError("predictor must have one output");
  if (g_.config().output_activation != link_for(task)) throw ConfigError("predictor output does not match the task");
}

Matrix ClaireModel::represent(const Matrix& x) const { return phi_.forward(x); }

std::vector<double> ClaireModel::predict(const Matrix& x) const {
  if (x.cols() != features()) {
    throw ShapeError("model expects " + std::to_string(features()) + " features, got " + std::to_string(x.cols()));
  }
  return g_.forward(phi_.forward(x)).column_vector(0);
}

ad::Var ClaireModel::represent(ad::Tape& tape, ad::Var x) { return phi_.forward(tape, x); }

ad::Var ClaireModel::output(ad::Tape& tape, ad::Var z) { return g_.logits(tape, z); }

std::vector<ad::Parameter*> ClaireModel::parameters() {
  auto p = phi_.parameters();
  for (auto* q : g_.parameters()) p.push_back(q);
  return p;
}

nlohmann::json ClaireModel::to_json() const {
  return {{"format", "claire-model/1"}, {"task", to_string(task_)}, {"phi", mlp_to_json(phi_)}, {"g", mlp_to_json(g_)}};
}

ClaireModel ClaireModel::from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", std::string()) != "claire-model/1") throw ConfigError("not a model weight document");
    return ClaireModel(task_from_string(j.at("task").get<std::string>()), mlp_from_json(j.at("phi")),
                       mlp_from_json(j.at("g")));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed model document: ") + e.what());
  }
}

ad::Var cf_constraint(ad::Var z, std::span<const ad::Var> z_cf, std::span<const std::size_t> s) {
  const std::size_t k = z_cf.size();
  const std::size_t n = z.rows();
  if (k < 2) throw ValidationError("counterfactual constraint needs at least two sensitive values");
  if (s.size() != n) throw ShapeError("one sensitive value per row required");
  if (n == 0) throw ValidationError("counterfactual constraint over no instances");
  ad::Tape& tape = *z.tape();
  ad::Var total;
  for (std::size_t sp = 0; sp < k; ++sp) {
    Matrix mask(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
      if (s[i] >= k) throw ValidationError("sensitive value out of range");
      mask[i] = s[i] == sp ? 0.0 : 1.0;
    }
    const ad::Var d = ad::sum(ad::mul(ad::cosine_distance_rows(z, z_cf[sp]), tape.constant(std::move(mask))));
    total = sp == 0 ? d : ad::add(total, d);
  }
  return ad::scale(total, 1.0 / (static_cast<double>(n) * static_cast<double>(k - 1)));
}

IrmTerms irm_terms(ad::Var output, std::span<const double> y, Task task) {
  if (output.rows() == 0) throw ValidationError("invariance penalty of an empty subgroup");
  if (output.rows() != y.size() || output.cols() != 1) throw ShapeError("one output per target required");
  ad::Tape& tape = *output.tape();
  const Matrix target = Matrix::column(y);
  ad::Var risk, derivative;
  if (task == Task::regression) {
    const ad::Var diff = ad::sub(output, tape.constant(target));
    risk = ad::mean(ad::square(diff));
    derivative = ad::scale(ad::mean(ad::mul(diff, output)), 2.0);
  } else {
    risk = ad::mean(ad::bce_with_logits(output, target));
    derivative = ad::mean(ad::mul(ad::sub(ad::sigmoid(output), tape.constant(target)), output));
  }
  return {risk, ad::square(derivative)};
}

IrmValue irm_penalty(const ClaireModel& model, const Matrix& x, std::span<const double> y) {
  if (x.rows() == 0) throw ValidationError("invariance penalty of an empty subgroup");
  if (x.rows() != y.size()) throw ShapeError("features and targets differ in length");
  const Matrix f = model.g().logits(model.represent(x));
  double risk = 0.0, d = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (model.task() == Task::regression) {
      risk += (f[i] - y[i]) * (f[i] - y[i]);
      d += 2.0 * (f[i] - y[i]) * f[i];
    } else {
      risk += bce(f[i], y[i]);
      d += (sigmoid(f[i]) - y[i]) * f[i];
    }
  }
  const double n = static_cast<double>(y.size());
  return {risk / n, d / n, (d / n) * (d / n)};
}

ad::Var total_loss(ad::Tape& tape, ClaireModel& model, const Dataset& data, const augment::AugmentedSet& augmented,
                   const HyperParams& hp) {
  if (data.dim() != model.features()) throw ShapeError("dataset does not match the model");
  const auto groups = data.groups();
  for (std::size_t s = 0; s < groups.size(); ++s) {
    if (groups[s].empty()) throw ValidationError("sensitive subgroup " + std::to_string(s) + " is empty");
  }
  const ad::Var z = model.represent(tape, tape.constant(data.x));
  const ad::Var out = model.output(tape, z);
  ad::Var sum;
  for (std::size_t s = 0; s < groups.size(); ++s) {
    std::vector<double> yg;
    yg.reserve(groups[s].size());
    for (std::size_t i : groups[s]) yg.push_back(data.y[i]);
    const IrmTerms t = irm_terms(ad::gather_rows(out, groups[s]), yg, data.task);
    const ad::Var term = hp.lambda > 0.0 ? ad::add(t.risk, ad::scale(t.penalty, hp.lambda)) : t.risk;
    sum = s == 0 ? term : ad::add(sum, term);
  }
  ad::Var loss = ad::scale(sum, 1.0 / static_cast<double>(groups.size()));
  if (hp.beta > 0.0) {
    if (augmented.num_sensitive() != data.num_sensitive || augmented.size() != data.size()) {
      throw ShapeError("augmented counterfactuals do not match the dataset");
    }
    std::vector<ad::Var> z_cf;
    for (const auto& xs : augmented.x) z_cf.push_back(model.represent(tape, tape.constant(xs)));
    loss = ad::add(loss, ad::scale(cf_constraint(z, z_cf, data.s), hp.beta));
  }
  return loss;
}

double risk(const ClaireModel& model, const Dataset& data) {
  if (data.size() == 0) throw ValidationError("risk of an empty dataset");
  const Matrix f = model.g().logits(model.represent(data.x));
  double r = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    r += model.task() == Task::regression ? (f[i] - data.y[i]) * (f[i] - data.y[i]) : bce(f[i], data.y[i]);
  }
  return r / static_cast<double>(data.size());
}

Trained train(const Dataset& data, const augment::AugmentedSet& augmented, const HyperParams& hp,
              const Dataset* validation) {
  hp.validate();
  data.validate();
  if (hp.select_best_epoch && validation == nullptr) {
    throw ConfigError("best-epoch selection needs a validation set");
  }
  Rng rng(derive_seed(hp.seed, 0));
  Trained out{ClaireModel(data.dim(), data.task, hp, rng), {}, hp.epochs - 1};
  auto params = out.model.parameters();
  Adam opt({hp.lr});
  std::optional<ClaireModel> best;
  double best_risk = 0.0;
  for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
    ad::Tape tape;
    ad::Var loss;
    try {
      loss = total_loss(tape, out.model, data, augmented, hp);
      tape.backward(loss);
    } catch (const NumericError& e) {
      throw NumericError("training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
    }
    out.loss.push_back(loss.scalar());
    opt.step(params);
    Adam::zero_grad(params);
    if (hp.select_best_epoch) {
      const double r = risk(out.model, *validation);
      if (!best || r < best_risk) {
        best = out.model;
        best_risk = r;
        out.best_epoch = epoch;
      }
    }
  }
  if (best) out.model = std::move(*best);
  return out;
}

}  // namespace claire::fairrep

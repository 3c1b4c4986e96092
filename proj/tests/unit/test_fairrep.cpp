#include <cmath>
#include <numeric>

#include "../support/gradcheck.hpp"
#include "../support/synthetic.hpp"
#include "claire/error.hpp"
#include "claire/fairrep/model.hpp"
#include "claire/metrics/metrics.hpp"
#include "doctest.h"

using namespace claire;
using namespace claire::fairrep;

namespace {

// phi arbitrary, g ignoring its input and returning `value` before the link.
ClaireModel constant_model(double value, Task task, std::size_t features = 2) {
  Rng rng(1);
  Mlp phi({features, 4, 3, OutputActivation::identity, 0.01}, rng);
  std::vector<Mlp::Layer> layers;
  layers.push_back({ad::Parameter(Matrix(3, 4)), ad::Parameter(Matrix(1, 4))});
  layers.push_back({ad::Parameter(Matrix(4, 1)), ad::Parameter(Matrix::from_rows({{value}}))});
  const auto link = task == Task::regression ? OutputActivation::identity : OutputActivation::sigmoid;
  return ClaireModel(task, std::move(phi), Mlp({3, 4, 1, link, 0.01}, std::move(layers)));
}

double cf_value(const Matrix& z, const std::vector<Matrix>& z_cf, const std::vector<std::size_t>& s) {
  ad::Tape t;
  std::vector<ad::Var> cf;
  for (const auto& m : z_cf) cf.push_back(t.constant(m));
  return cf_constraint(t.constant(z), cf, s).scalar();
}

Dataset toy(std::size_t n, std::uint64_t seed, Task task) {
  Rng rng(seed);
  Dataset d;
  d.feature_names = {"a", "b", "c"};
  d.x = rng.normal_matrix(n, 3);
  d.num_sensitive = 3;
  d.task = task;
  for (std::size_t i = 0; i < n; ++i) {
    d.s.push_back((i * 5) % 3);
    const double v = d.x(i, 0) + 0.5 * d.x(i, 2) - 0.2 * static_cast<double>(d.s.back());
    d.y.push_back(task == Task::regression ? v : (v > 0 ? 1.0 : 0.0));
  }
  return d;
}

augment::AugmentedSet shifted_copies(const Dataset& d) {
  augment::AugmentedSet a;
  for (std::size_t s = 0; s < d.num_sensitive; ++s) {
    Matrix x = d.x;
    for (std::size_t i = 0; i < x.rows(); ++i) x(i, 1) += 0.4 * (static_cast<double>(s) - static_cast<double>(d.s[i]));
    a.x.push_back(std::move(x));
    a.y.push_back(d.y);
  }
  return a;
}

}  // namespace

TEST_CASE("counterfactual constraint") {
  const std::vector<std::size_t> s{0};
  SUBCASE("orthogonal and opposite representations") {
    const Matrix z = Matrix::from_rows({{1.0, 0.0}});
    CHECK(cf_value(z, {z, Matrix::from_rows({{0.0, 1.0}})}, s) == doctest::Approx(1.0));
    CHECK(cf_value(z, {z, Matrix::from_rows({{-1.0, 0.0}})}, s) == doctest::Approx(2.0));
  }
  SUBCASE("counterfactuals equal to the originals") {
    Rng rng(2);
    const Matrix z = rng.normal_matrix(10, 4);
    const std::vector<std::size_t> groups{0, 1, 2, 0, 1, 2, 0, 1, 2, 0};
    CHECK(cf_value(z, {z, z, z}, groups) == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("own-group entries are excluded and the rest averaged") {
    // Row 0 (s=0): distances 1 (s'=1) and 2 (s'=2); row 1 (s=2): 0 (s'=0) and 1 (s'=1).
    const Matrix z = Matrix::from_rows({{1.0, 0.0}, {0.0, 1.0}});
    const Matrix c0 = Matrix::from_rows({{-5.0, 0.0}, {0.0, 3.0}});
    const Matrix c1 = Matrix::from_rows({{0.0, 2.0}, {1.0, 0.0}});
    const Matrix c2 = Matrix::from_rows({{-1.0, 0.0}, {0.0, -1.0}});
    CHECK(cf_value(z, {c0, c1, c2}, {0, 2}) == doctest::Approx((1.5 + 0.5) / 2.0));
  }
  SUBCASE("always within [0, 2]") {
    Rng rng(3);
    for (int rep = 0; rep < 20; ++rep) {
      const Matrix z = rng.normal_matrix(15, 3);
      std::vector<std::size_t> groups(15);
      for (auto& g : groups) g = rng.index(4);
      const double v = cf_value(z, {rng.normal_matrix(15, 3), rng.normal_matrix(15, 3), rng.normal_matrix(15, 3),
                                    rng.normal_matrix(15, 3)},
                                groups);
      CHECK(v >= 0.0);
      CHECK(v <= 2.0);
    }
  }
  SUBCASE("zero representation counts as orthogonal") {
    const Matrix z = Matrix::from_rows({{0.0, 0.0}});
    CHECK(cf_value(z, {z, Matrix::from_rows({{3.0, 1.0}})}, s) == 1.0);
  }
}

TEST_CASE("invariance penalty") {
  const Matrix x(2, 2);
  const std::vector<double> y{0.0, 2.0};
  SUBCASE("constant 2 on targets {0, 2}") {
    const auto v = irm_penalty(constant_model(2.0, Task::regression), x, y);
    CHECK(v.derivative == doctest::Approx(4.0));
    CHECK(v.penalty == doctest::Approx(16.0));
    CHECK(v.risk == doctest::Approx(2.0));
  }
  SUBCASE("constant 1 sits at the subgroup optimum") {
    const auto v = irm_penalty(constant_model(1.0, Task::regression), x, y);
    CHECK(v.derivative == 0.0);
    CHECK(v.penalty == 0.0);
  }
  SUBCASE("perfect predictor") {
    ad::Tape t;
    const auto terms = irm_terms(t.constant(Matrix::column(y)), y, Task::regression);
    CHECK(terms.risk.scalar() == 0.0);
    CHECK(terms.penalty.scalar() == 0.0);
  }
  SUBCASE("derivative agrees with finite differences in the output multiplier") {
    Rng rng(7);
    const std::vector<double> f{0.3, -1.2, 2.5, 0.8, -0.4};
    const std::vector<double> yr{0.1, -1.0, 1.5, 1.0, 0.0};
    const std::vector<double> yc{1.0, 0.0, 1.0, 0.0, 0.0};
    auto risk_at = [&](double w, Task task) {
      double r = 0.0;
      for (std::size_t i = 0; i < f.size(); ++i) {
        const double z = w * f[i];
        r += task == Task::regression ? (z - yr[i]) * (z - yr[i])
                                      : -(yc[i] * std::log(1.0 / (1.0 + std::exp(-z))) +
                                          (1.0 - yc[i]) * std::log(1.0 - 1.0 / (1.0 + std::exp(-z))));
      }
      return r / static_cast<double>(f.size());
    };
    for (Task task : {Task::regression, Task::classification}) {
      const double h = 1e-5;
      const double fd = (risk_at(1.0 + h, task) - risk_at(1.0 - h, task)) / (2.0 * h);
      ad::Tape t;
      const auto terms = irm_terms(t.constant(Matrix::column(f)), task == Task::regression ? yr : yc, task);
      const double d = std::sqrt(terms.penalty.scalar());
      CHECK(testing::relative_error(d, std::abs(fd)) < 1e-5);
    }
  }
  SUBCASE("empty subgroup") {
    ad::Tape t;
    CHECK_THROWS_AS(irm_terms(t.constant(Matrix(0, 1)), {}, Task::regression), ValidationError);
  }
}

TEST_CASE("total loss") {
  const Dataset d = toy(30, 4, Task::regression);
  const auto aug = shifted_copies(d);
  SUBCASE("without penalties it is the subgroup-uniform risk") {
    Rng rng(5);
    HyperParams hp;
    hp.beta = 0.0;
    hp.lambda = 0.0;
    ClaireModel m(3, Task::regression, hp, rng);
    const auto pred = m.predict(d.x);
    std::vector<double> sums(3), counts(3);
    for (std::size_t i = 0; i < d.size(); ++i) {
      sums[d.s[i]] += (pred[i] - d.y[i]) * (pred[i] - d.y[i]);
      counts[d.s[i]] += 1.0;
    }
    const double want = (sums[0] / counts[0] + sums[1] / counts[1] + sums[2] / counts[2]) / 3.0;
    ad::Tape t;
    CHECK(total_loss(t, m, d, aug, hp).scalar() == doctest::Approx(want).epsilon(1e-12));
  }
  SUBCASE("duplicating one subgroup leaves the loss unchanged") {
    Rng rng(5);
    HyperParams hp;
    hp.beta = 0.0;
    ClaireModel m(3, Task::regression, hp, rng);
    std::vector<std::size_t> rows(d.size());
    std::iota(rows.begin(), rows.end(), 0);
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (d.s[i] == 1) rows.push_back(i);
    }
    const Dataset doubled = d.subset(rows);
    ad::Tape t1, t2;
    CHECK(total_loss(t1, m, doubled, {}, hp).scalar() ==
          doctest::Approx(total_loss(t2, m, d, aug, hp).scalar()).epsilon(1e-12));
  }
  SUBCASE("gradients match finite differences") {
    for (Task task : {Task::regression, Task::classification}) {
      const Dataset dt = toy(24, 6, task);
      const auto at = shifted_copies(dt);
      Rng rng(9);
      HyperParams hp;
      hp.hidden = 6;
      hp.rep_dim = 4;
      ClaireModel m(3, task, hp, rng);
      auto build = [&](ad::Tape& t) { return total_loss(t, m, dt, at, hp); };
      CHECK(testing::gradient_check(build, m.parameters(), 100, 11).max_rel_error < 1e-4);
    }
  }
  SUBCASE("an empty subgroup is rejected") {
    Dataset e = d;
    for (auto& s : e.s) s = s == 2 ? 1 : s;
    Rng rng(5);
    ClaireModel m(3, Task::regression, {}, rng);
    ad::Tape t;
    CHECK_THROWS_AS(total_loss(t, m, e, aug, {}), ValidationError);
  }
}

TEST_CASE("training and prediction") {
  const Dataset d = toy(60, 8, Task::regression);
  const auto aug = shifted_copies(d);
  HyperParams hp;
  hp.epochs = 40;
  hp.seed = 3;
  SUBCASE("deterministic given the seed") {
    const auto a = train(d, aug, hp), b = train(d, aug, hp);
    CHECK(a.loss == b.loss);
    CHECK(a.model.predict(d.x) == b.model.predict(d.x));
    CHECK(a.best_epoch == 39);
  }
  SUBCASE("predictions are finite and row-deterministic") {
    const auto tr = train(d, aug, hp);
    Matrix x = d.x;
    for (std::size_t c = 0; c < 3; ++c) x(1, c) = x(0, c);
    const auto p = tr.model.predict(x);
    CHECK(p[0] == p[1]);
    for (double v : p) CHECK(std::isfinite(v));
    CHECK_THROWS_AS(tr.model.predict(Matrix(2, 4)), ShapeError);
  }
  SUBCASE("classification outputs probabilities") {
    const Dataset c = toy(60, 8, Task::classification);
    const auto tr = train(c, shifted_copies(c), hp);
    for (double v : tr.model.predict(c.x)) CHECK((v > 0.0 && v < 1.0));
  }
  SUBCASE("best-epoch selection") {
    HyperParams sel = hp;
    sel.select_best_epoch = true;
    CHECK_THROWS_AS(train(d, aug, sel), ConfigError);
    const Dataset val = toy(20, 9, Task::regression);
    const auto tr = train(d, aug, sel, &val);
    CHECK(tr.best_epoch < sel.epochs);
    CHECK(risk(tr.model, val) <= risk(train(d, aug, hp).model, val) + 1e-12);
  }
  SUBCASE("divergence names the epoch") {
    Dataset bad = d;
    for (auto& y : bad.y) y = 1e200;
    try {
      train(bad, aug, hp);
      FAIL("expected a numeric error");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("epoch 0") != std::string::npos);
    }
  }
  SUBCASE("weights and hyperparameters round-trip") {
    const auto tr = train(d, aug, hp);
    const auto back = ClaireModel::from_json(tr.model.to_json());
    CHECK(back.predict(d.x) == tr.model.predict(d.x));
    CHECK(HyperParams::from_json(hp.to_json()).to_json() == hp.to_json());
    nlohmann::json j = hp.to_json();
    j["K"] = 0;
    CHECK_THROWS_AS(HyperParams::from_json(j), ConfigError);
  }
}

TEST_CASE("unconstrained training fits the training split at least as well" * doctest::test_suite("slow")) {
  const Dataset d = testing::standardized_synthetic(1000, 5);
  augment::TrainConfig vc;
  vc.epochs = 200;
  const auto vae = augment::train_claire_m(d, vc);
  const auto aug = augment::generate_counterfactuals(vae.vae, d, 20, 1);
  HyperParams erm;
  erm.beta = 0.0;
  erm.lambda = 0.0;
  const HyperParams full;
  const double erm_rmse = metrics::rmse(train(d, aug, erm).model.predict(d.x), d.y);
  const double full_rmse = metrics::rmse(train(d, aug, full).model.predict(d.x), d.y);
  MESSAGE("ERM " << erm_rmse << ", CLAIRE " << full_rmse);
  CHECK(erm_rmse <= full_rmse);
}

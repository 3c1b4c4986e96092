#include <cmath>
#include <optional>

#include "claire/error.hpp"
#include "claire/numerics/linalg.hpp"
#include "claire/numerics/random.hpp"
#include "claire/scm/serialize.hpp"
#include "claire/scm/models.hpp"
#include "claire/scm/scm.hpp"
#include "doctest.h"

using namespace claire;
using namespace claire::scm;

namespace {

SyntheticParams noiseless() {
  SyntheticParams p;
  p.noise_std = {0.0, 0.0, 0.0, 0.0};
  return p;
}

// Slope and intercept from the closed-form simple regression formulas.
std::pair<double, double> simple_regression(std::span<const double> x, std::span<const double> y) {
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= x.size();
  my /= y.size();
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return {sxy / sxx, my - sxy / sxx * mx};
}

}  // namespace

TEST_CASE("graph and model validation") {
  SUBCASE("synthetic model is valid") { CHECK_NOTHROW(validate(claire_synthetic())); }
  SUBCASE("sensitive node with a parent is rejected") {
    CausalGraph g = claire_synthetic().graph();
    g.add_edge("X1", "S");
    CHECK_THROWS_AS(g.validate(), ValidationError);
  }
  SUBCASE("two-node cycle") {
    CausalGraph g;
    g.add_node("S", NodeRole::sensitive);
    g.add_node("A", NodeRole::observed);
    g.add_node("B", NodeRole::target);
    g.add_edge("A", "B");
    g.add_edge("B", "A");
    try {
      g.validate();
      FAIL("expected a cycle error");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("cycle") != std::string::npos);
    }
  }
  SUBCASE("orphan mechanism") {
    const Scm truth = claire_synthetic();
    auto mechs = truth.mechanisms();
    mechs.pop_back();
    CHECK_THROWS_AS(Scm(truth.graph(), mechs), ValidationError);
  }
  SUBCASE("coefficient count must match parents") {
    const Scm truth = claire_synthetic();
    auto mechs = truth.mechanisms();
    mechs[4] = LinearGaussian{{1.0}, 0.0, 1.0};
    CHECK_THROWS_AS(Scm(truth.graph(), mechs), ValidationError);
  }
  SUBCASE("probabilities must sum to one") {
    const Scm truth = claire_synthetic();
    auto mechs = truth.mechanisms();
    mechs[0] = CategoricalRoot{{0.5, 0.6}};
    CHECK_THROWS_AS(Scm(truth.graph(), mechs), ValidationError);
  }
}

TEST_CASE("synthetic model parameters") {
  const Scm m = claire_synthetic();
  const auto pi = m.sensitive_probabilities();
  const std::vector<double> want{0.5, 0.4, 0.05, 0.05};
  CHECK(std::vector<double>(pi.begin(), pi.end()) == want);
  const auto& g = m.graph();
  CHECK(m.noise_std(g.index_of("U"), 0) == 1.0);
  CHECK(m.noise_std(g.index_of("X0"), 3) == 1.0);
  CHECK(g.edges().size() == 5);
  for (auto [a, b] : {std::pair{"S", "X1"}, {"U", "X1"}, {"X1", "Y"}, {"X0", "Y"}, {"Y", "X2"}}) {
    CHECK(g.has_edge(a, b));
  }
  CHECK(m.feature_names() == std::vector<std::string>{"X0", "X1", "X2"});
}

TEST_CASE("ancestral sampling") {
  SUBCASE("category frequencies") {
    const auto rec = sample(claire_synthetic(), 1000000, 7);
    std::vector<double> freq(4, 0.0);
    for (std::size_t s : rec.data.s) freq[s] += 1.0;
    const std::vector<double> pi{0.5, 0.4, 0.05, 0.05};
    for (std::size_t k = 0; k < 4; ++k) CHECK(std::abs(freq[k] / 1e6 - pi[k]) < 0.005);
  }
  SUBCASE("zero noise with S fixed to 0 gives Y = U + X0") {
    const Scm m = claire_synthetic(noiseless());
    const auto rec = sample(m, 200, 3, {.fixed_sensitive = 0});
    const auto& g = m.graph();
    for (std::size_t i = 0; i < 200; ++i) {
      const double u = rec.values(i, g.index_of("U"));
      const double x0 = rec.values(i, g.index_of("X0"));
      CHECK(rec.data.y[i] == doctest::Approx(u + x0).epsilon(1e-14));
      CHECK(rec.noise(i, g.index_of("Y")) == 0.0);
    }
  }
  SUBCASE("regressing Y on X0 and X1 recovers unit coefficients") {
    const auto d = sample(claire_synthetic(), 100000, 11).data;
    const auto fit = linalg::ols(slice_cols(d.x, 0, 2), d.y);
    CHECK(std::abs(fit.coefficients[0] - 1.0) < 0.02);
    CHECK(std::abs(fit.coefficients[1] - 1.0) < 0.02);
  }
  SUBCASE("same seed, same data") {
    const Scm m = claire_synthetic();
    CHECK(sample(m, 50, 9).values == sample(m, 50, 9).values);
    CHECK_FALSE(sample(m, 50, 9).values == sample(m, 50, 10).values);
  }
  SUBCASE("stored noise reproduces the values") {
    const Scm m = claire_synthetic();
    const auto rec = sample(m, 100, 5);
    const std::size_t x1 = m.graph().index_of("X1");
    for (std::size_t i = 0; i < 100; ++i) {
      const std::size_t s = rec.data.s[i];
      const std::vector<double> w{0.1, 0.2, 1.0, 2.0};
      const double u = rec.values(i, m.graph().index_of("U"));
      CHECK(rec.values(i, x1) == doctest::Approx(w[s] * s + u + rec.noise(i, x1)));
    }
  }
}

TEST_CASE("fitting linear models") {
  SUBCASE("slope 2 with small noise") {
    CausalGraph g;
    g.add_node("S", NodeRole::sensitive);
    g.add_node("X", NodeRole::observed);
    g.add_node("Y", NodeRole::target);
    g.add_edge("X", "Y");
    std::vector<Mechanism> m{CategoricalRoot{{0.5, 0.5}}, LinearGaussian{{}, 0.0, 1.0},
                             LinearGaussian{{2.0}, 0.0, 0.1}};
    const auto d = sample(Scm(g, m), 100000, 21).data;
    const Scm fitted = fit_linear_scm(g, d);
    const auto& y = std::get<LinearGaussian>(fitted.mechanism(2));
    const auto [slope, icpt] = simple_regression(d.x.column_vector(0), d.y);
    CHECK(std::abs(y.coefficients[0] - 2.0) < 0.01);
    CHECK(y.coefficients[0] == doctest::Approx(slope).epsilon(1e-9));
    CHECK(y.intercept == doctest::Approx(icpt).epsilon(1e-6));
    CHECK(std::abs(y.noise_std - 0.1) < 0.005);
    const auto& s = std::get<CategoricalRoot>(fitted.mechanism(0));
    CHECK(std::abs(s.probabilities[0] - 0.5) < 0.01);
  }
  SUBCASE("regressions of the linear chain with a downstream proxy") {
    // X1 = S + U + e1, Y = X1 + X3 + eY, X2 = Y + e2
    const double sy = 1.5, s2 = 0.7;
    CausalGraph g;
    g.add_node("S", NodeRole::sensitive);
    g.add_node("U", NodeRole::latent);
    g.add_node("X1", NodeRole::observed);
    g.add_node("X3", NodeRole::observed);
    g.add_node("Y", NodeRole::target);
    g.add_node("X2", NodeRole::observed);
    g.add_edge("S", "X1");
    g.add_edge("U", "X1");
    g.add_edge("X1", "Y");
    g.add_edge("X3", "Y");
    g.add_edge("Y", "X2");
    std::vector<Mechanism> m{CategoricalRoot{{0.5, 0.5}},
                             LinearGaussian{{}, 0.0, 1.0},
                             LinearGaussian{{1.0, 1.0}, 0.0, 1.0},
                             LinearGaussian{{}, 0.0, 1.0},
                             LinearGaussian{{1.0, 1.0}, 0.0, sy},
                             LinearGaussian{{1.0}, 0.0, s2}};
    const auto d = sample(Scm(g, m), 100000, 31).data;
    // columns: X1, X3, X2
    const auto on_x3 = linalg::ols(slice_cols(d.x, 1, 2), d.y);
    CHECK(std::abs(on_x3.coefficients[0] - 1.0) < 0.02);
    const auto on_x1_x3 = linalg::ols(slice_cols(d.x, 0, 2), d.y);
    CHECK(std::abs(on_x1_x3.coefficients[0] - 1.0) < 0.02);
    CHECK(std::abs(on_x1_x3.coefficients[1] - 1.0) < 0.02);
    // Fitting the proxy as a parent of Y.
    const Scm m1 = fit_linear_scm(variant_graph(g, Variant::reversed_child), d);
    const auto& y = std::get<LinearGaussian>(m1.mechanism(4));  // parents X1, X3, X2
    const double a = s2 * s2 / (s2 * s2 + sy * sy), b = sy * sy / (s2 * s2 + sy * sy);
    CHECK(std::abs(y.coefficients[0] - a) < 0.02);
    CHECK(std::abs(y.coefficients[1] - a) < 0.02);
    CHECK(std::abs(y.coefficients[2] - b) < 0.02);
  }
  SUBCASE("latent parent keeps a unit coefficient and leaves the rest as noise") {
    const Scm truth = claire_synthetic();
    const auto d = sample(truth, 50000, 4).data;
    const Scm fitted = fit_linear_scm(truth.graph(), d);
    const auto& x1 = std::get<LinearGaussian>(fitted.mechanism(3));  // parents S, U
    CHECK(x1.coefficients[1] == 1.0);
    CHECK(x1.noise_std > 0.0);
  }
  SUBCASE("singular design") {
    CausalGraph g;
    g.add_node("S", NodeRole::sensitive);
    g.add_node("A", NodeRole::observed);
    g.add_node("B", NodeRole::observed);
    g.add_node("Y", NodeRole::target);
    g.add_edge("A", "Y");
    g.add_edge("B", "Y");
    Dataset d;
    d.feature_names = {"A", "B"};
    d.x = Matrix::from_rows({{1, 2}, {2, 4}, {3, 6}, {4, 8}});
    d.s = {0, 1, 0, 1};
    d.y = {1, 2, 3, 4};
    d.num_sensitive = 2;
    CHECK_THROWS_AS(fit_linear_scm(g, d), FitError);
  }
}

TEST_CASE("incorrect variants") {
  const Scm truth = claire_synthetic();
  const Scm m1 = incorrect_variant(truth, variant_from_string("M1"), 1, 20000);
  const Scm m2 = incorrect_variant(truth, variant_from_string("M2"), 1, 20000);
  CHECK(m1.graph().has_edge("X2", "Y"));
  CHECK_FALSE(m1.graph().has_edge("Y", "X2"));
  CHECK_FALSE(m2.graph().has_edge("S", "X1"));
  CHECK(m2.graph().has_edge("U", "X1"));
  CHECK_NOTHROW(validate(m1));
  CHECK_NOTHROW(validate(m2));
  CHECK_THROWS_AS(variant_from_string("M3"), ConfigError);
}

TEST_CASE("latent posterior matches hand-derived conditioning") {
  // Given X1 = c_s + U + e with e ~ N(0, sd^2), the posterior of U is
  // N((x1 - c_s) / (1 + sd^2), sd^2 / (1 + sd^2)); Y and X2 add nothing.
  const Scm m = claire_synthetic();
  const std::vector<double> c{0.0, 0.2, 2.0, 6.0}, sd{0.5, 1.0, 1.5, 2.0};
  for (std::size_t s = 0; s < 4; ++s) {
    std::vector<std::optional<double>> values(6);
    values[2] = 0.3;   // X0
    values[3] = 1.7;   // X1
    values[4] = 2.5;   // Y
    values[5] = 2.9;   // X2
    const auto post = latent_posterior(m, values, s);
    REQUIRE(post.mean.size() == 1);
    const double v = sd[s] * sd[s];
    CHECK(post.mean[0] == doctest::Approx((1.7 - c[s]) / (1.0 + v)).epsilon(1e-8));
    CHECK(post.covariance(0, 0) == doctest::Approx(v / (1.0 + v)).epsilon(1e-8));
  }
  SUBCASE("nothing observed returns the prior") {
    std::vector<std::optional<double>> none(6);
    const auto post = latent_posterior(m, none, 1);
    CHECK(post.mean[0] == 0.0);
    CHECK(post.covariance(0, 0) == doctest::Approx(1.0));
  }
}

TEST_CASE("counterfactuals") {
  SUBCASE("null intervention reproduces the factual") {
    const Scm m = claire_synthetic();
    const std::vector<double> x{0.3, 1.7, 2.9};
    const std::size_t n = 500;
    const auto cf = counterfactual(m, {x, 1, 2.5}, 1, n, 17);
    // Posterior sd of U is below 1, so 3/sqrt(n) bounds the Monte-Carlo error.
    const double tol = 3.0 / std::sqrt(static_cast<double>(n));
    for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(cf.x[j] - x[j]) < tol);
    CHECK(std::abs(cf.y - 2.5) < tol);
  }
  SUBCASE("zero-noise shift from group 0 to group 2") {
    const Scm m = claire_synthetic(noiseless());
    const auto rec = sample(m, 20, 2, {.fixed_sensitive = 0});
    for (std::size_t i = 0; i < 20; ++i) {
      const auto cf = counterfactual(m, {rec.data.x.row_span(i), 0, rec.data.y[i]}, 2, 50, i);
      CHECK(cf.x[0] == doctest::Approx(rec.data.x(i, 0)).epsilon(1e-12));
      CHECK(cf.x[1] - rec.data.x(i, 1) == doctest::Approx(2.0).epsilon(1e-9));
      CHECK(cf.y - rec.data.y[i] == doctest::Approx(2.0).epsilon(1e-9));
      CHECK(cf.x[2] - rec.data.x(i, 2) == doctest::Approx(2.0).epsilon(1e-9));
    }
  }
  SUBCASE("deterministic copy of the sensitive value follows the intervention") {
    CausalGraph g;
    g.add_node("A", NodeRole::sensitive);
    g.add_node("B", NodeRole::observed);
    g.add_node("Y", NodeRole::target);
    g.add_edge("A", "B");
    g.add_edge("B", "Y");
    const Scm m(g, {CategoricalRoot{{0.5, 0.5}}, LinearGaussian{{1.0}, 0.0, 0.0}, LinearGaussian{{1.0}, 0.0, 0.0}});
    const std::vector<double> x{0.0};
    const auto cf = counterfactual(m, {x, 0, 0.0}, 1, 10, 1);
    CHECK(cf.x[0] == 1.0);
    CHECK(cf.y == 1.0);
  }
  SUBCASE("out of range target value") {
    const Scm m = claire_synthetic();
    const std::vector<double> x{0, 0, 0};
    CHECK_THROWS_AS(counterfactual(m, {x, 0, 0.0}, 4, 10, 1), ValidationError);
  }
  SUBCASE("model without the sensitive edge leaves X1 unchanged") {
    const Scm m2 = incorrect_variant(claire_synthetic(), Variant::missing_sensitive, 3, 20000);
    const auto d = sample(claire_synthetic(), 30, 8).data;
    const Dataset cf = counterfactual_dataset(m2, d, 3, 100, 5);
    for (std::size_t i = 0; i < d.size(); ++i) {
      CHECK(cf.x(i, 1) == doctest::Approx(d.x(i, 1)).epsilon(1e-9));
      CHECK(cf.s[i] == 3);
    }
  }
  SUBCASE("dataset version agrees with the per-instance version") {
    const Scm m = claire_synthetic();
    const auto d = sample(m, 5, 8).data;
    const Dataset cf = counterfactual_dataset(m, d, 2, 200, 99);
    const auto one = counterfactual(m, {d.x.row_span(3), d.s[3], d.y[3]}, 2, 200, derive_seed(99, 3));
    CHECK(cf.x(3, 1) == doctest::Approx(one.x[1]).epsilon(1e-12));
    CHECK(cf.y[3] == doctest::Approx(one.y).epsilon(1e-12));
  }
  SUBCASE("true-model shift is the sensitive offset difference") {
    const Scm m = claire_synthetic();
    const auto d = sample(m, 40, 12).data;
    const std::vector<double> c{0.0, 0.2, 2.0, 6.0};
    const Dataset cf = counterfactual_dataset(m, d, 3, 100, 1);
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double shift = c[3] - c[d.s[i]];
      CHECK(cf.x(i, 1) - d.x(i, 1) == doctest::Approx(shift).epsilon(1e-9));
      CHECK(cf.x(i, 2) - d.x(i, 2) == doctest::Approx(shift).epsilon(1e-9));
    }
  }
}

TEST_CASE("posterior latent means") {
  const Scm m = claire_synthetic();
  const auto d = sample(m, 30, 4).data;
  const Matrix u = posterior_latent_means(m, d, 20000, 3);
  const std::vector<double> c{0.0, 0.2, 2.0, 6.0}, sd{0.5, 1.0, 1.5, 2.0};
  // With Y unobserved, X2 also informs X1's noise; check against the fully
  // general conditioning instead of the one-node formula.
  for (std::size_t i = 0; i < d.size(); ++i) {
    std::vector<std::optional<double>> values(6);
    values[2] = d.x(i, 0);
    values[3] = d.x(i, 1);
    values[5] = d.x(i, 2);
    const auto post = latent_posterior(m, values, d.s[i]);
    const double tol = 4.0 * std::sqrt(post.covariance(0, 0) / 20000.0);
    CHECK(std::abs(u(i, 0) - post.mean[0]) < tol);
  }
}

TEST_CASE("model documents") {
  const Scm m = claire_synthetic();
  const auto doc = scm_to_json(m);
  const Scm back = scm_from_json(doc);
  CHECK(scm_to_json(back) == doc);
  CHECK(sample(back, 20, 1).values == sample(m, 20, 1).values);
  SUBCASE("missing mechanism is an orphan") {
    auto broken = doc;
    broken["mechanisms"].erase("X2");
    CHECK_THROWS_AS(scm_from_json(broken), ValidationError);
  }
  SUBCASE("unknown role") {
    auto broken = doc;
    broken["nodes"][0]["role"] = "mystery";
    CHECK_THROWS_AS(scm_from_json(broken), ConfigError);
  }
}

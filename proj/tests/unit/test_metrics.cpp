#include <cmath>

#include "claire/error.hpp"
#include "claire/metrics/metrics.hpp"
#include "claire/numerics/random.hpp"
#include "doctest.h"

using namespace claire;
using namespace claire::metrics;

namespace {

// Direct triple-sum evaluation with std::exp.
double oracle_mmd(const std::vector<double>& a, const std::vector<double>& b, double h) {
  auto k = [h](double x, double y) { return std::exp(-(x - y) * (x - y) / (2 * h * h)); };
  auto mean_k = [&](const std::vector<double>& p, const std::vector<double>& q) {
    double s = 0;
    for (double x : p)
      for (double y : q) s += k(x, y);
    return s / (p.size() * q.size());
  };
  return mean_k(a, a) + mean_k(b, b) - 2 * mean_k(a, b);
}

std::vector<double> normals(std::size_t n, std::uint64_t seed, double shift = 0.0) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal() + shift;
  return v;
}

}  // namespace

TEST_CASE("prediction quality") {
  const std::vector<double> p{1, 2, 3}, t{1, 2, 5};
  CHECK(rmse(p, p) == 0.0);
  CHECK(mae(p, p) == 0.0);
  CHECK(rmse(std::vector<double>{0, 0}, std::vector<double>{1, 1}) == 1.0);
  CHECK(mae(std::vector<double>{0, 0}, std::vector<double>{1, 1}) == 1.0);
  CHECK(rmse(p, t) == doctest::Approx(std::sqrt(4.0 / 3.0)));
  CHECK(mae(p, t) == doctest::Approx(2.0 / 3.0));
  CHECK(accuracy(std::vector<double>{0.9, 0.2, 0.5}, std::vector<double>{1, 0, 1}) == 1.0);
  CHECK(accuracy(std::vector<double>{0.1, 0.7}, std::vector<double>{1, 1}) == 0.5);
  CHECK_THROWS_AS(rmse(std::vector<double>{}, std::vector<double>{}), ValidationError);
  CHECK_THROWS_AS(mae(std::vector<double>{1}, std::vector<double>{1, 2}), ShapeError);
}

TEST_CASE("wasserstein-1") {
  CHECK(wasserstein1(std::vector<double>{3, 1, 2}, std::vector<double>{3, 1, 2}) == 0.0);
  CHECK(wasserstein1(std::vector<double>{0, 0}, std::vector<double>{1, 1}) == 1.0);
  CHECK(wasserstein1(std::vector<double>{0, 1}, std::vector<double>{1, 0}) == 0.0);
  CHECK_THROWS_AS(wasserstein1(std::vector<double>{}, std::vector<double>{1}), ValidationError);
  const auto a = normals(300, 1), b = normals(300, 2, 0.4);
  SUBCASE("symmetric and non-negative") {
    CHECK(wasserstein1(a, b) == wasserstein1(b, a));
    CHECK(wasserstein1(a, b) >= 0.0);
  }
  SUBCASE("translation moves it by the shift") {
    std::vector<double> shifted = a;
    for (auto& v : shifted) v += 1.75;
    CHECK(wasserstein1(a, shifted) == doctest::Approx(1.75).epsilon(1e-12));
  }
  SUBCASE("unequal lengths subsample the longer side deterministically") {
    const auto longer = normals(500, 3);
    const double w1 = wasserstein1(longer, b, 7), w2 = wasserstein1(longer, b, 7);
    CHECK(w1 == w2);
    // A subsample of a constant vector is the same constant.
    std::vector<double> ones(500, 1.0), twos(100, 2.0);
    CHECK(wasserstein1(ones, twos, 4) == 1.0);
  }
}

TEST_CASE("rbf mmd") {
  SUBCASE("identical samples") {
    const auto a = normals(200, 5);
    CHECK(std::abs(mmd_rbf(a, a)) < 1e-12);
  }
  SUBCASE("single points at unit bandwidth") {
    CHECK(mmd_rbf(std::vector<double>{0}, std::vector<double>{1}, 1.0) ==
          doctest::Approx(2.0 - 2.0 * std::exp(-0.5)).epsilon(1e-14));
  }
  SUBCASE("agrees with the direct kernel sums") {
    const auto a = normals(257, 6), b = normals(131, 7, 0.5);
    CHECK(mmd_rbf(a, b, 0.8) == doctest::Approx(oracle_mmd(a, b, 0.8)).epsilon(1e-12));
  }
  SUBCASE("multivariate rows") {
    Rng rng(2);
    const Matrix a = rng.normal_matrix(40, 3), b = rng.normal_matrix(30, 3);
    double aa = 0, bb = 0, ab = 0;
    auto k = [](std::span<const double> x, std::span<const double> y) {
      double d = 0;
      for (std::size_t i = 0; i < x.size(); ++i) d += (x[i] - y[i]) * (x[i] - y[i]);
      return std::exp(-d / 2.0);
    };
    for (std::size_t i = 0; i < 40; ++i)
      for (std::size_t j = 0; j < 40; ++j) aa += k(a.row_span(i), a.row_span(j));
    for (std::size_t i = 0; i < 30; ++i)
      for (std::size_t j = 0; j < 30; ++j) bb += k(b.row_span(i), b.row_span(j));
    for (std::size_t i = 0; i < 40; ++i)
      for (std::size_t j = 0; j < 30; ++j) ab += k(a.row_span(i), b.row_span(j));
    const double want = aa / 1600 + bb / 900 - 2 * ab / 1200;
    CHECK(mmd_rbf(a, b, 1.0) == doctest::Approx(want).epsilon(1e-12));
  }
  SUBCASE("same distribution at n=5000 is close to zero") {
    CHECK(mmd_rbf(normals(5000, 8), normals(5000, 9)) < 0.05);
  }
  SUBCASE("median heuristic of two points is their distance") {
    CHECK(median_heuristic(Matrix::from_rows({{0.0}}), Matrix::from_rows({{3.0}})) == 3.0);
  }
  SUBCASE("bad inputs") {
    CHECK_THROWS_AS(mmd_rbf(std::vector<double>{}, std::vector<double>{1}), ValidationError);
    CHECK_THROWS_AS(mmd_rbf(std::vector<double>{0}, std::vector<double>{1}, 0.0), ConfigError);
  }
}

TEST_CASE("counterfactual divergence") {
  SUBCASE("identical predictions give zero everywhere") {
    CounterfactualSet cf{{std::vector<double>(50, 0.3), std::vector<double>(50, 0.3),
                          std::vector<double>(50, 0.3), std::vector<double>(50, 0.3)}};
    const auto r = counterfactual_divergence(cf);
    CHECK(r.pairs.size() == 6);
    CHECK(r.mmd_avg == 0.0);
    CHECK(r.wass_avg == 0.0);
  }
  SUBCASE("three values give three pairs averaged") {
    CounterfactualSet cf{{{0, 0}, {1, 1}, {3, 3}}};
    const auto r = counterfactual_divergence(cf);
    REQUIRE(r.pairs.size() == 3);
    CHECK(r.pair(0, 1).wass == 1.0);
    CHECK(r.pair(2, 0).wass == 3.0);
    CHECK(r.pair(1, 2).wass == 2.0);
    CHECK(r.wass_avg == doctest::Approx(2.0));
    CHECK(average_divergence(cf, Divergence::wass) == doctest::Approx(2.0));
    CHECK(average_divergence(cf, Divergence::mmd) == doctest::Approx(r.mmd_avg));
  }
  SUBCASE("needs two groups") {
    CounterfactualSet cf{{{1, 2}}};
    CHECK_THROWS_AS(counterfactual_divergence(cf), ValidationError);
  }
  SUBCASE("report round-trips through json") {
    CounterfactualSet cf{{normals(20, 1), normals(20, 2), normals(20, 3)}};
    MetricsReport m;
    m.rmse = 0.5;
    m.divergence = counterfactual_divergence(cf);
    const auto j = m.to_json();
    CHECK(j["accuracy"].is_null());
    CHECK(MetricsReport::from_json(j).to_json() == j);
  }
}

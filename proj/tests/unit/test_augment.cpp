#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "../support/gradcheck.hpp"
#include "../support/synthetic.hpp"
#include "claire/augment/vae.hpp"
#include "claire/error.hpp"
#include "claire/numerics/adam.hpp"
#include "doctest.h"

using namespace claire;
using namespace claire::augment;

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

// Two-layer network whose output is the constant `out_bias` for every input.
Mlp constant_mlp(std::size_t in, std::size_t hidden, const std::vector<double>& out_bias) {
  const std::size_t out = out_bias.size();
  std::vector<Mlp::Layer> layers;
  layers.push_back({ad::Parameter(Matrix(in, hidden)), ad::Parameter(Matrix(1, hidden))});
  Matrix b(1, out);
  for (std::size_t i = 0; i < out; ++i) b(0, i) = out_bias[i];
  layers.push_back({ad::Parameter(Matrix(hidden, out)), ad::Parameter(std::move(b))});
  return Mlp({in, hidden, out, OutputActivation::identity, 0.01}, std::move(layers));
}

Vae fixed_vae(double mean, double log_var, const std::vector<double>& decoded) {
  const VaeConfig c{2, 2, 3, 4, Task::regression, 0.01};
  std::vector<double> enc(3, mean);
  enc.insert(enc.end(), 3, log_var);
  return Vae(c, constant_mlp(3, 4, enc), constant_mlp(5, 4, decoded));
}

Dataset toy(std::size_t n, std::uint64_t seed, Task task = Task::regression) {
  Rng rng(seed);
  Dataset d;
  d.feature_names = {"a", "b"};
  d.x = rng.normal_matrix(n, 2);
  d.num_sensitive = 3;
  d.task = task;
  for (std::size_t i = 0; i < n; ++i) {
    d.s.push_back(i % 3);
    const double v = d.x(i, 0) - d.x(i, 1) + 0.3 * static_cast<double>(i % 3);
    d.y.push_back(task == Task::regression ? v : (v > 0 ? 1.0 : 0.0));
  }
  return d;
}

// Majority rate and held-out accuracy of a fresh softmax probe predicting s.
std::pair<double, double> probe_accuracy(const Matrix& emb, std::span<const std::size_t> s, std::size_t k) {
  const std::size_t n = emb.rows(), cut = n * 7 / 10;
  std::vector<std::size_t> fit(cut), held(n - cut);
  std::iota(fit.begin(), fit.end(), 0);
  std::iota(held.begin(), held.end(), cut);
  const Matrix a = gather_rows(emb, fit), b = gather_rows(emb, held);
  const std::vector<std::size_t> sa(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(cut));
  Rng rng(17);
  Mlp probe({emb.cols(), 32, k, OutputActivation::softmax, 0.01}, rng);
  Adam opt({1e-2});
  auto ps = probe.parameters();
  for (int e = 0; e < 500; ++e) {
    ad::Tape t;
    const ad::Var nll =
        ad::scale(ad::mean(ad::pick_per_row(ad::log_softmax_rows(probe.logits(t, t.constant(a))), sa)), -1.0);
    t.backward(nll);
    opt.step(ps);
    Adam::zero_grad(ps);
  }
  const Matrix out = probe.logits(b);
  std::vector<std::size_t> counts(k);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < b.rows(); ++i) {
    const auto row = out.row_span(i);
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    hits += best == s[cut + i];
    ++counts[s[cut + i]];
  }
  const double held_n = static_cast<double>(b.rows());
  return {static_cast<double>(*std::max_element(counts.begin(), counts.end())) / held_n,
          static_cast<double>(hits) / held_n};
}

double mean_sq(const Matrix& a, const Matrix& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / static_cast<double>(a.rows());
}

}  // namespace

TEST_CASE("elbo closed forms") {
  const Matrix x = Matrix::from_rows({{0.5, -1.0}});
  const std::vector<double> y{2.0};
  const std::vector<std::size_t> s{1};
  const Matrix eps(1, 3);

  SUBCASE("unit mean, unit variance posterior: KL is 0.5 per latent dimension") {
    Vae vae = fixed_vae(1.0, 0.0, {0.5, -1.0, 2.0});
    ad::Tape t;
    const auto parts = elbo_parts(t, vae, x, y, s, eps);
    CHECK(parts.kl.scalar() == doctest::Approx(1.5).epsilon(1e-14));
  }
  SUBCASE("perfect reconstruction with a standard normal posterior leaves the log-normaliser") {
    Vae vae = fixed_vae(0.0, 0.0, {0.5, -1.0, 2.0});
    ad::Tape t;
    const auto parts = elbo_parts(t, vae, x, y, s, eps);
    CHECK(parts.kl.scalar() == 0.0);
    CHECK(parts.loss.scalar() == doctest::Approx(1.5 * kLog2Pi).epsilon(1e-14));
  }
  SUBCASE("squared error enters with weight one half") {
    Vae vae = fixed_vae(0.0, 0.0, {1.5, -1.0, 0.0});
    ad::Tape t;
    CHECK(elbo_loss(t, vae, x, y, s, eps).scalar() == doctest::Approx(0.5 * (1.0 + 4.0) + 1.5 * kLog2Pi));
  }
  SUBCASE("KL is never negative") {
    Rng rng(4);
    const Dataset d = toy(40, 4);
    Vae vae({2, 3, 5, 8, Task::regression, 0.01}, rng);
    ad::Tape t;
    CHECK(elbo_parts(t, vae, d.x, d.y, d.s, rng.normal_matrix(40, 5)).kl.scalar() >= 0.0);
  }
  SUBCASE("shape errors") {
    Vae vae = fixed_vae(0.0, 0.0, {0.0, 0.0, 0.0});
    ad::Tape t;
    CHECK_THROWS_AS(elbo_loss(t, vae, x, y, s, Matrix(1, 2)), ShapeError);
    CHECK_THROWS_AS(elbo_loss(t, vae, Matrix(0, 2), {}, {}, Matrix(0, 3)), ValidationError);
  }
}

TEST_CASE("augmentation losses match finite differences") {
  Rng rng(8);
  SUBCASE("elbo, regression and binary target") {
    for (Task task : {Task::regression, Task::classification}) {
      const Dataset d = toy(15, 2, task);
      Vae vae({2, 3, 4, 6, task, 0.01}, rng);
      const Matrix eps = rng.normal_matrix(15, 4);
      auto build = [&](ad::Tape& t) { return elbo_loss(t, vae, d.x, d.y, d.s, eps); };
      const auto res = testing::gradient_check(build, vae.parameters(), 100, 1);
      CHECK(res.max_rel_error < 1e-4);
    }
  }
  SUBCASE("group mmd penalty") {
    ad::Parameter emb(rng.normal_matrix(18, 4));
    const std::vector<std::vector<std::size_t>> groups{{0, 3, 4, 9, 10}, {1, 2, 5, 11, 12, 17}, {6, 7, 8, 13, 14, 15, 16}};
    auto build = [&](ad::Tape& t) { return group_mmd_penalty(t.parameter(emb), groups, 1.7); };
    CHECK(testing::gradient_check(build, {&emb}, 72, 2).max_rel_error < 1e-4);
  }
  SUBCASE("adversarial term through a softmax discriminator") {
    ad::Parameter emb(rng.normal_matrix(12, 3));
    Mlp disc({3, 5, 3, OutputActivation::softmax, 0.01}, rng);
    std::vector<std::size_t> s(12);
    for (std::size_t i = 0; i < 12; ++i) s[i] = (i * 7) % 3;
    std::vector<std::vector<std::size_t>> groups(3);
    for (std::size_t i = 0; i < 12; ++i) groups[s[i]].push_back(i);
    auto params = disc.parameters();
    params.push_back(&emb);
    auto build = [&](ad::Tape& t) { return adversarial_term(disc.logits(t, t.parameter(emb)), s, groups); };
    CHECK(testing::gradient_check(build, params, 100, 3).max_rel_error < 1e-4);
  }
}

TEST_CASE("adversarial term value") {
  // Uniform discriminator: every group's mean log-probability is log(1/3).
  ad::Tape t;
  const std::vector<std::size_t> s{0, 1, 2, 2};
  const auto term = adversarial_term(t.constant(Matrix(4, 3)), s, {{0}, {1}, {2, 3}});
  CHECK(term.scalar() == doctest::Approx(std::log(1.0 / 3.0)));
}

TEST_CASE("zero penalty weight reproduces plain training") {
  const Dataset d = toy(60, 5);
  TrainConfig base;
  base.epochs = 25;
  base.seed = 11;
  base.mode = Mode::plain;
  const auto plain = train(d, base);
  TrainConfig m = base;
  m.mode = Mode::mmd;
  m.alpha = 0.0;
  TrainConfig a = base;
  a.mode = Mode::adversarial;
  a.alpha_prime = 0.0;
  CHECK(train(d, m).trace.loss == plain.trace.loss);
  CHECK(train(d, a).trace.loss == plain.trace.loss);
}

TEST_CASE("training validation") {
  Dataset d = toy(30, 1);
  TrainConfig cfg;
  cfg.epochs = 2;
  SUBCASE("a subgroup with a single instance") {
    d.s.assign(30, 0);
    d.s[0] = 1;
    d.s[1] = 2;
    d.s[2] = 2;
    CHECK_THROWS_AS(train(d, cfg), ConfigError);
  }
  SUBCASE("one sensitive value") {
    d.num_sensitive = 1;
    d.s.assign(30, 0);
    CHECK_THROWS_AS(train(d, cfg), ConfigError);
  }
  SUBCASE("mode names") {
    CHECK(mode_from_string(to_string(Mode::adversarial)) == Mode::adversarial);
    CHECK_THROWS_AS(mode_from_string("bogus"), ConfigError);
  }
}

TEST_CASE("elbo falls over the first 50 epochs on synthetic data") {
  const Dataset d = testing::standardized_synthetic(300, 21);
  TrainConfig cfg;
  cfg.mode = Mode::plain;
  cfg.epochs = 50;
  cfg.seed = 2;
  const auto tr = train(d, cfg);
  CHECK(tr.trace.loss.back() < tr.trace.loss.front());
}

TEST_CASE("counterfactual aggregation") {
  SUBCASE("mean is invariant to the order of the draws") {
    Rng rng(6);
    std::vector<Matrix> draws;
    for (int i = 0; i < 20; ++i) draws.push_back(rng.normal_matrix(7, 3));
    const Matrix forward = aggregate_mean(draws);
    std::reverse(draws.begin(), draws.end());
    std::swap(draws[3], draws[11]);
    const Matrix shuffled = aggregate_mean(draws);
    for (std::size_t i = 0; i < forward.size(); ++i) CHECK(shuffled[i] == doctest::Approx(forward[i]).epsilon(1e-13));
  }
  SUBCASE("identical decodes aggregate to themselves") {
    const Matrix m = Matrix::from_rows({{0.25, -3.0}, {1.5, 7.0}});
    const std::vector<Matrix> draws(5, m);
    CHECK(aggregate_mean(draws).data()[3] == 7.0);
    CHECK(aggregate_mean(draws).data()[0] == 0.25);
  }
  SUBCASE("one draw with zero posterior variance is a single decode") {
    Rng rng(3);
    const VaeConfig c{2, 3, 4, 6, Task::regression, 0.01};
    Vae random(c, rng);
    // Encoder output log-variance pinned far negative: the std underflows to 0.
    auto layers = random.encoder().layers();
    for (std::size_t j = 0; j < 4; ++j) {
      for (std::size_t r = 0; r < 6; ++r) layers[1].weight.value(r, 4 + j) = 0.0;
      layers[1].bias.value(0, 4 + j) = -2000.0;
    }
    Vae vae(c, Mlp(random.encoder().config(), layers), random.decoder());
    const Dataset d = toy(9, 2);
    const auto cf = generate_counterfactuals(vae, d, 1, 5);
    const Matrix mean = vae.encode(d.x, d.y).mean;
    for (std::size_t s = 0; s < 3; ++s) {
      const Matrix direct = vae.decode(mean, s);
      for (std::size_t i = 0; i < 9; ++i) {
        CHECK(cf.x[s](i, 0) == doctest::Approx(direct(i, 0)).epsilon(1e-14));
        CHECK(cf.y[s][i] == doctest::Approx(direct(i, 2)).epsilon(1e-14));
      }
    }
  }
  SUBCASE("every instance gets one counterfactual per sensitive value") {
    Rng rng(3);
    Vae vae({2, 3, 4, 6, Task::classification, 0.01}, rng);
    const Dataset d = toy(11, 2, Task::classification);
    const auto cf = generate_counterfactuals(vae, d, 20, 5);
    CHECK(cf.num_sensitive() == 3);
    CHECK(cf.size() == 11);
    CHECK(cf.x[2].cols() == 2);
    for (double p : cf.y[1]) CHECK((p > 0.0 && p < 1.0));
    CHECK_THROWS_AS(generate_counterfactuals(vae, d, 0, 5), ConfigError);
  }
}

TEST_CASE("vae persistence and csv export") {
  Rng rng(12);
  const Vae vae({2, 3, 4, 6, Task::classification, 0.05}, rng);
  const Vae back = Vae::from_json(vae.to_json());
  CHECK(back.to_json() == vae.to_json());
  const Dataset d = toy(5, 1, Task::classification);
  CHECK(back.decode(vae.encode(d.x, d.y).mean, 1).data()[4] == vae.decode(vae.encode(d.x, d.y).mean, 1).data()[4]);
  CHECK_THROWS_AS(Vae::from_json({{"format", "other"}}), ConfigError);

  const auto cf = generate_counterfactuals(vae, d, 3, 1);
  std::ostringstream out;
  const std::vector<std::string> names{"a", "b"};
  write_counterfactual_csv(out, cf, names);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "id,s_prime,a,b,y");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 15);
}

TEST_CASE("mmd training shrinks the subgroup embedding gap" * doctest::test_suite("slow")) {
  // Averaged over several synthetic draws; per-draw ratios vary.
  double ratio = 0.0;
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const Dataset d = testing::standardized_synthetic(600, seed);
    TrainConfig cfg;
    cfg.seed = 0;
    Rng init_rng(derive_seed(cfg.seed, 0));
    const Vae init({d.dim(), d.num_sensitive, cfg.latent_dim, cfg.hidden, d.task, 0.01}, init_rng);
    const double before = embedding_mmd(init, d);
    const auto tr = train_claire_m(d, cfg);
    const double after = embedding_mmd(tr.vae, d);
    CHECK(after < before);
    ratio += after / before / 4.0;
  }
  CHECK(ratio < 0.2);
}

TEST_CASE("adversarial training hides the sensitive value from a probe" * doctest::test_suite("slow")) {
  const Dataset d = testing::standardized_synthetic(1200, 2);
  TrainConfig cfg;
  const auto tr = train_claire_a(d, cfg);
  const auto [majority, acc] = probe_accuracy(tr.vae.encode(d.x, d.y).mean, d.s, d.num_sensitive);
  MESSAGE("probe accuracy " << acc << ", majority rate " << majority);
  CHECK(std::abs(acc - majority) <= 0.1);
}

TEST_CASE("own-group counterfactuals reconstruct the instance" * doctest::test_suite("slow")) {
  const Dataset all = testing::standardized_synthetic(1000, 9);
  std::vector<std::size_t> fit(800), val(200);
  std::iota(fit.begin(), fit.end(), 0);
  std::iota(val.begin(), val.end(), 800);
  const Dataset train_set = all.subset(fit), val_set = all.subset(val);
  TrainConfig cfg;
  const auto tr = train_claire_m(train_set, cfg);

  Rng rng(1);
  const Vae::Posterior post = tr.vae.encode(val_set.x, val_set.y);
  Matrix h = post.mean;
  for (std::size_t i = 0; i < h.size(); ++i) h[i] += std::exp(0.5 * post.log_var[i]) * rng.normal();
  const double val_error = mean_sq(tr.vae.decode(h, val_set.s), join_xy(val_set.x, val_set.y));

  const auto cf = generate_counterfactuals(tr.vae, train_set, 20, 3);
  Matrix own(train_set.size(), train_set.dim() + 1);
  for (std::size_t i = 0; i < train_set.size(); ++i) {
    const std::size_t s = train_set.s[i];
    for (std::size_t j = 0; j < train_set.dim(); ++j) own(i, j) = cf.x[s](i, j);
    own(i, train_set.dim()) = cf.y[s][i];
  }
  const double own_error = mean_sq(own, join_xy(train_set.x, train_set.y));
  MESSAGE("own-group error " << own_error << ", validation error " << val_error);
  CHECK(own_error <= 2.0 * val_error);
}

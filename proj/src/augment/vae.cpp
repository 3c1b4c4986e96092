#include "claire/augment/vae.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <ostream>

#include "claire/error.hpp"
#include "claire/metrics/metrics.hpp"
#include "claire/numerics/adam.hpp"
#include "claire/numerics/mlp_io.hpp"
#include "claire/numerics/random.hpp"

namespace claire::augment {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

MlpConfig encoder_config(const VaeConfig& c) {
  return {c.features + 1, c.hidden, 2 * c.latent_dim, OutputActivation::identity, c.negative_slope};
}

MlpConfig decoder_config(const VaeConfig& c) {
  return {c.latent_dim + c.num_sensitive, c.hidden, c.features + 1, OutputActivation::identity,
          c.negative_slope};
}

void check_config(const VaeConfig& c) {
  if (c.features == 0 || c.latent_dim == 0 || c.hidden == 0) throw ConfigError("VAE dimensions must be positive");
  if (c.num_sensitive < 2) throw ConfigError("VAE needs at least two sensitive values");
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

Matrix sample_latent(const Vae::Posterior& p, Rng& rng) {
  Matrix h = p.mean;
  for (std::size_t i = 0; i < h.size(); ++i) h[i] += std::exp(0.5 * p.log_var[i]) * rng.normal();
  return h;
}

void check_groups(const std::vector<std::vector<std::size_t>>& groups) {
  for (std::size_t s = 0; s < groups.size(); ++s) {
    if (groups[s].size() < 2) {
      throw ConfigError("sensitive subgroup " + std::to_string(s) + " has " + std::to_string(groups[s].size()) +
                        " instances; at least 2 are required");
    }
  }
}

std::vector<std::vector<std::size_t>> groups_of(std::span<const std::size_t> s, std::size_t k) {
  std::vector<std::vector<std::size_t>> g(k);
  for (std::size_t i = 0; i < s.size(); ++i) g.at(s[i]).push_back(i);
  return g;
}

}  // namespace

Matrix join_xy(const Matrix& x, std::span<const double> y) {
  if (x.rows() != y.size()) throw ShapeError("features and targets differ in length");
  return hcat(x, Matrix::column(y));
}

Matrix one_hot(std::span<const std::size_t> s, std::size_t k) {
  Matrix out(s.size(), k);
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] >= k) throw ValidationError("sensitive value " + std::to_string(s[i]) + " out of range");
    out(i, s[i]) = 1.0;
  }
  return out;
}

Vae::Vae(const VaeConfig& config, Rng& rng) : config_(config) {
  check_config(config);
  encoder_ = Mlp(encoder_config(config), rng);
  decoder_ = Mlp(decoder_config(config), rng);
}

Vae::Vae(const VaeConfig& config, Mlp encoder, Mlp decoder)
    : config_(config), encoder_(std::move(encoder)), decoder_(std::move(decoder)) {
  check_config(config);
  const auto e = encoder_config(config), d = decoder_config(config);
  if (encoder_.input_dim() != e.input || encoder_.output_dim() != e.output || decoder_.input_dim() != d.input ||
      decoder_.output_dim() != d.output) {
    throw ShapeError("VAE networks do not match the configuration");
  }
}

Vae::Posterior Vae::encode(const Matrix& x, std::span<const double> y) const {
  const Matrix out = encoder_.logits(join_xy(x, y));
  return {slice_cols(out, 0, config_.latent_dim), slice_cols(out, config_.latent_dim, 2 * config_.latent_dim)};
}

Matrix Vae::decode(const Matrix& h, std::span<const std::size_t> s) const {
  Matrix out = decoder_.logits(hcat(h, one_hot(s, config_.num_sensitive)));
  if (config_.task == Task::classification) {
    for (std::size_t i = 0; i < out.rows(); ++i) out(i, config_.features) = sigmoid(out(i, config_.features));
  }
  return out;
}

Matrix Vae::decode(const Matrix& h, std::size_t s) const {
  const std::vector<std::size_t> all(h.rows(), s);
  return decode(h, all);
}

ad::Var Vae::encode(ad::Tape& tape, const Matrix& xy) { return encoder_.logits(tape, tape.constant(xy)); }

ad::Var Vae::decode_logits(ad::Tape& tape, ad::Var h, std::span<const std::size_t> s) {
  return decoder_.logits(tape, ad::concat_cols(h, tape.constant(one_hot(s, config_.num_sensitive))));
}

std::vector<ad::Parameter*> Vae::parameters() {
  auto p = encoder_.parameters();
  for (auto* q : decoder_.parameters()) p.push_back(q);
  return p;
}

nlohmann::json Vae::to_json() const {
  return {{"format", "claire-vae/1"},
          {"features", config_.features},
          {"num_sensitive", config_.num_sensitive},
          {"latent_dim", config_.latent_dim},
          {"hidden", config_.hidden},
          {"task", claire::to_string(config_.task)},
          {"negative_slope", config_.negative_slope},
          {"encoder", mlp_to_json(encoder_)},
          {"decoder", mlp_to_json(decoder_)}};
}

Vae Vae::from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", std::string()) != "claire-vae/1") throw ConfigError("not a VAE weight document");
    VaeConfig c;
    c.features = j.at("features").get<std::size_t>();
    c.num_sensitive = j.at("num_sensitive").get<std::size_t>();
    c.latent_dim = j.at("latent_dim").get<std::size_t>();
    c.hidden = j.at("hidden").get<std::size_t>();
    c.task = task_from_string(j.at("task").get<std::string>());
    c.negative_slope = j.at("negative_slope").get<double>();
    return Vae(c, mlp_from_json(j.at("encoder")), mlp_from_json(j.at("decoder")));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed VAE document: ") + e.what());
  }
}

ElboParts elbo_parts(ad::Tape& tape, Vae& vae, const Matrix& x, std::span<const double> y,
                     std::span<const std::size_t> s, const Matrix& eps) {
  const auto& c = vae.config();
  if (x.rows() == 0) throw ValidationError("ELBO of an empty batch");
  if (x.cols() != c.features) throw ShapeError("VAE expects " + std::to_string(c.features) + " features");
  if (eps.rows() != x.rows() || eps.cols() != c.latent_dim) throw ShapeError("reparameterisation noise has wrong shape");
  const Matrix xy = join_xy(x, y);
  const ad::Var enc = vae.encode(tape, xy);
  const ad::Var mean = ad::slice_cols(enc, 0, c.latent_dim);
  const ad::Var log_var = ad::slice_cols(enc, c.latent_dim, 2 * c.latent_dim);
  const ad::Var h = ad::add(mean, ad::mul(ad::exp(ad::scale(log_var, 0.5)), tape.constant(eps)));
  const ad::Var out = vae.decode_logits(tape, h, s);

  ad::Var rec;
  const double d = static_cast<double>(c.features);
  if (c.task == Task::regression) {
    const ad::Var sq = ad::row_sum(ad::square(ad::sub(out, tape.constant(xy))));
    rec = ad::add_scalar(ad::scale(ad::mean(sq), 0.5), 0.5 * (d + 1.0) * kLog2Pi);
  } else {
    const ad::Var sq = ad::row_sum(ad::square(ad::sub(ad::slice_cols(out, 0, c.features), tape.constant(x))));
    const ad::Var xs = ad::add_scalar(ad::scale(ad::mean(sq), 0.5), 0.5 * d * kLog2Pi);
    const ad::Var ys = ad::mean(ad::bce_with_logits(ad::slice_cols(out, c.features, c.features + 1), Matrix::column(y)));
    rec = ad::add(xs, ys);
  }
  // 0.5 * sum(mean^2 + var - 1 - log var) per row, averaged over rows.
  const ad::Var kl_terms = ad::add_scalar(ad::sub(ad::add(ad::square(mean), ad::exp(log_var)), log_var), -1.0);
  const ad::Var kl = ad::scale(ad::mean(ad::row_sum(kl_terms)), 0.5);
  return {ad::add(rec, kl), mean, rec, kl};
}

ad::Var elbo_loss(ad::Tape& tape, Vae& vae, const Matrix& x, std::span<const double> y,
                  std::span<const std::size_t> s, const Matrix& eps) {
  return elbo_parts(tape, vae, x, y, s, eps).loss;
}

ad::Var group_mmd_penalty(ad::Var embedding, const std::vector<std::vector<std::size_t>>& groups, double bandwidth) {
  if (groups.size() < 2) throw ValidationError("MMD penalty needs at least two groups");
  std::vector<std::size_t> rows, labels;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].empty()) throw ValidationError("MMD penalty over an empty group");
    rows.insert(rows.end(), groups[g].begin(), groups[g].end());
    labels.insert(labels.end(), groups[g].size(), g);
  }
  return ad::grouped_mmd_rbf(ad::gather_rows(embedding, rows), labels, groups.size(), bandwidth);
}

ad::Var adversarial_term(ad::Var discriminator_logits, std::span<const std::size_t> s,
                         const std::vector<std::vector<std::size_t>>& groups) {
  const ad::Var picked = ad::pick_per_row(ad::log_softmax_rows(discriminator_logits), s);
  ad::Var total;
  bool first = true;
  for (const auto& g : groups) {
    if (g.empty()) throw ValidationError("adversarial term over an empty group");
    const ad::Var m = ad::mean(ad::gather_rows(picked, g));
    total = first ? m : ad::add(total, m);
    first = false;
  }
  return ad::scale(total, 1.0 / static_cast<double>(groups.size()));
}

std::string to_string(Mode m) {
  switch (m) {
    case Mode::plain:
      return "plain";
    case Mode::mmd:
      return "mmd";
    case Mode::adversarial:
      return "adversarial";
  }
  return "plain";
}

Mode mode_from_string(const std::string& s) {
  if (s == "plain") return Mode::plain;
  if (s == "mmd" || s == "claire-m") return Mode::mmd;
  if (s == "adversarial" || s == "claire-a") return Mode::adversarial;
  throw ConfigError("unknown augmentation mode '" + s + "'");
}

Trained train(const Dataset& data, const TrainConfig& cfg) {
  data.validate();
  if (data.num_sensitive < 2) throw ConfigError("augmentation needs at least two sensitive values");
  if (cfg.epochs == 0) throw ConfigError("epochs must be positive");
  if (cfg.alpha < 0.0 || cfg.alpha_prime < 0.0) throw ConfigError("penalty weights must be non-negative");
  check_groups(data.groups());

  const VaeConfig vc{data.dim(), data.num_sensitive, cfg.latent_dim, cfg.hidden, data.task, 0.01};
  Rng init_rng(derive_seed(cfg.seed, 0));
  Trained out{Vae(vc, init_rng), {}};
  Vae& vae = out.vae;
  Rng disc_rng(derive_seed(cfg.seed, 1));
  Mlp disc({cfg.latent_dim, cfg.hidden, data.num_sensitive, OutputActivation::softmax, 0.01}, disc_rng);
  Rng noise(derive_seed(cfg.seed, 2));
  Rng shuffle(derive_seed(cfg.seed, 3));

  Adam opt({cfg.lr});
  Adam disc_opt({cfg.lr});
  auto params = vae.parameters();
  auto disc_params = disc.parameters();

  const std::size_t n = data.size();
  const std::size_t batch = cfg.batch_size == 0 ? n : std::min(cfg.batch_size, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const bool use_mmd = cfg.mode == Mode::mmd && cfg.alpha > 0.0;
  const bool use_adv = cfg.mode == Mode::adversarial && cfg.alpha_prime > 0.0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (batch < n) {
      for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[shuffle.index(i + 1)]);
    }
    double epoch_loss = 0.0, epoch_pen = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t end = std::min(n, start + batch);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      const Dataset b = batch == n ? data : data.subset(idx);
      const auto groups = groups_of(b.s, b.num_sensitive);
      const bool groups_ok = std::all_of(groups.begin(), groups.end(), [](const auto& g) { return g.size() >= 2; });
      const Matrix eps = noise.normal_matrix(b.size(), cfg.latent_dim);

      if (use_adv && groups_ok) {
        // Discriminator ascends the log-likelihood of the true group.
        const Matrix mu = vae.encode(b.x, b.y).mean;
        ad::Tape t;
        const ad::Var term = adversarial_term(disc.logits(t, t.constant(mu)), b.s, groups);
        t.backward(ad::scale(term, -1.0));
        disc_opt.step(disc_params);
        Adam::zero_grad(disc_params);
      }

      ad::Tape t;
      const ElboParts parts = elbo_parts(t, vae, b.x, b.y, b.s, eps);
      ad::Var total = parts.loss;
      if (use_mmd && groups_ok) {
        const Matrix& mu = parts.mean.value();
        const double h = metrics::median_heuristic(mu, Matrix(0, mu.cols()), 500);
        const ad::Var pen = group_mmd_penalty(parts.mean, groups, h);
        epoch_pen += pen.scalar();
        total = ad::add(total, ad::scale(pen, cfg.alpha));
      } else if (use_adv && groups_ok) {
        const ad::Var term = adversarial_term(disc.logits(t, parts.mean), b.s, groups);
        epoch_pen += term.scalar();
        total = ad::add(total, ad::scale(term, cfg.alpha_prime));
      }
      epoch_loss += total.scalar();
      t.backward(total);
      opt.step(params);
      Adam::zero_grad(params);
      Adam::zero_grad(disc_params);
      ++batches;
    }
    out.trace.loss.push_back(epoch_loss / static_cast<double>(batches));
    out.trace.penalty.push_back(epoch_pen / static_cast<double>(batches));
  }
  return out;
}

double embedding_mmd(const Vae& vae, const Dataset& data) {
  const Matrix mu = vae.encode(data.x, data.y).mean;
  const auto groups = data.groups();
  const double h = metrics::median_heuristic(mu, Matrix(0, mu.cols()), 500);
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < groups.size(); ++a) {
    for (std::size_t b = a + 1; b < groups.size(); ++b) {
      total += metrics::mmd_rbf(gather_rows(mu, groups[a]), gather_rows(mu, groups[b]), h);
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

Matrix aggregate_mean(std::span<const Matrix> draws) {
  if (draws.empty()) throw ValidationError("nothing to aggregate");
  Matrix out(draws.front().rows(), draws.front().cols());
  for (const auto& d : draws) {
    if (!d.same_shape(out)) throw ShapeError("aggregated decodes differ in shape");
    for (std::size_t i = 0; i < d.size(); ++i) out[i] += d[i];
  }
  const double inv = 1.0 / static_cast<double>(draws.size());
  for (auto& v : out.data()) v *= inv;
  return out;
}

AugmentedSet generate_counterfactuals(const Vae& vae, const Dataset& data, std::size_t k, std::uint64_t seed) {
  if (k == 0) throw ConfigError("number of counterfactual samples K must be at least 1");
  data.validate();
  const auto& c = vae.config();
  if (data.dim() != c.features || data.num_sensitive != c.num_sensitive) {
    throw ShapeError("dataset does not match the VAE");
  }
  const Vae::Posterior post = vae.encode(data.x, data.y);
  std::vector<std::vector<Matrix>> decodes(c.num_sensitive);
  Rng rng(seed);
  for (std::size_t draw = 0; draw < k; ++draw) {
    const Matrix h = sample_latent(post, rng);
    for (std::size_t s = 0; s < c.num_sensitive; ++s) decodes[s].push_back(vae.decode(h, s));
  }
  AugmentedSet out;
  for (const auto& d : decodes) {
    const Matrix m = aggregate_mean(d);
    out.x.push_back(slice_cols(m, 0, c.features));
    out.y.push_back(m.column_vector(c.features));
  }
  return out;
}

void write_counterfactual_csv(std::ostream& out, const AugmentedSet& set, std::span<const std::string> feature_names) {
  out << "id,s_prime";
  for (const auto& f : feature_names) out << ',' << f;
  out << ",y\n";
  out.precision(17);
  for (std::size_t s = 0; s < set.num_sensitive(); ++s) {
    if (set.x[s].cols() != feature_names.size()) throw ShapeError("feature names do not match counterfactuals");
    for (std::size_t i = 0; i < set.size(); ++i) {
      out << i << ',' << s;
      for (double v : set.x[s].row_span(i)) out << ',' << v;
      out << ',' << set.y[s][i] << '\n';
    }
  }
}

}  // namespace claire::augment

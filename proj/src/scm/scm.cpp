#include "claire/scm/scm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "claire/error.hpp"
#include "claire/numerics/linalg.hpp"
#include "claire/numerics/random.hpp"

namespace claire::scm {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void check_std(double sd, const std::string& node) {
  // Zero is allowed: it denotes a deterministic mechanism.
  if (!(sd >= 0.0) || !std::isfinite(sd)) {
    throw ValidationError("node '" + node + "' has invalid noise_std " + std::to_string(sd));
  }
}

void validate_mechanism(const CausalGraph& g, std::size_t v, const Mechanism& m) {
  const auto& name = g.nodes()[v].name;
  const auto parents = g.parents(v);
  const std::size_t sens = g.sensitive();
  const bool sens_parent = std::find(parents.begin(), parents.end(), sens) != parents.end();
  const bool is_sensitive = v == sens;
  std::visit(
      Overloaded{
          [&](const CategoricalRoot& c) {
            if (!is_sensitive) {
              throw ValidationError("categorical mechanism on non-sensitive node '" + name + "'");
            }
            if (c.probabilities.size() < 2) {
              throw ValidationError("sensitive node needs at least two categories");
            }
            double sum = 0.0;
            for (double p : c.probabilities) {
              if (!(p >= 0.0)) throw ValidationError("negative category probability on '" + name + "'");
              sum += p;
            }
            if (std::abs(sum - 1.0) > 1e-9) {
              throw ValidationError("category probabilities of '" + name + "' sum to " +
                                    std::to_string(sum));
            }
          },
          [&](const LinearGaussian& l) {
            if (is_sensitive) throw ValidationError("sensitive node needs a categorical mechanism");
            if (l.coefficients.size() != parents.size()) {
              throw ValidationError("node '" + name + "' has " + std::to_string(l.coefficients.size()) +
                                    " coefficients for " + std::to_string(parents.size()) + " parents");
            }
            check_std(l.noise_std, name);
          },
          [&](const LinearGaussianByS& l) {
            if (is_sensitive) throw ValidationError("sensitive node needs a categorical mechanism");
            const std::size_t plain = parents.size() - (sens_parent ? 1 : 0);
            if (l.coefficients.size() != plain) {
              throw ValidationError("node '" + name + "' has " + std::to_string(l.coefficients.size()) +
                                    " coefficients for " + std::to_string(plain) + " parents");
            }
            if (sens_parent == l.sensitive_weights.empty()) {
              throw ValidationError("node '" + name +
                                    "': sensitive weights must be given exactly when the sensitive "
                                    "node is a parent");
            }
            if (l.noise_std.empty()) throw ValidationError("node '" + name + "' has no noise scales");
            for (double sd : l.noise_std) check_std(sd, name);
          },
      },
      m);
}

std::size_t category_count(const CausalGraph& g, const std::vector<Mechanism>& mechs) {
  return std::get<CategoricalRoot>(mechs.at(g.sensitive())).probabilities.size();
}

// (parent, coefficient) for every non-sensitive parent of v.
std::vector<std::pair<std::size_t, double>> parent_terms(const Scm& scm, std::size_t v) {
  const auto parents = scm.graph().parents(v);
  const std::size_t sens = scm.graph().sensitive();
  std::vector<std::pair<std::size_t, double>> out;
  std::visit(Overloaded{
                 [](const CategoricalRoot&) {},
                 [&](const LinearGaussian& l) {
                   for (std::size_t k = 0; k < parents.size(); ++k) {
                     if (parents[k] != sens) out.emplace_back(parents[k], l.coefficients[k]);
                   }
                 },
                 [&](const LinearGaussianByS& l) {
                   std::size_t k = 0;
                   for (std::size_t p : parents) {
                     if (p != sens) out.emplace_back(p, l.coefficients[k++]);
                   }
                 },
             },
             scm.mechanism(v));
  return out;
}

// Every node as offset + loading * eps with eps ~ N(0, I), one exogenous
// coordinate per node, for a fixed sensitive value.
struct AffineForm {
  std::vector<double> offset;
  Matrix loading;
};

AffineForm affine_form(const Scm& scm, std::size_t s) {
  const std::size_t n = scm.graph().size();
  const std::size_t sens = scm.graph().sensitive();
  AffineForm f{std::vector<double>(n, 0.0), Matrix(n, n)};
  for (std::size_t v : scm.order()) {
    if (v == sens) {
      f.offset[v] = static_cast<double>(s);
      continue;
    }
    f.offset[v] = scm.structural_mean(v, f.offset, s);
    for (const auto& [p, c] : parent_terms(scm, v)) {
      for (std::size_t j = 0; j < n; ++j) f.loading(v, j) += c * f.loading(p, j);
    }
    f.loading(v, v) += scm.noise_std(v, s);
  }
  return f;
}

Matrix rows_of(const Matrix& m, std::span<const std::size_t> idx) { return gather_rows(m, idx); }

// Cholesky factor that tolerates (near) singular covariances.
Matrix robust_factor(Matrix cov) {
  const std::size_t k = cov.rows();
  double max_diag = 0.0;
  for (std::size_t i = 0; i < k; ++i) max_diag = std::max(max_diag, cov(i, i));
  if (max_diag <= 0.0) return Matrix(k, k);
  for (std::size_t i = 0; i < k; ++i) cov(i, i) += 1e-12 * max_diag;
  try {
    return linalg::cholesky(cov, 1e-14);
  } catch (const FitError&) {
    Matrix d(k, k);
    for (std::size_t i = 0; i < k; ++i) d(i, i) = std::sqrt(std::max(cov(i, i), 0.0));
    return d;
  }
}

// Posterior machinery for a fixed observed set, cached per sensitive value.
class Abductor {
 public:
  Abductor(const Scm& scm, std::vector<bool> observed) : scm_(scm), observed_mask_(std::move(observed)) {
    const auto& g = scm.graph();
    for (std::size_t v = 0; v < g.size(); ++v) {
      const auto role = g.nodes()[v].role;
      if (role == NodeRole::latent) {
        latent_.push_back(v);
      } else if (role != NodeRole::sensitive && observed_mask_[v]) {
        observed_.push_back(v);
      }
    }
    cache_.resize(scm.num_sensitive());
  }

  const std::vector<std::size_t>& latent() const { return latent_; }

  LatentPosterior posterior(std::span<const double> node_values, std::size_t s) {
    const auto& c = prepared(s);
    LatentPosterior out;
    out.latent_nodes = latent_;
    out.mean = c.latent_offset;
    for (std::size_t i = 0; i < latent_.size(); ++i) {
      for (std::size_t j = 0; j < observed_.size(); ++j) {
        out.mean[i] += c.gain(i, j) * (node_values[observed_[j]] - c.observed_offset[j]);
      }
    }
    out.covariance = c.covariance;
    return out;
  }

  const Matrix& factor(std::size_t s) { return prepared(s).factor; }

 private:
  struct Prepared {
    std::vector<double> latent_offset;
    std::vector<double> observed_offset;
    Matrix gain;
    Matrix covariance;
    Matrix factor;
  };

  const Prepared& prepared(std::size_t s) {
    if (s >= cache_.size()) throw ValidationError("sensitive value out of range");
    if (cache_[s]) return *cache_[s];
    const AffineForm f = affine_form(scm_, s);
    Prepared p;
    const Matrix bl = rows_of(f.loading, latent_);
    const Matrix bo = rows_of(f.loading, observed_);
    for (std::size_t v : latent_) p.latent_offset.push_back(f.offset[v]);
    for (std::size_t v : observed_) p.observed_offset.push_back(f.offset[v]);
    Matrix prior = matmul_nt(bl, bl);
    if (observed_.empty()) {
      p.gain = Matrix(latent_.size(), 0);
      p.covariance = prior;
    } else {
      Matrix coo = matmul_nt(bo, bo);
      double max_diag = 0.0;
      for (std::size_t i = 0; i < coo.rows(); ++i) max_diag = std::max(max_diag, coo(i, i));
      // Deterministic mechanisms make coo singular; a tiny ridge keeps the
      // conditional well defined and converges to the exact limit.
      for (std::size_t i = 0; i < coo.rows(); ++i) coo(i, i) += 1e-10 * std::max(max_diag, 1.0);
      const Matrix col = matmul_nt(bo, bl);  // O x L
      const Matrix solved = linalg::cholesky_solve(linalg::cholesky(coo, 1e-14), col);  // C_OO^-1 C_OL
      p.gain = transpose(solved);
      const Matrix reduce = matmul_tn(col, solved);
      p.covariance = prior;
      for (std::size_t i = 0; i < prior.size(); ++i) p.covariance[i] -= reduce[i];
      for (std::size_t i = 0; i < latent_.size(); ++i) {
        for (std::size_t j = 0; j < i; ++j) {
          const double avg = 0.5 * (p.covariance(i, j) + p.covariance(j, i));
          p.covariance(i, j) = p.covariance(j, i) = avg;
        }
      }
    }
    p.factor = robust_factor(p.covariance);
    cache_[s] = std::move(p);
    return *cache_[s];
  }

  const Scm& scm_;
  std::vector<bool> observed_mask_;
  std::vector<std::size_t> latent_;
  std::vector<std::size_t> observed_;
  std::vector<std::optional<Prepared>> cache_;
};

std::vector<double> draw(const LatentPosterior& post, const Matrix& factor, Rng& rng) {
  const std::size_t k = post.mean.size();
  std::vector<double> z(k), out(post.mean);
  for (auto& v : z) v = rng.normal();
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j <= i; ++j) out[i] += factor(i, j) * z[j];
  }
  return out;
}

void check_sensitive(const Scm& scm, std::size_t s, const char* what) {
  if (s >= scm.num_sensitive()) {
    throw ValidationError(std::string(what) + " " + std::to_string(s) + " outside 0.." +
                          std::to_string(scm.num_sensitive() - 1));
  }
}

// Counterfactual node values averaged over posterior draws. `factual` holds
// every non-latent node's value; latent entries are overwritten.
std::vector<double> counterfactual_nodes(const Scm& scm, Abductor& abductor, std::vector<double> factual,
                                         std::size_t s, std::size_t s_new, std::size_t n_samples,
                                         Rng& rng) {
  const auto& g = scm.graph();
  const std::size_t n = g.size();
  const std::size_t sens = g.sensitive();
  factual[sens] = static_cast<double>(s);
  const LatentPosterior post = abductor.posterior(factual, s);
  const Matrix& factor = abductor.factor(s);
  const std::size_t draws = post.latent_nodes.empty() ? 1 : std::max<std::size_t>(n_samples, 1);
  std::vector<double> acc(n, 0.0), cf(n, 0.0), residual(n, 0.0);
  for (std::size_t d = 0; d < draws; ++d) {
    const auto u = post.latent_nodes.empty() ? std::vector<double>{} : draw(post, factor, rng);
    for (std::size_t i = 0; i < u.size(); ++i) factual[post.latent_nodes[i]] = u[i];
    for (std::size_t v = 0; v < n; ++v) {
      const auto role = g.nodes()[v].role;
      if (role == NodeRole::latent || v == sens) continue;
      residual[v] = factual[v] - scm.structural_mean(v, factual, s);
    }
    for (std::size_t v : scm.order()) {
      if (v == sens) {
        cf[v] = static_cast<double>(s_new);
      } else if (g.nodes()[v].role == NodeRole::latent) {
        cf[v] = factual[v];
      } else {
        cf[v] = scm.structural_mean(v, cf, s_new) + residual[v];
      }
    }
    for (std::size_t v = 0; v < n; ++v) acc[v] += cf[v];
  }
  for (auto& v : acc) v /= static_cast<double>(draws);
  return acc;
}

std::vector<bool> non_latent_mask(const CausalGraph& g) {
  std::vector<bool> m(g.size());
  for (std::size_t v = 0; v < g.size(); ++v) m[v] = g.nodes()[v].role != NodeRole::latent;
  return m;
}

}  // namespace

void validate(const CausalGraph& graph, const std::vector<Mechanism>& mechanisms) {
  graph.validate();
  if (mechanisms.size() != graph.size()) {
    throw ValidationError("orphan mechanism: " + std::to_string(mechanisms.size()) +
                          " mechanisms for " + std::to_string(graph.size()) + " nodes");
  }
  for (std::size_t v = 0; v < graph.size(); ++v) validate_mechanism(graph, v, mechanisms[v]);
  const std::size_t k = category_count(graph, mechanisms);
  for (const auto& m : mechanisms) {
    if (const auto* l = std::get_if<LinearGaussianByS>(&m)) {
      if (l->noise_std.size() != k || (!l->sensitive_weights.empty() && l->sensitive_weights.size() != k)) {
        throw ValidationError("per-sensitive-value parameters must have " + std::to_string(k) + " entries");
      }
    }
  }
}

std::string mechanism_kind(const Mechanism& m) {
  return std::visit(Overloaded{
                        [](const CategoricalRoot&) { return std::string("categorical_root"); },
                        [](const LinearGaussian&) { return std::string("linear_gaussian"); },
                        [](const LinearGaussianByS&) { return std::string("linear_gaussian_by_s"); },
                    },
                    m);
}

Scm::Scm(CausalGraph graph, std::vector<Mechanism> mechanisms)
    : graph_(std::move(graph)), mechanisms_(std::move(mechanisms)) {
  validate(graph_, mechanisms_);
  order_ = graph_.topological_order();
  for (std::size_t v = 0; v < graph_.size(); ++v) parents_.push_back(graph_.parents(v));
  num_sensitive_ = category_count(graph_, mechanisms_);
}

std::span<const double> Scm::sensitive_probabilities() const {
  return std::get<CategoricalRoot>(mechanisms_[graph_.sensitive()]).probabilities;
}

std::vector<std::size_t> Scm::feature_nodes() const { return graph_.nodes_with_role(NodeRole::observed); }

std::vector<std::string> Scm::feature_names() const {
  std::vector<std::string> out;
  for (std::size_t v : feature_nodes()) out.push_back(graph_.nodes()[v].name);
  return out;
}

double Scm::structural_mean(std::size_t v, std::span<const double> values, std::size_t s) const {
  const auto& parents = parents_[v];
  const std::size_t sens = graph_.sensitive();
  return std::visit(Overloaded{
                        [&](const CategoricalRoot&) { return static_cast<double>(s); },
                        [&](const LinearGaussian& l) {
                          double m = l.intercept;
                          for (std::size_t k = 0; k < parents.size(); ++k) {
                            const double pv = parents[k] == sens ? static_cast<double>(s) : values[parents[k]];
                            m += l.coefficients[k] * pv;
                          }
                          return m;
                        },
                        [&](const LinearGaussianByS& l) {
                          double m = l.intercept;
                          std::size_t k = 0;
                          for (std::size_t p : parents) {
                            if (p != sens) m += l.coefficients[k++] * values[p];
                          }
                          if (!l.sensitive_weights.empty()) m += l.sensitive_weights.at(s) * static_cast<double>(s);
                          return m;
                        },
                    },
                    mechanisms_[v]);
}

double Scm::noise_std(std::size_t v, std::size_t s) const {
  return std::visit(Overloaded{
                        [](const CategoricalRoot&) { return 0.0; },
                        [](const LinearGaussian& l) { return l.noise_std; },
                        [&](const LinearGaussianByS& l) { return l.noise_std.at(s); },
                    },
                    mechanisms_[v]);
}

SampleRecord sample(const Scm& scm, std::size_t n, std::uint64_t seed, const SampleOptions& opt) {
  const auto& g = scm.graph();
  const std::size_t nodes = g.size();
  const std::size_t sens = g.sensitive();
  const std::size_t target = g.target();
  if (opt.fixed_sensitive) check_sensitive(scm, *opt.fixed_sensitive, "fixed sensitive value");
  Rng rng(seed);
  SampleRecord rec{{}, Matrix(n, nodes), Matrix(n, nodes)};
  const auto probs = scm.sensitive_probabilities();
  for (std::size_t i = 0; i < n; ++i) {
    auto values = rec.values.row_span(i);
    std::size_t s = 0;
    for (std::size_t v : scm.order()) {
      if (v == sens) {
        s = opt.fixed_sensitive ? *opt.fixed_sensitive : rng.categorical(probs);
        values[v] = static_cast<double>(s);
        continue;
      }
      const double eps = scm.noise_std(v, s) * rng.normal();
      rec.noise(i, v) = eps;
      values[v] = scm.structural_mean(v, values, s) + eps;
    }
  }
  const auto features = scm.feature_nodes();
  Dataset& d = rec.data;
  d.feature_names = scm.feature_names();
  d.num_sensitive = scm.num_sensitive();
  d.task = opt.task;
  d.x = Matrix(n, features.size());
  d.s.resize(n);
  d.y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < features.size(); ++j) d.x(i, j) = rec.values(i, features[j]);
    d.s[i] = static_cast<std::size_t>(rec.values(i, sens));
    d.y[i] = rec.values(i, target);
  }
  return rec;
}

LatentPosterior latent_posterior(const Scm& scm, std::span<const std::optional<double>> node_values,
                                 std::size_t s) {
  const auto& g = scm.graph();
  if (node_values.size() != g.size()) {
    throw ShapeError("latent_posterior expects " + std::to_string(g.size()) + " node values");
  }
  check_sensitive(scm, s, "sensitive value");
  std::vector<bool> mask(g.size());
  std::vector<double> values(g.size(), 0.0);
  for (std::size_t v = 0; v < g.size(); ++v) {
    mask[v] = node_values[v].has_value();
    if (mask[v]) values[v] = *node_values[v];
  }
  Abductor ab(scm, mask);
  return ab.posterior(values, s);
}

Counterfactual counterfactual(const Scm& scm, const Instance& instance, std::size_t s_new,
                              std::size_t n_samples, std::uint64_t seed) {
  const auto& g = scm.graph();
  check_sensitive(scm, instance.s, "sensitive value");
  check_sensitive(scm, s_new, "counterfactual sensitive value");
  const auto features = scm.feature_nodes();
  if (instance.x.size() != features.size()) {
    throw ShapeError("instance has " + std::to_string(instance.x.size()) + " features, model expects " +
                     std::to_string(features.size()));
  }
  std::vector<double> factual(g.size(), 0.0);
  for (std::size_t j = 0; j < features.size(); ++j) factual[features[j]] = instance.x[j];
  factual[g.target()] = instance.y;
  Abductor ab(scm, non_latent_mask(g));
  Rng rng(seed);
  const auto nodes = counterfactual_nodes(scm, ab, std::move(factual), instance.s, s_new, n_samples, rng);
  Counterfactual out;
  for (std::size_t v : features) out.x.push_back(nodes[v]);
  out.y = nodes[g.target()];
  return out;
}

Dataset counterfactual_dataset(const Scm& scm, const Dataset& data, std::size_t s_new,
                               std::size_t n_samples, std::uint64_t seed) {
  data.validate();
  const auto& g = scm.graph();
  check_sensitive(scm, s_new, "counterfactual sensitive value");
  if (data.num_sensitive != scm.num_sensitive()) {
    throw ValidationError("dataset and model disagree on the number of sensitive values");
  }
  // Graph nodes map onto named columns; columns outside the graph are copied.
  const auto features = scm.feature_nodes();
  std::vector<std::size_t> column;
  for (std::size_t v : features) column.push_back(data.feature_index(g.nodes()[v].name));
  Abductor ab(scm, non_latent_mask(g));
  Dataset out = data;
  std::vector<double> factual(g.size(), 0.0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < features.size(); ++j) factual[features[j]] = data.x(i, column[j]);
    factual[g.target()] = data.y[i];
    Rng rng(derive_seed(seed, i));
    const auto nodes = counterfactual_nodes(scm, ab, factual, data.s[i], s_new, n_samples, rng);
    for (std::size_t j = 0; j < features.size(); ++j) out.x(i, column[j]) = nodes[features[j]];
    out.y[i] = nodes[g.target()];
    out.s[i] = s_new;
  }
  return out;
}

Matrix posterior_latent_means(const Scm& scm, const Dataset& data, std::size_t n_samples,
                              std::uint64_t seed) {
  data.validate();
  const auto& g = scm.graph();
  std::vector<bool> mask(g.size(), false);
  const auto features = scm.feature_nodes();
  std::vector<std::size_t> column;
  for (std::size_t v : features) {
    mask[v] = true;
    column.push_back(data.feature_index(g.nodes()[v].name));
  }
  Abductor ab(scm, mask);
  Matrix out(data.size(), ab.latent().size());
  std::vector<double> values(g.size(), 0.0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    check_sensitive(scm, data.s[i], "sensitive value");
    for (std::size_t j = 0; j < features.size(); ++j) values[features[j]] = data.x(i, column[j]);
    const auto post = ab.posterior(values, data.s[i]);
    const Matrix& factor = ab.factor(data.s[i]);
    Rng rng(derive_seed(seed, i));
    const std::size_t draws = std::max<std::size_t>(n_samples, 1);
    for (std::size_t d = 0; d < draws; ++d) {
      const auto u = draw(post, factor, rng);
      for (std::size_t k = 0; k < u.size(); ++k) out(i, k) += u[k];
    }
    for (std::size_t k = 0; k < out.cols(); ++k) out(i, k) /= static_cast<double>(draws);
  }
  return out;
}

}  // namespace claire::scm

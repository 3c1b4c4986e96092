#include "claire/scm/models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "claire/error.hpp"
#include "claire/numerics/linalg.hpp"

namespace claire::scm {

namespace {

// Floor on the fitted noise variance, as a fraction of the residual variance,
// once latent parents have claimed their share.
constexpr double kMinNoiseShare = 0.01;

std::vector<double> node_column(const CausalGraph& g, std::size_t v, const Dataset& data) {
  const Node& node = g.nodes()[v];
  switch (node.role) {
    case NodeRole::observed: {
      const std::size_t c = data.feature_index(node.name);
      return data.x.column_vector(c);
    }
    case NodeRole::target:
      return data.y;
    case NodeRole::sensitive: {
      std::vector<double> out(data.s.size());
      std::transform(data.s.begin(), data.s.end(), out.begin(), [](std::size_t s) { return static_cast<double>(s); });
      return out;
    }
    case NodeRole::latent:
      break;
  }
  throw FitError("latent node '" + node.name + "' has no data column");
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

Scm claire_synthetic(const SyntheticParams& p) {
  CausalGraph g;
  g.add_node("S", NodeRole::sensitive);
  g.add_node("U", NodeRole::latent);
  g.add_node("X0", NodeRole::observed);
  g.add_node("X1", NodeRole::observed);
  g.add_node("Y", NodeRole::target);
  g.add_node("X2", NodeRole::observed);
  g.add_edge("S", "X1");
  g.add_edge("U", "X1");
  g.add_edge("X1", "Y");
  g.add_edge("X0", "Y");
  g.add_edge("Y", "X2");
  std::vector<Mechanism> m;
  m.emplace_back(CategoricalRoot{p.probabilities});
  m.emplace_back(LinearGaussian{{}, 0.0, p.latent_std});
  m.emplace_back(LinearGaussian{{}, 0.0, p.root_std});
  m.emplace_back(LinearGaussianByS{{1.0}, p.sensitive_weights, p.noise_std, 0.0});
  m.emplace_back(LinearGaussianByS{{1.0, 1.0}, {}, p.noise_std, 0.0});
  m.emplace_back(LinearGaussianByS{{1.0}, {}, p.noise_std, 0.0});
  return Scm(std::move(g), std::move(m));
}

Mechanism fit_mechanism(const CausalGraph& g, std::size_t v, const Dataset& data) {
  const Node& node = g.nodes()[v];
  const std::size_t n = data.size();
  if (n < 2) throw FitError("need at least two rows to fit '" + node.name + "'");
  if (node.role == NodeRole::sensitive) {
    std::vector<double> p(data.num_sensitive, 0.0);
    for (std::size_t s : data.s) p.at(s) += 1.0;
    for (auto& q : p) q /= static_cast<double>(n);
    return CategoricalRoot{p};
  }
  const auto parents = g.parents(v);
  if (node.role == NodeRole::latent) {
    if (!parents.empty()) throw FitError("latent node '" + node.name + "' must be a root to be fitted");
    return LinearGaussian{{}, 0.0, 1.0};
  }
  const std::vector<double> target = node_column(g, v, data);
  std::vector<std::size_t> measured;
  std::size_t latent_parents = 0;
  for (std::size_t p : parents) {
    if (g.nodes()[p].role == NodeRole::latent) {
      ++latent_parents;
    } else {
      measured.push_back(p);
    }
  }
  LinearGaussian out;
  out.coefficients.assign(parents.size(), 1.0);
  double resid_var = 0.0;
  if (measured.empty()) {
    out.intercept = mean_of(target);
    for (double t : target) resid_var += (t - out.intercept) * (t - out.intercept);
    resid_var /= static_cast<double>(n);
  } else {
    Matrix design(n, measured.size());
    for (std::size_t k = 0; k < measured.size(); ++k) {
      const auto col = node_column(g, measured[k], data);
      for (std::size_t i = 0; i < n; ++i) design(i, k) = col[i];
    }
    linalg::OlsFit fit;
    try {
      fit = linalg::ols(design, target);
    } catch (const FitError&) {
      throw FitError("singular design while fitting node '" + node.name + "'");
    }
    out.intercept = fit.intercept;
    std::size_t k = 0;
    for (std::size_t i = 0; i < parents.size(); ++i) {
      if (g.nodes()[parents[i]].role != NodeRole::latent) out.coefficients[i] = fit.coefficients[k++];
    }
    resid_var = fit.residual_variance;
  }
  const double noise_var =
      std::max(resid_var - static_cast<double>(latent_parents), kMinNoiseShare * resid_var);
  out.noise_std = std::sqrt(noise_var);
  return out;
}

Scm fit_linear_scm(const CausalGraph& graph, const Dataset& data) {
  graph.validate();
  data.validate();
  std::vector<Mechanism> m;
  for (std::size_t v = 0; v < graph.size(); ++v) m.push_back(fit_mechanism(graph, v, data));
  return Scm(graph, std::move(m));
}

Variant variant_from_string(const std::string& tag) {
  if (tag == "M1" || tag == "m1") return Variant::reversed_child;
  if (tag == "M2" || tag == "m2") return Variant::missing_sensitive;
  throw ConfigError("unknown model variant '" + tag + "' (expected M1 or M2)");
}

std::string to_string(Variant v) { return v == Variant::reversed_child ? "M1" : "M2"; }

CausalGraph variant_graph(const CausalGraph& graph, Variant which) {
  CausalGraph out = graph;
  const auto& nodes = graph.nodes();
  if (which == Variant::reversed_child) {
    const std::size_t y = graph.target();
    std::size_t reversed = 0;
    for (std::size_t c : graph.children(y)) {
      if (nodes[c].role != NodeRole::observed) continue;
      out.remove_edge(nodes[y].name, nodes[c].name);
      out.add_edge(nodes[c].name, nodes[y].name);
      ++reversed;
    }
    if (reversed == 0) throw ValidationError("target has no observed child to reverse");
  } else {
    const std::size_t s = graph.sensitive();
    const auto children = graph.children(s);
    if (children.empty()) throw ValidationError("sensitive node has no outgoing edge to remove");
    for (std::size_t c : children) out.remove_edge(nodes[s].name, nodes[c].name);
  }
  out.validate();
  return out;
}

Scm incorrect_variant(const Scm& truth, Variant which, const Dataset& data) {
  const CausalGraph& g = truth.graph();
  CausalGraph edited = variant_graph(g, which);
  std::vector<Mechanism> m = truth.mechanisms();
  for (std::size_t v = 0; v < g.size(); ++v) {
    if (g.parents(v) != edited.parents(v)) m[v] = fit_mechanism(edited, v, data);
  }
  return Scm(std::move(edited), std::move(m));
}

Scm incorrect_variant(const Scm& truth, Variant which, std::uint64_t seed, std::size_t n) {
  return incorrect_variant(truth, which, sample(truth, n, seed).data);
}

}  // namespace claire::scm

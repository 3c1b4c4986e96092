#include "claire/scm/serialize.hpp"

#include <fstream>

#include "claire/error.hpp"

namespace claire::scm {

using nlohmann::json;

json graph_to_json(const CausalGraph& g) {
  json nodes = json::array();
  for (const auto& n : g.nodes()) nodes.push_back({{"name", n.name}, {"role", to_string(n.role)}});
  json edges = json::array();
  for (const auto& [from, to] : g.edges()) edges.push_back({g.nodes()[from].name, g.nodes()[to].name});
  return {{"nodes", nodes}, {"edges", edges}};
}

CausalGraph graph_from_json(const json& j) {
  try {
    CausalGraph g;
    for (const auto& n : j.at("nodes")) {
      g.add_node(n.at("name").get<std::string>(), role_from_string(n.at("role").get<std::string>()));
    }
    for (const auto& e : j.at("edges")) {
      if (!e.is_array() || e.size() != 2) throw ConfigError("edge must be a [from, to] pair");
      g.add_edge(e[0].get<std::string>(), e[1].get<std::string>());
    }
    g.validate();
    return g;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed graph document: ") + e.what());
  }
}

json scm_to_json(const Scm& scm) {
  const auto& g = scm.graph();
  json doc = graph_to_json(g);
  json mechs = json::object();
  const std::size_t sens = g.sensitive();
  for (std::size_t v = 0; v < g.size(); ++v) {
    const auto parents = g.parents(v);
    json m{{"kind", mechanism_kind(scm.mechanism(v))}};
    if (const auto* c = std::get_if<CategoricalRoot>(&scm.mechanism(v))) {
      m["probabilities"] = c->probabilities;
    } else if (const auto* l = std::get_if<LinearGaussian>(&scm.mechanism(v))) {
      json coef = json::object();
      for (std::size_t k = 0; k < parents.size(); ++k) coef[g.nodes()[parents[k]].name] = l->coefficients[k];
      m["coefficients"] = coef;
      m["intercept"] = l->intercept;
      m["noise_std"] = l->noise_std;
    } else if (const auto* b = std::get_if<LinearGaussianByS>(&scm.mechanism(v))) {
      json coef = json::object();
      std::size_t k = 0;
      for (std::size_t p : parents) {
        if (p != sens) coef[g.nodes()[p].name] = b->coefficients[k++];
      }
      m["coefficients"] = coef;
      m["intercept"] = b->intercept;
      m["noise_std"] = b->noise_std;
      if (!b->sensitive_weights.empty()) m["sensitive_weights"] = b->sensitive_weights;
    }
    mechs[g.nodes()[v].name] = m;
  }
  doc["mechanisms"] = mechs;
  return doc;
}

Scm scm_from_json(const json& j) {
  CausalGraph g = graph_from_json(j);
  const std::size_t sens = g.sensitive();
  std::vector<Mechanism> mechs;
  try {
    const json& all = j.at("mechanisms");
    for (std::size_t v = 0; v < g.size(); ++v) {
      const auto& name = g.nodes()[v].name;
      if (!all.contains(name)) throw ValidationError("orphan node '" + name + "' has no mechanism");
      const json& m = all.at(name);
      const auto kind = m.at("kind").get<std::string>();
      const auto parents = g.parents(v);
      auto coefficients = [&](bool skip_sensitive) {
        std::vector<double> out;
        const json& c = m.value("coefficients", json::object());
        for (std::size_t p : parents) {
          if (skip_sensitive && p == sens) continue;
          const auto& pname = g.nodes()[p].name;
          if (!c.contains(pname)) throw ValidationError("node '" + name + "' lacks a coefficient for '" + pname + "'");
          out.push_back(c.at(pname).get<double>());
        }
        if (c.size() > out.size()) {
          throw ValidationError("node '" + name + "' has coefficients for non-parents");
        }
        return out;
      };
      if (kind == "categorical_root") {
        mechs.emplace_back(CategoricalRoot{m.at("probabilities").get<std::vector<double>>()});
      } else if (kind == "linear_gaussian") {
        mechs.emplace_back(LinearGaussian{coefficients(false), m.value("intercept", 0.0), m.at("noise_std").get<double>()});
      } else if (kind == "linear_gaussian_by_s") {
        LinearGaussianByS b;
        b.coefficients = coefficients(true);
        b.intercept = m.value("intercept", 0.0);
        b.noise_std = m.at("noise_std").get<std::vector<double>>();
        if (m.contains("sensitive_weights")) b.sensitive_weights = m.at("sensitive_weights").get<std::vector<double>>();
        mechs.emplace_back(std::move(b));
      } else {
        throw ConfigError("unknown mechanism kind '" + kind + "'");
      }
    }
    if (all.size() != g.size()) throw ValidationError("orphan mechanism for a node not in the graph");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed model document: ") + e.what());
  }
  return Scm(std::move(g), std::move(mechs));
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

}  // namespace claire::scm

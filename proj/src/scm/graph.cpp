#include "claire/scm/graph.hpp"

#include <algorithm>

#include "claire/error.hpp"

namespace claire::scm {

std::size_t CausalGraph::add_node(std::string name, NodeRole role) {
  if (contains(name)) throw ValidationError("duplicate node '" + name + "'");
  nodes_.push_back({std::move(name), role});
  return nodes_.size() - 1;
}

void CausalGraph::add_edge(const std::string& from, const std::string& to) {
  add_edge(index_of(from), index_of(to));
}

void CausalGraph::add_edge(std::size_t from, std::size_t to) {
  if (from >= nodes_.size() || to >= nodes_.size()) throw ValidationError("edge endpoint out of range");
  if (from == to) throw ValidationError("self-loop on '" + nodes_[from].name + "'");
  const auto e = std::make_pair(from, to);
  if (std::find(edges_.begin(), edges_.end(), e) == edges_.end()) edges_.push_back(e);
}

void CausalGraph::remove_edge(const std::string& from, const std::string& to) {
  const auto e = std::make_pair(index_of(from), index_of(to));
  const auto it = std::find(edges_.begin(), edges_.end(), e);
  if (it == edges_.end()) throw ValidationError("no edge " + from + " -> " + to);
  edges_.erase(it);
}

bool CausalGraph::has_edge(const std::string& from, const std::string& to) const {
  if (!contains(from) || !contains(to)) return false;
  const auto e = std::make_pair(index_of(from), index_of(to));
  return std::find(edges_.begin(), edges_.end(), e) != edges_.end();
}

std::size_t CausalGraph::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].name == name) return i;
  }
  throw ValidationError("unknown node '" + name + "'");
}

bool CausalGraph::contains(const std::string& name) const {
  return std::any_of(nodes_.begin(), nodes_.end(), [&](const Node& n) { return n.name == name; });
}

std::vector<std::size_t> CausalGraph::parents(std::size_t v) const {
  std::vector<std::size_t> out;
  for (const auto& [from, to] : edges_) {
    if (to == v) out.push_back(from);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::size_t> CausalGraph::children(std::size_t v) const {
  std::vector<std::size_t> out;
  for (const auto& [from, to] : edges_) {
    if (from == v) out.push_back(to);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::size_t> CausalGraph::topological_order() const {
  std::vector<std::size_t> indegree(nodes_.size(), 0);
  for (const auto& e : edges_) ++indegree[e.second];
  std::vector<std::size_t> order;
  std::vector<bool> done(nodes_.size(), false);
  // Kahn's algorithm, always taking the lowest ready index for a stable order.
  while (order.size() < nodes_.size()) {
    std::size_t pick = nodes_.size();
    for (std::size_t v = 0; v < nodes_.size(); ++v) {
      if (!done[v] && indegree[v] == 0) {
        pick = v;
        break;
      }
    }
    if (pick == nodes_.size()) {
      for (std::size_t v = 0; v < nodes_.size(); ++v) {
        if (!done[v]) throw ValidationError("cycle found through node '" + nodes_[v].name + "'");
      }
    }
    done[pick] = true;
    order.push_back(pick);
    for (std::size_t c : children(pick)) --indegree[c];
  }
  return order;
}

std::vector<bool> CausalGraph::descendants(std::size_t from) const {
  std::vector<bool> seen(nodes_.size(), false);
  std::vector<std::size_t> stack = children(from);
  while (!stack.empty()) {
    const std::size_t v = stack.back();
    stack.pop_back();
    if (seen[v]) continue;
    seen[v] = true;
    for (std::size_t c : children(v)) stack.push_back(c);
  }
  return seen;
}

std::vector<std::size_t> CausalGraph::nodes_with_role(NodeRole role) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].role == role) out.push_back(i);
  }
  return out;
}

std::size_t CausalGraph::sensitive() const {
  const auto s = nodes_with_role(NodeRole::sensitive);
  if (s.size() != 1) {
    throw ValidationError("graph must have exactly one sensitive node, found " +
                          std::to_string(s.size()));
  }
  return s.front();
}

std::size_t CausalGraph::target() const {
  const auto t = nodes_with_role(NodeRole::target);
  if (t.size() != 1) {
    throw ValidationError("graph must have exactly one target node, found " +
                          std::to_string(t.size()));
  }
  return t.front();
}

void CausalGraph::validate() const {
  const std::size_t s = sensitive();
  (void)target();
  if (!parents(s).empty()) {
    throw ValidationError("sensitive node '" + nodes_[s].name + "' must not have parents");
  }
  (void)topological_order();
}

std::string to_string(NodeRole r) {
  switch (r) {
    case NodeRole::observed:
      return "observed";
    case NodeRole::latent:
      return "latent";
    case NodeRole::sensitive:
      return "sensitive";
    case NodeRole::target:
      return "target";
  }
  return "observed";
}

NodeRole role_from_string(const std::string& s) {
  if (s == "observed") return NodeRole::observed;
  if (s == "latent") return NodeRole::latent;
  if (s == "sensitive") return NodeRole::sensitive;
  if (s == "target") return NodeRole::target;
  throw ConfigError("unknown node role '" + s + "'");
}

}  // namespace claire::scm

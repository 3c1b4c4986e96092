#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace claire::scm {

enum class NodeRole { observed, latent, sensitive, target };

struct Node {
  std::string name;
  NodeRole role = NodeRole::observed;
};

// Directed graph over named variables. Parents are reported in node-index
// order, which is also the order mechanism coefficients follow.
class CausalGraph {
 public:
  std::size_t add_node(std::string name, NodeRole role);
  void add_edge(const std::string& from, const std::string& to);
  void add_edge(std::size_t from, std::size_t to);
  void remove_edge(const std::string& from, const std::string& to);
  bool has_edge(const std::string& from, const std::string& to) const;

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<std::pair<std::size_t, std::size_t>>& edges() const { return edges_; }
  std::size_t size() const { return nodes_.size(); }
  std::size_t index_of(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::vector<std::size_t> parents(std::size_t v) const;
  std::vector<std::size_t> children(std::size_t v) const;
  // Throws ValidationError naming a node on the cycle.
  std::vector<std::size_t> topological_order() const;
  // is_descendant[v] for every v reachable from `from` (excluding itself).
  std::vector<bool> descendants(std::size_t from) const;

  std::size_t sensitive() const;
  std::size_t target() const;
  std::vector<std::size_t> nodes_with_role(NodeRole role) const;

  // Acyclic, exactly one sensitive root, exactly one target.
  void validate() const;

 private:
  std::vector<Node> nodes_;
  std::vector<std::pair<std::size_t, std::size_t>> edges_;
};

std::string to_string(NodeRole r);
NodeRole role_from_string(const std::string& s);

}  // namespace claire::scm

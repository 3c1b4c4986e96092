#pragma once

#include <vector>

#include "claire/scm/scm.hpp"

namespace claire::testing {

// X1 = S + U + e1, Y = X1 + X3 + eY, X2 = Y + e2. Feature columns: X1, X3, X2.
inline scm::Scm proxy_sem(double sigma_y, double sigma_2) {
  using namespace scm;
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
  std::vector<Mechanism> m{CategoricalRoot{{0.5, 0.5}},         LinearGaussian{{}, 0.0, 1.0},
                           LinearGaussian{{1.0, 1.0}, 0.0, 1.0}, LinearGaussian{{}, 0.0, 1.0},
                           LinearGaussian{{1.0, 1.0}, 0.0, sigma_y}, LinearGaussian{{1.0}, 0.0, sigma_2}};
  return Scm(g, m);
}

}  // namespace claire::testing

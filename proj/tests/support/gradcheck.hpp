#pragma once

// Central finite-difference oracle. Independent of the reverse-mode path: it
// only ever evaluates the loss forward with perturbed parameter values.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "claire/numerics/autodiff.hpp"

namespace claire::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coords = 0;
};

// Relative error |a - f| / max(|a|, |f|, floor).
inline double relative_error(double a, double f, double floor = 1e-5) {
  return std::abs(a - f) / std::max({std::abs(a), std::abs(f), floor});
}

inline GradCheckResult gradient_check(const std::function<ad::Var(ad::Tape&)>& build,
                                      const std::vector<ad::Parameter*>& params,
                                      std::size_t coords, std::uint64_t seed, double h = 1e-5) {
  for (auto* p : params) p->zero_grad();
  {
    ad::Tape tape;
    tape.backward(build(tape));
  }
  std::vector<std::pair<std::size_t, std::size_t>> all;
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (std::size_t i = 0; i < params[k]->value.size(); ++i) all.emplace_back(k, i);
  }
  std::mt19937_64 rng(seed);
  std::shuffle(all.begin(), all.end(), rng);
  if (all.size() > coords) all.resize(coords);

  auto eval = [&] {
    ad::Tape tape;
    return build(tape).scalar();
  };
  GradCheckResult res;
  for (auto [k, i] : all) {
    double& x = params[k]->value[i];
    const double saved = x;
    x = saved + h;
    const double fp = eval();
    x = saved - h;
    const double fm = eval();
    x = saved;
    const double fd = (fp - fm) / (2.0 * h);
    res.max_rel_error = std::max(res.max_rel_error, relative_error(params[k]->grad[i], fd));
    ++res.coords;
  }
  return res;
}

}  // namespace claire::testing

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "claire/numerics/autodiff.hpp"

namespace claire {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam. Moment buffers are matched to parameters by position
// and allocated on the first step.
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  // Applies one update from each parameter's accumulated grad.
  void step(std::span<ad::Parameter* const> params);

  static void zero_grad(std::span<ad::Parameter* const> params);

  std::size_t step_count() const { return step_count_; }
  const AdamOptions& options() const { return options_; }
  const std::vector<Matrix>& first_moment() const { return m_; }
  const std::vector<Matrix>& second_moment() const { return v_; }

 private:
  AdamOptions options_;
  std::size_t step_count_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

}  // namespace claire

#include "claire/numerics/adam.hpp"

#include <cmath>

#include "claire/error.hpp"

namespace claire {

void Adam::step(std::span<ad::Parameter* const> params) {
  if (m_.empty()) {
    for (const auto* p : params) {
      m_.emplace_back(p->value.rows(), p->value.cols());
      v_.emplace_back(p->value.rows(), p->value.cols());
    }
  }
  if (m_.size() != params.size()) throw ShapeError("Adam: parameter list changed between steps");
  ++step_count_;
  const double t = static_cast<double>(step_count_);
  const double c1 = 1.0 - std::pow(options_.beta1, t);
  const double c2 = 1.0 - std::pow(options_.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    ad::Parameter& p = *params[k];
    if (!p.grad.same_shape(p.value) || !m_[k].same_shape(p.value)) {
      throw ShapeError("Adam: shape mismatch for parameter '" + p.name + "'");
    }
    Matrix& m = m_[k];
    Matrix& v = v_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * g;
      v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * g * g;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p.value[i] -= options_.lr * mhat / (std::sqrt(vhat) + options_.epsilon);
    }
  }
}

void Adam::zero_grad(std::span<ad::Parameter* const> params) {
  for (auto* p : params) p->zero_grad();
}

}  // namespace claire

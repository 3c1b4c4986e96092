#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "claire/numerics/matrix.hpp"

// Reverse-mode differentiation over whole matrices. A Tape records one forward
// evaluation; backward() walks it in reverse and adds d(loss)/d(value) into
// every Parameter reached. A tape is single-use and not thread-safe.
namespace claire::ad {

struct Parameter {
  Parameter() = default;
  explicit Parameter(Matrix v, std::string n = {})
      : value(std::move(v)), grad(value.rows(), value.cols()), name(std::move(n)) {}

  void zero_grad() { grad.fill(0.0); }

  Matrix value;
  Matrix grad;
  std::string name;
};

class Tape;

class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  // Convenience for 1x1 results.
  double scalar() const { return value()[0]; }
  Tape* tape() const { return tape_; }
  std::size_t index() const { return index_; }

 private:
  friend class Tape;
  Var(Tape* t, std::size_t i) : tape_(t), index_(i) {}
  Tape* tape_ = nullptr;
  std::size_t index_ = 0;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix& upstream)>;

  Var constant(Matrix value);
  Var parameter(Parameter& p);

  // Appends an op result. Throws NumericError naming `op` if value is not finite.
  Var record(std::string_view op, Matrix value, std::initializer_list<Var> inputs,
             Backward backward);

  const Matrix& value(Var v) const { return nodes_[v.index()].value; }
  bool requires_grad(Var v) const { return nodes_[v.index()].requires_grad; }
  // Adds g into the gradient buffer of v; no-op for nodes that need no gradient.
  void accumulate(Var v, const Matrix& g);
  // Takes over g as the buffer when nothing has been accumulated yet.
  void accumulate(Var v, Matrix&& g);
  void accumulate_scaled(Var v, const Matrix& g, double alpha);

  // Seeds d(loss)/d(loss) = 1 for a 1x1 loss and propagates.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    std::string_view op;
    Matrix value;
    Matrix grad;
    Backward backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };
  Matrix& grad_buffer(std::size_t i);
  std::vector<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape_->value(*this); }

Var matmul(Var a, Var b);
// x [n x k] + bias [1 x k] broadcast over rows
Var add_bias(Var x, Var bias);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var leaky_relu(Var a, double slope);
Var sigmoid(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);
// Subgradient 0 at 0.
Var abs(Var a);
Var softmax_rows(Var a);
Var log_softmax_rows(Var a);
// 1x1 results
Var sum(Var a);
Var mean(Var a);
// n x 1 row sums
Var row_sum(Var a);
Var concat_cols(Var a, Var b);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var gather_rows(Var a, std::span<const std::size_t> idx);
// n x 1: a(i, labels[i])
Var pick_per_row(Var a, std::span<const std::size_t> labels);
// n x 1 cosine distance 1 - cos(a_i, b_i). A zero-norm row yields distance 1
// with zero gradient.
Var cosine_distance_rows(Var a, Var b);
// Biased (V-statistic) squared MMD with k(x,y) = exp(-|x-y|^2 / (2 h^2)).
// The bandwidth h is a constant of the op.
Var mmd_rbf(Var a, Var b, double bandwidth);

// Average of mmd_rbf over all unordered pairs of groups, where row i of `x`
// belongs to group labels[i] < num_groups. Builds one n x n Gram matrix
// instead of one per pair. Every group must be non-empty.
Var grouped_mmd_rbf(Var x, std::span<const std::size_t> labels, std::size_t num_groups, double bandwidth);
// n x 1 elementwise binary cross-entropy of sigmoid(logits) against targets.
Var bce_with_logits(Var logits, const Matrix& targets);

}  // namespace claire::ad

#include "claire/numerics/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <memory>

#include "claire/error.hpp"
#include "claire/numerics/kernels.hpp"

namespace claire::ad {

Var Tape::constant(Matrix value) {
  if (!value.all_finite()) throw NumericError("non-finite constant fed to tape");
  nodes_.push_back(Node{"constant", std::move(value), {}, {}, nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Parameter& p) {
  if (!p.value.all_finite()) {
    throw NumericError("non-finite parameter '" + p.name + "'");
  }
  if (!p.grad.same_shape(p.value)) p.grad = Matrix(p.value.rows(), p.value.cols());
  nodes_.push_back(Node{"parameter", p.value, {}, {}, &p, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(std::string_view op, Matrix value, std::initializer_list<Var> inputs,
                 Backward backward) {
  if (!value.all_finite()) {
    throw NumericError("non-finite value produced by op '" + std::string(op) + "'");
  }
  bool needs = false;
  for (const Var& in : inputs) {
    if (in.tape() != this) throw ShapeError("op '" + std::string(op) + "' mixes tapes");
    needs = needs || nodes_[in.index()].requires_grad;
  }
  nodes_.push_back(
      Node{op, std::move(value), {}, needs ? std::move(backward) : Backward{}, nullptr, needs});
  return Var(this, nodes_.size() - 1);
}

Matrix& Tape::grad_buffer(std::size_t i) {
  Node& n = nodes_[i];
  if (n.grad.empty() && !n.value.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::accumulate(Var v, const Matrix& g) { accumulate_scaled(v, g, 1.0); }

void Tape::accumulate(Var v, Matrix&& g) {
  Node& n = nodes_[v.index()];
  if (n.requires_grad && n.grad.empty() && !n.value.empty() && n.value.same_shape(g)) {
    n.grad = std::move(g);
    return;
  }
  accumulate_scaled(v, g, 1.0);
}

void Tape::accumulate_scaled(Var v, const Matrix& g, double alpha) {
  if (!nodes_[v.index()].requires_grad) return;
  Matrix& buf = grad_buffer(v.index());
  if (!buf.same_shape(g)) {
    throw ShapeError("gradient " + g.shape_string() + " for node of shape " + buf.shape_string());
  }
  kernels::active().axpy(alpha, g.data().data(), buf.data().data(), g.size());
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw ShapeError("backward on foreign variable");
  if (value(loss).size() != 1) throw ShapeError("backward requires a 1x1 loss");
  if (!nodes_[loss.index()].requires_grad) return;
  grad_buffer(loss.index())[0] += 1.0;
  for (std::size_t i = loss.index() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (!n.grad.all_finite()) {
      throw NumericError("non-finite gradient reaching op '" + std::string(n.op) + "'");
    }
    if (n.backward) n.backward(*this, n.grad);
    if (n.param != nullptr) {
      kernels::active().axpy(1.0, n.grad.data().data(), n.param->grad.data().data(),
                             n.grad.size());
    }
  }
}

namespace {

void require_same_shape(const char* op, Var a, Var b) {
  if (!a.value().same_shape(b.value())) {
    throw ShapeError(std::string(op) + ": " + a.value().shape_string() + " vs " +
                     b.value().shape_string());
  }
}

template <typename F>
Matrix map(const Matrix& m, F f) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = f(m[i]);
  return out;
}

Matrix scalar_matrix(double v) { return Matrix(1, 1, v); }

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = *a.tape();
  return t.record("matmul", claire::matmul(a.value(), b.value()), {a, b},
                  [a, b](Tape& tp, const Matrix& g) {
                    if (tp.requires_grad(a)) tp.accumulate(a, matmul_nt(g, b.value()));
                    if (tp.requires_grad(b)) tp.accumulate(b, matmul_tn(a.value(), g));
                  });
}

Var add_bias(Var x, Var bias) {
  const Matrix& xv = x.value();
  const Matrix& bv = bias.value();
  if (bv.rows() != 1 || bv.cols() != xv.cols()) {
    throw ShapeError("add_bias: " + xv.shape_string() + " + " + bv.shape_string());
  }
  Matrix out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row_span(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bv[c];
  }
  return x.tape()->record("add_bias", std::move(out), {x, bias},
                          [x, bias](Tape& tp, const Matrix& g) {
                            tp.accumulate(x, g);
                            if (tp.requires_grad(bias)) {
                              Matrix gb(1, g.cols());
                              for (std::size_t r = 0; r < g.rows(); ++r) {
                                for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += g(r, c);
                              }
                              tp.accumulate(bias, std::move(gb));
                            }
                          });
}

Var add(Var a, Var b) {
  require_same_shape("add", a, b);
  Matrix out = a.value();
  kernels::active().axpy(1.0, b.value().data().data(), out.data().data(), out.size());
  return a.tape()->record("add", std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a, b);
  Matrix out = a.value();
  kernels::active().axpy(-1.0, b.value().data().data(), out.data().data(), out.size());
  return a.tape()->record("sub", std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    tp.accumulate_scaled(b, g, -1.0);
  });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  Matrix out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return a.tape()->record("mul", std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    const Matrix& av2 = a.value();
    const Matrix& bv2 = b.value();
    if (tp.requires_grad(a)) {
      Matrix ga(g.rows(), g.cols());
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * bv2[i];
      tp.accumulate(a, std::move(ga));
    }
    if (tp.requires_grad(b)) {
      Matrix gb(g.rows(), g.cols());
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] = g[i] * av2[i];
      tp.accumulate(b, std::move(gb));
    }
  });
}

Var scale(Var a, double s) {
  return a.tape()->record("scale", map(a.value(), [s](double v) { return s * v; }), {a},
                          [a, s](Tape& tp, const Matrix& g) { tp.accumulate_scaled(a, g, s); });
}

Var add_scalar(Var a, double s) {
  return a.tape()->record("add_scalar", map(a.value(), [s](double v) { return v + s; }), {a},
                          [a](Tape& tp, const Matrix& g) { tp.accumulate(a, g); });
}

Var leaky_relu(Var a, double slope) {
  const Matrix& x = a.value();
  Matrix out(x.rows(), x.cols());
  kernels::active().leaky_relu(x.data().data(), slope, out.data().data(), x.size());
  return a.tape()->record("leaky_relu", std::move(out), {a}, [a, slope](Tape& tp, const Matrix& g) {
    const Matrix& xv = a.value();
    Matrix ga(g.rows(), g.cols());
    kernels::active().leaky_relu_grad(xv.data().data(), g.data().data(), slope, ga.data().data(), g.size());
    tp.accumulate(a, std::move(ga));
  });
}

namespace {
double stable_sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}
}  // namespace

Var sigmoid(Var a) {
  Matrix out = map(a.value(), stable_sigmoid);
  auto cached = std::make_shared<Matrix>(out);
  return a.tape()->record("sigmoid", std::move(out), {a}, [a, cached](Tape& tp, const Matrix& g) {
    const Matrix& y = *cached;
    Matrix ga(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * y[i] * (1.0 - y[i]);
    tp.accumulate(a, std::move(ga));
  });
}

Var exp(Var a) {
  Matrix out(a.rows(), a.cols());
  kernels::active().scaled_exp(a.value().data().data(), 1.0, out.data().data(), out.size());
  auto cached = std::make_shared<Matrix>(out);
  return a.tape()->record("exp", std::move(out), {a}, [a, cached](Tape& tp, const Matrix& g) {
    Matrix ga(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * (*cached)[i];
    tp.accumulate(a, std::move(ga));
  });
}

Var log(Var a) {
  return a.tape()->record("log", map(a.value(), [](double v) { return std::log(v); }), {a},
                          [a](Tape& tp, const Matrix& g) {
                            const Matrix& x = a.value();
                            Matrix ga(g.rows(), g.cols());
                            for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] / x[i];
                            tp.accumulate(a, std::move(ga));
                          });
}

Var square(Var a) {
  return a.tape()->record("square", map(a.value(), [](double v) { return v * v; }), {a},
                          [a](Tape& tp, const Matrix& g) {
                            const Matrix& x = a.value();
                            Matrix ga(g.rows(), g.cols());
                            for (std::size_t i = 0; i < g.size(); ++i) ga[i] = 2.0 * x[i] * g[i];
                            tp.accumulate(a, std::move(ga));
                          });
}

Var abs(Var a) {
  return a.tape()->record("abs", map(a.value(), [](double v) { return std::abs(v); }), {a},
                          [a](Tape& tp, const Matrix& g) {
                            const Matrix& x = a.value();
                            Matrix ga(g.rows(), g.cols());
                            for (std::size_t i = 0; i < g.size(); ++i) {
                              ga[i] = x[i] > 0.0 ? g[i] : (x[i] < 0.0 ? -g[i] : 0.0);
                            }
                            tp.accumulate(a, std::move(ga));
                          });
}

namespace {
Matrix softmax_matrix(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto row = x.row_span(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (std::size_t c = 0; c < row.size(); ++c) {
      out(r, c) = std::exp(row[c] - mx);
      z += out(r, c);
    }
    for (std::size_t c = 0; c < row.size(); ++c) out(r, c) /= z;
  }
  return out;
}
}  // namespace

Var softmax_rows(Var a) {
  Matrix out = softmax_matrix(a.value());
  auto cached = std::make_shared<Matrix>(out);
  return a.tape()->record("softmax_rows", std::move(out), {a},
                          [a, cached](Tape& tp, const Matrix& g) {
                            const Matrix& s = *cached;
                            Matrix ga(g.rows(), g.cols());
                            for (std::size_t r = 0; r < g.rows(); ++r) {
                              double dotgs = 0.0;
                              for (std::size_t c = 0; c < g.cols(); ++c) dotgs += g(r, c) * s(r, c);
                              for (std::size_t c = 0; c < g.cols(); ++c) {
                                ga(r, c) = s(r, c) * (g(r, c) - dotgs);
                              }
                            }
                            tp.accumulate(a, std::move(ga));
                          });
}

Var log_softmax_rows(Var a) {
  const Matrix& x = a.value();
  Matrix out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto row = x.row_span(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    const double lse = mx + std::log(z);
    for (std::size_t c = 0; c < row.size(); ++c) out(r, c) = row[c] - lse;
  }
  auto cached = std::make_shared<Matrix>(out);
  return a.tape()->record("log_softmax_rows", std::move(out), {a},
                          [a, cached](Tape& tp, const Matrix& g) {
                            const Matrix& ls = *cached;
                            Matrix ga(g.rows(), g.cols());
                            for (std::size_t r = 0; r < g.rows(); ++r) {
                              double gs = 0.0;
                              for (std::size_t c = 0; c < g.cols(); ++c) gs += g(r, c);
                              for (std::size_t c = 0; c < g.cols(); ++c) {
                                ga(r, c) = g(r, c) - std::exp(ls(r, c)) * gs;
                              }
                            }
                            tp.accumulate(a, std::move(ga));
                          });
}

Var sum(Var a) {
  const Matrix& x = a.value();
  const double s = kernels::active().sum(x.data().data(), x.size());
  return a.tape()->record("sum", scalar_matrix(s), {a}, [a](Tape& tp, const Matrix& g) {
    tp.accumulate(a, Matrix(a.rows(), a.cols(), g[0]));
  });
}

Var mean(Var a) {
  const Matrix& x = a.value();
  if (x.empty()) throw ShapeError("mean of empty matrix");
  const double n = static_cast<double>(x.size());
  const double s = kernels::active().sum(x.data().data(), x.size()) / n;
  return a.tape()->record("mean", scalar_matrix(s), {a}, [a, n](Tape& tp, const Matrix& g) {
    tp.accumulate(a, Matrix(a.rows(), a.cols(), g[0] / n));
  });
}

Var row_sum(Var a) {
  const Matrix& x = a.value();
  Matrix out(x.rows(), 1);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    out[r] = kernels::active().sum(x.row_span(r).data(), x.cols());
  }
  return a.tape()->record("row_sum", std::move(out), {a}, [a](Tape& tp, const Matrix& g) {
    Matrix ga(a.rows(), a.cols());
    for (std::size_t r = 0; r < ga.rows(); ++r) {
      for (std::size_t c = 0; c < ga.cols(); ++c) ga(r, c) = g[r];
    }
    tp.accumulate(a, std::move(ga));
  });
}

Var concat_cols(Var a, Var b) {
  const std::size_t ca = a.cols();
  return a.tape()->record("concat_cols", hcat(a.value(), b.value()), {a, b},
                          [a, b, ca](Tape& tp, const Matrix& g) {
                            if (tp.requires_grad(a)) tp.accumulate(a, claire::slice_cols(g, 0, ca));
                            if (tp.requires_grad(b)) {
                              tp.accumulate(b, claire::slice_cols(g, ca, g.cols()));
                            }
                          });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  return a.tape()->record("slice_cols", claire::slice_cols(a.value(), begin, end), {a},
                          [a, begin](Tape& tp, const Matrix& g) {
                            Matrix ga(a.rows(), a.cols());
                            for (std::size_t r = 0; r < g.rows(); ++r) {
                              for (std::size_t c = 0; c < g.cols(); ++c) ga(r, begin + c) = g(r, c);
                            }
                            tp.accumulate(a, std::move(ga));
                          });
}

Var gather_rows(Var a, std::span<const std::size_t> idx) {
  auto rows = std::make_shared<std::vector<std::size_t>>(idx.begin(), idx.end());
  return a.tape()->record("gather_rows", claire::gather_rows(a.value(), idx), {a},
                          [a, rows](Tape& tp, const Matrix& g) {
                            Matrix ga(a.rows(), a.cols());
                            for (std::size_t i = 0; i < rows->size(); ++i) {
                              auto dst = ga.row_span((*rows)[i]);
                              const auto src = g.row_span(i);
                              for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
                            }
                            tp.accumulate(a, std::move(ga));
                          });
}

Var pick_per_row(Var a, std::span<const std::size_t> labels) {
  const Matrix& x = a.value();
  if (labels.size() != x.rows()) throw ShapeError("pick_per_row: label count mismatch");
  Matrix out(x.rows(), 1);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    if (labels[r] >= x.cols()) throw ShapeError("pick_per_row: label out of range");
    out[r] = x(r, labels[r]);
  }
  auto lab = std::make_shared<std::vector<std::size_t>>(labels.begin(), labels.end());
  return a.tape()->record("pick_per_row", std::move(out), {a}, [a, lab](Tape& tp, const Matrix& g) {
    Matrix ga(a.rows(), a.cols());
    for (std::size_t r = 0; r < lab->size(); ++r) ga(r, (*lab)[r]) = g[r];
    tp.accumulate(a, std::move(ga));
  });
}

Var cosine_distance_rows(Var a, Var b) {
  require_same_shape("cosine_distance_rows", a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  const std::size_t n = av.rows();
  const std::size_t d = av.cols();
  const auto& k = kernels::active();
  // per row: |a|, |b|, cos; zero norms flagged by negative |a|
  auto stats = std::make_shared<std::vector<double>>(3 * n);
  Matrix out(n, 1);
  for (std::size_t r = 0; r < n; ++r) {
    const double* ar = av.row_span(r).data();
    const double* br = bv.row_span(r).data();
    const double na = std::sqrt(k.dot(ar, ar, d));
    const double nb = std::sqrt(k.dot(br, br, d));
    if (na < 1e-12 || nb < 1e-12) {
      out[r] = 1.0;
      (*stats)[3 * r] = -1.0;
      continue;
    }
    const double c = k.dot(ar, br, d) / (na * nb);
    (*stats)[3 * r] = na;
    (*stats)[3 * r + 1] = nb;
    (*stats)[3 * r + 2] = c;
    out[r] = 1.0 - c;
  }
  return a.tape()->record(
      "cosine_distance_rows", std::move(out), {a, b}, [a, b, stats](Tape& tp, const Matrix& g) {
        const Matrix& av2 = a.value();
        const Matrix& bv2 = b.value();
        Matrix ga(av2.rows(), av2.cols());
        Matrix gb(bv2.rows(), bv2.cols());
        for (std::size_t r = 0; r < av2.rows(); ++r) {
          const double na = (*stats)[3 * r];
          if (na < 0.0) continue;
          const double nb = (*stats)[3 * r + 1];
          const double c = (*stats)[3 * r + 2];
          for (std::size_t j = 0; j < av2.cols(); ++j) {
            ga(r, j) = -g[r] * (bv2(r, j) / (na * nb) - c * av2(r, j) / (na * na));
            gb(r, j) = -g[r] * (av2(r, j) / (na * nb) - c * bv2(r, j) / (nb * nb));
          }
        }
        tp.accumulate(a, std::move(ga));
        tp.accumulate(b, std::move(gb));
      });
}

namespace {
Matrix rbf_gram(const Matrix& x, const Matrix& y, double bandwidth) {
  const auto& k = kernels::active();
  Matrix out(x.rows(), y.rows());
  k.sq_dist(x.data().data(), y.data().data(), out.data().data(), x.rows(), y.rows(), x.cols());
  k.scaled_exp(out.data().data(), -1.0 / (2.0 * bandwidth * bandwidth), out.data().data(),
               out.size());
  return out;
}

// out_i += w * (x_i * rowsum(K)_i - (K y)_i)
void add_kernel_pull(const Matrix& kmat, const Matrix& x, const Matrix& y, double w, Matrix& out) {
  const Matrix ky = claire::matmul(kmat, y);
  const auto& k = kernels::active();
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double rs = k.sum(kmat.row_span(i).data(), kmat.cols());
    for (std::size_t c = 0; c < x.cols(); ++c) out(i, c) += w * (x(i, c) * rs - ky(i, c));
  }
}
}  // namespace

Var mmd_rbf(Var a, Var b, double bandwidth) {
  if (a.cols() != b.cols()) throw ShapeError("mmd_rbf: feature dimensions differ");
  if (a.rows() == 0 || b.rows() == 0) throw ShapeError("mmd_rbf: empty sample");
  if (!(bandwidth > 0.0)) throw ConfigError("mmd_rbf: bandwidth must be positive");
  const auto& k = kernels::active();
  auto kaa = std::make_shared<Matrix>(rbf_gram(a.value(), a.value(), bandwidth));
  auto kbb = std::make_shared<Matrix>(rbf_gram(b.value(), b.value(), bandwidth));
  auto kab = std::make_shared<Matrix>(rbf_gram(a.value(), b.value(), bandwidth));
  const double na = static_cast<double>(a.rows());
  const double nb = static_cast<double>(b.rows());
  const double v = k.sum(kaa->data().data(), kaa->size()) / (na * na) +
                   k.sum(kbb->data().data(), kbb->size()) / (nb * nb) -
                   2.0 * k.sum(kab->data().data(), kab->size()) / (na * nb);
  return a.tape()->record(
      "mmd_rbf", scalar_matrix(v), {a, b},
      [a, b, kaa, kbb, kab, bandwidth, na, nb](Tape& tp, const Matrix& g) {
        const double u = g[0] / (bandwidth * bandwidth);
        const Matrix& av = a.value();
        const Matrix& bv = b.value();
        if (tp.requires_grad(a)) {
          Matrix ga(av.rows(), av.cols());
          add_kernel_pull(*kaa, av, av, -2.0 * u / (na * na), ga);
          add_kernel_pull(*kab, av, bv, 2.0 * u / (na * nb), ga);
          tp.accumulate(a, std::move(ga));
        }
        if (tp.requires_grad(b)) {
          Matrix gb(bv.rows(), bv.cols());
          add_kernel_pull(*kbb, bv, bv, -2.0 * u / (nb * nb), gb);
          add_kernel_pull(transpose(*kab), bv, av, 2.0 * u / (na * nb), gb);
          tp.accumulate(b, std::move(gb));
        }
      });
}

Var grouped_mmd_rbf(Var x, std::span<const std::size_t> labels, std::size_t num_groups, double bandwidth) {
  const Matrix& xv = x.value();
  const std::size_t n = xv.rows();
  if (labels.size() != n) throw ShapeError("grouped_mmd_rbf: one label per row required");
  if (num_groups < 2) throw ShapeError("grouped_mmd_rbf: needs at least two groups");
  if (!(bandwidth > 0.0)) throw ConfigError("grouped_mmd_rbf: bandwidth must be positive");
  std::vector<double> count(num_groups, 0.0);
  for (std::size_t l : labels) {
    if (l >= num_groups) throw ShapeError("grouped_mmd_rbf: label out of range");
    count[l] += 1.0;
  }
  for (double c : count) {
    if (c == 0.0) throw ShapeError("grouped_mmd_rbf: empty group");
  }
  // Pair weights: each group's self-similarity enters (G - 1) pairs, each
  // cross block enters one pair with factor -2 split over both orders.
  const double g = static_cast<double>(num_groups);
  const double pairs = g * (g - 1.0) / 2.0;
  auto weight = std::make_shared<Matrix>(num_groups, num_groups);
  for (std::size_t a = 0; a < num_groups; ++a) {
    for (std::size_t b = 0; b < num_groups; ++b) {
      (*weight)(a, b) = a == b ? (g - 1.0) / (pairs * count[a] * count[a]) : -1.0 / (pairs * count[a] * count[b]);
    }
  }
  // Rows sorted by group make every weight block contiguous, so the Gram
  // matrix is weighted once here and reused by the backward pass.
  auto order = std::make_shared<std::vector<std::size_t>>(n);
  std::iota(order->begin(), order->end(), std::size_t{0});
  std::stable_sort(order->begin(), order->end(), [&](std::size_t p, std::size_t q) { return labels[p] < labels[q]; });
  std::vector<std::size_t> start(num_groups + 1, 0);
  for (std::size_t a = 0; a < num_groups; ++a) start[a + 1] = start[a] + static_cast<std::size_t>(count[a]);
  const Matrix sorted = claire::gather_rows(xv, *order);
  auto kmat = std::make_shared<Matrix>(rbf_gram(sorted, sorted, bandwidth));
  const auto& k = kernels::active();
  double v = 0.0;
  for (std::size_t a = 0; a < num_groups; ++a) {
    for (std::size_t i = start[a]; i < start[a + 1]; ++i) {
      double* krow = kmat->row_span(i).data();
      for (std::size_t b = 0; b < num_groups; ++b) {
        const double w = (*weight)(a, b);
        for (std::size_t c = start[b]; c < start[b + 1]; ++c) krow[c] *= w;
      }
      v += k.sum(krow, n);
    }
  }
  return x.tape()->record(
      "grouped_mmd_rbf", scalar_matrix(v), {x},
      [x, kmat, order, bandwidth](Tape& tp, const Matrix& up) {
        if (!tp.requires_grad(x)) return;
        const Matrix sorted = claire::gather_rows(x.value(), *order);
        Matrix gs(sorted.rows(), sorted.cols());
        add_kernel_pull(*kmat, sorted, sorted, -2.0 * up[0] / (bandwidth * bandwidth), gs);
        Matrix gx(gs.rows(), gs.cols());
        for (std::size_t r = 0; r < gs.rows(); ++r) {
          const auto src = gs.row_span(r);
          std::copy(src.begin(), src.end(), gx.row_span((*order)[r]).begin());
        }
        tp.accumulate(x, std::move(gx));
      });
}

Var bce_with_logits(Var logits, const Matrix& targets) {
  const Matrix& z = logits.value();
  if (!z.same_shape(targets)) throw ShapeError("bce_with_logits: target shape mismatch");
  Matrix out(z.rows(), z.cols());
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = std::max(z[i], 0.0) - z[i] * targets[i] + std::log1p(std::exp(-std::abs(z[i])));
  }
  auto t = std::make_shared<Matrix>(targets);
  return logits.tape()->record("bce_with_logits", std::move(out), {logits},
                               [logits, t](Tape& tp, const Matrix& g) {
                                 const Matrix& zz = logits.value();
                                 Matrix gz(zz.rows(), zz.cols());
                                 for (std::size_t i = 0; i < zz.size(); ++i) {
                                   gz[i] = g[i] * (stable_sigmoid(zz[i]) - (*t)[i]);
                                 }
                                 tp.accumulate(logits, std::move(gz));
                               });
}

}  // namespace claire::ad

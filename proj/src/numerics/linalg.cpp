#include "claire/numerics/linalg.hpp"

#include <algorithm>
#include <cmath>

#include "claire/error.hpp"

namespace claire::linalg {

Matrix cholesky(const Matrix& a, double rel_tol) {
  if (a.rows() != a.cols()) throw ShapeError("cholesky of non-square " + a.shape_string());
  const std::size_t n = a.rows();
  double max_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, std::abs(a(i, i)));
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > rel_tol * std::max(max_diag, 1e-300))) {
      throw FitError("matrix is singular or not positive definite (pivot " + std::to_string(j) +
                     ")");
    }
    l(j, j) = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  return l;
}

Matrix cholesky_solve(const Matrix& lower, const Matrix& b) {
  const std::size_t n = lower.rows();
  if (b.rows() != n) throw ShapeError("cholesky_solve rhs " + b.shape_string());
  Matrix x = b;
  for (std::size_t c = 0; c < b.cols(); ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = x(i, c);
      for (std::size_t k = 0; k < i; ++k) s -= lower(i, k) * x(k, c);
      x(i, c) = s / lower(i, i);
    }
    for (std::size_t i = n; i-- > 0;) {
      double s = x(i, c);
      for (std::size_t k = i + 1; k < n; ++k) s -= lower(k, i) * x(k, c);
      x(i, c) = s / lower(i, i);
    }
  }
  return x;
}

OlsFit ols(const Matrix& x, std::span<const double> y, bool with_intercept) {
  const std::size_t n = x.rows();
  if (y.size() != n) throw ShapeError("ols: target length does not match design rows");
  if (n == 0) throw FitError("ols: empty design");
  const std::size_t p = x.cols() + (with_intercept ? 1 : 0);
  if (p == 0) {
    OlsFit fit;
    fit.residuals.assign(y.begin(), y.end());
    for (double r : fit.residuals) fit.residual_variance += r * r;
    fit.residual_variance /= static_cast<double>(n);
    return fit;
  }
  Matrix design(n, p);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) design(r, c) = x(r, c);
    if (with_intercept) design(r, p - 1) = 1.0;
  }
  const Matrix xtx = matmul_tn(design, design);
  const Matrix xty = matmul_tn(design, Matrix::column(y));
  const Matrix beta = cholesky_solve(cholesky(xtx), xty);

  OlsFit fit;
  fit.coefficients.assign(beta.data().begin(), beta.data().begin() + static_cast<long>(x.cols()));
  fit.intercept = with_intercept ? beta[p - 1] : 0.0;
  fit.residuals.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    double pred = fit.intercept;
    for (std::size_t c = 0; c < x.cols(); ++c) pred += fit.coefficients[c] * x(r, c);
    fit.residuals[r] = y[r] - pred;
    fit.residual_variance += fit.residuals[r] * fit.residuals[r];
  }
  fit.residual_variance /= static_cast<double>(n);
  return fit;
}

}  // namespace claire::linalg

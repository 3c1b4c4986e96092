#pragma once

#include <span>
#include <vector>

#include "claire/numerics/matrix.hpp"

namespace claire::linalg {

// Lower Cholesky factor of a symmetric positive definite matrix.
// Throws FitError when a pivot falls below rel_tol * max diagonal.
Matrix cholesky(const Matrix& a, double rel_tol = 1e-12);

// Solves L L^T X = B for every column of B.
Matrix cholesky_solve(const Matrix& lower, const Matrix& b);

struct OlsFit {
  std::vector<double> coefficients;
  double intercept = 0.0;
  // Mean squared residual (divides by n).
  double residual_variance = 0.0;
  std::vector<double> residuals;
};

// Least squares through the normal equations.
OlsFit ols(const Matrix& x, std::span<const double> y, bool with_intercept = true);

}  // namespace claire::linalg

#pragma once

#include <cstddef>
#include <string_view>

// Data-parallel inner loops. Each backend provides the same table of
// functions; the scalar backend is the reference that the vectorised ones are
// tested against. Selection happens once at first use (CPU feature probe) and
// can be overridden with set_backend() or CLAIRE_SIMD={scalar,avx2}.
namespace claire::kernels {

enum class Backend { automatic, scalar, avx2 };

struct KernelTable {
  std::string_view name;

  // c[m x n] (+)= a[m x k] * b[k x n]
  void (*gemm_nn)(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                  std::size_t n, bool accumulate);
  // c[m x n] (+)= a^T * b, with a stored as [k x m]
  void (*gemm_tn)(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                  std::size_t n, bool accumulate);
  // c[m x n] (+)= a * b^T, with b stored as [n x k]
  void (*gemm_nt)(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                  std::size_t n, bool accumulate);

  double (*dot)(const double* x, const double* y, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);

  // out[i * nb + j] = ||a_i - b_j||^2 for rows of a [na x d] and b [nb x d]
  void (*sq_dist)(const double* a, const double* b, double* out, std::size_t na, std::size_t nb,
                  std::size_t d);

  // out[i] = exp(scale * x[i]); in-place allowed
  void (*scaled_exp)(const double* x, double scale, double* out, std::size_t n);

  double (*sum)(const double* x, std::size_t n);

  bool (*all_finite)(const double* x, std::size_t n);
  // out[i] = x[i] > 0 ? x[i] : slope * x[i]; in-place allowed
  void (*leaky_relu)(const double* x, double slope, double* out, std::size_t n);
  // out[i] = x[i] > 0 ? g[i] : slope * g[i]
  void (*leaky_relu_grad)(const double* x, const double* g, double slope, double* out, std::size_t n);
};

const KernelTable& scalar_table();
// nullptr when the binary was built without AVX2 support or the CPU lacks it.
const KernelTable* avx2_table();

const KernelTable& active();
void set_backend(Backend b);
Backend active_backend();

}  // namespace claire::kernels

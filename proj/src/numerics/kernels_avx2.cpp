// Built with -mavx2 -mfma. Nothing in this file may run before the dispatcher
// has confirmed CPU support, so it holds no dynamic initialisers.
#include "claire/numerics/kernels.hpp"

#include <immintrin.h>

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

namespace claire::kernels {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

// row += av * brow over n entries
inline void fma_row(double av, const double* brow, double* crow, std::size_t n) {
  const __m256d va = _mm256_set1_pd(av);
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) {
    __m256d c0 = _mm256_loadu_pd(crow + j);
    __m256d c1 = _mm256_loadu_pd(crow + j + 4);
    c0 = _mm256_fmadd_pd(va, _mm256_loadu_pd(brow + j), c0);
    c1 = _mm256_fmadd_pd(va, _mm256_loadu_pd(brow + j + 4), c1);
    _mm256_storeu_pd(crow + j, c0);
    _mm256_storeu_pd(crow + j + 4, c1);
  }
  for (; j + 4 <= n; j += 4) {
    _mm256_storeu_pd(crow + j,
                     _mm256_fmadd_pd(va, _mm256_loadu_pd(brow + j), _mm256_loadu_pd(crow + j)));
  }
  for (; j < n; ++j) crow[j] += av * brow[j];
}

inline __m256i tail_mask(std::size_t r) { return _mm256_setr_epi64x(-1, r > 1 ? -1 : 0, r > 2 ? -1 : 0, 0); }

// One output row c[0..n) = sum_p w(p) * b[p*n ..], with w(p) = a[p * a_stride].
// Columns are held in registers across p; four vectors at a time, then one,
// then a masked tail of up to three.
inline void gemm_row(const double* a, std::size_t a_stride, const double* b, double* crow, std::size_t k,
                     std::size_t n, bool accumulate) {
  std::size_t j = 0;
  for (; j + 16 <= n; j += 16) {
    __m256d c0 = accumulate ? _mm256_loadu_pd(crow + j) : _mm256_setzero_pd();
    __m256d c1 = accumulate ? _mm256_loadu_pd(crow + j + 4) : _mm256_setzero_pd();
    __m256d c2 = accumulate ? _mm256_loadu_pd(crow + j + 8) : _mm256_setzero_pd();
    __m256d c3 = accumulate ? _mm256_loadu_pd(crow + j + 12) : _mm256_setzero_pd();
    for (std::size_t p = 0; p < k; ++p) {
      const __m256d w = _mm256_set1_pd(a[p * a_stride]);
      const double* brow = b + p * n + j;
      c0 = _mm256_fmadd_pd(w, _mm256_loadu_pd(brow), c0);
      c1 = _mm256_fmadd_pd(w, _mm256_loadu_pd(brow + 4), c1);
      c2 = _mm256_fmadd_pd(w, _mm256_loadu_pd(brow + 8), c2);
      c3 = _mm256_fmadd_pd(w, _mm256_loadu_pd(brow + 12), c3);
    }
    _mm256_storeu_pd(crow + j, c0);
    _mm256_storeu_pd(crow + j + 4, c1);
    _mm256_storeu_pd(crow + j + 8, c2);
    _mm256_storeu_pd(crow + j + 12, c3);
  }
  for (; j + 4 <= n; j += 4) {
    __m256d c0 = accumulate ? _mm256_loadu_pd(crow + j) : _mm256_setzero_pd();
    for (std::size_t p = 0; p < k; ++p) {
      c0 = _mm256_fmadd_pd(_mm256_set1_pd(a[p * a_stride]), _mm256_loadu_pd(b + p * n + j), c0);
    }
    _mm256_storeu_pd(crow + j, c0);
  }
  if (j < n) {
    const std::size_t r = n - j;
    const __m256i mask = tail_mask(r);
    __m256d c0 = accumulate ? _mm256_maskload_pd(crow + j, mask) : _mm256_setzero_pd();
    for (std::size_t p = 0; p < k; ++p) {
      c0 = _mm256_fmadd_pd(_mm256_set1_pd(a[p * a_stride]), _mm256_maskload_pd(b + p * n + j, mask), c0);
    }
    _mm256_maskstore_pd(crow + j, mask, c0);
  }
}

// Two output rows sharing every load of b, for narrow outputs (n < 16) where
// gemm_row is bound by loads.
inline void gemm_row_pair(const double* a0, const double* a1, const double* b, double* c0row, double* c1row,
                          std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t j = 0; j < n; j += 4) {
    const __m256i mask = j + 4 <= n ? _mm256_set1_epi64x(-1) : tail_mask(n - j);
    __m256d c0 = accumulate ? _mm256_maskload_pd(c0row + j, mask) : _mm256_setzero_pd();
    __m256d c1 = accumulate ? _mm256_maskload_pd(c1row + j, mask) : _mm256_setzero_pd();
    for (std::size_t p = 0; p < k; ++p) {
      const __m256d bv = _mm256_maskload_pd(b + p * n + j, mask);
      c0 = _mm256_fmadd_pd(_mm256_set1_pd(a0[p]), bv, c0);
      c1 = _mm256_fmadd_pd(_mm256_set1_pd(a1[p]), bv, c1);
    }
    _mm256_maskstore_pd(c0row + j, mask, c0);
    _mm256_maskstore_pd(c1row + j, mask, c1);
  }
}

void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate) {
  std::size_t i = 0;
  if (n < 16) {
    for (; i + 2 <= m; i += 2) {
      gemm_row_pair(a + i * k, a + (i + 1) * k, b, c + i * n, c + (i + 1) * n, k, n, accumulate);
    }
  }
  for (; i < m; ++i) gemm_row(a + i * k, 1, b, c + i * n, k, n, accumulate);
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate) {
  if (n >= 4) {
    for (std::size_t i = 0; i < m; ++i) gemm_row(a + i, m, b, c + i * n, k, n, accumulate);
    return;
  }
  // Narrow b (typically a gradient column): stream over p instead so a is read in order.
  if (!accumulate) {
    for (std::size_t i = 0; i < m * n; ++i) c[i] = 0.0;
  }
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) c[i * n + j] += arow[i] * brow[j];
    }
  }
}

double dot(const double* x, const double* y, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double v = dot(a + i * k, b + j * k, k);
      c[i * n + j] = accumulate ? c[i * n + j] + v : v;
    }
  }
}

void axpy(double alpha, const double* x, double* y, std::size_t n) { fma_row(alpha, x, y, n); }

void sq_dist(const double* a, const double* b, double* out, std::size_t na, std::size_t nb,
             std::size_t d) {
  if (d == 1) {
    for (std::size_t i = 0; i < na; ++i) {
      const __m256d ai = _mm256_set1_pd(a[i]);
      double* orow = out + i * nb;
      std::size_t j = 0;
      for (; j + 4 <= nb; j += 4) {
        const __m256d diff = _mm256_sub_pd(ai, _mm256_loadu_pd(b + j));
        _mm256_storeu_pd(orow + j, _mm256_mul_pd(diff, diff));
      }
      for (; j < nb; ++j) {
        const double diff = a[i] - b[j];
        orow[j] = diff * diff;
      }
    }
    return;
  }
  // Feature-major copy of b so four b rows are processed per lane group.
  std::vector<double> bt(d * nb);
  for (std::size_t j = 0; j < nb; ++j) {
    for (std::size_t t = 0; t < d; ++t) bt[t * nb + j] = b[j * d + t];
  }
  for (std::size_t i = 0; i < na; ++i) {
    const double* ai = a + i * d;
    double* orow = out + i * nb;
    std::size_t j = 0;
    for (; j + 8 <= nb; j += 8) {
      __m256d acc0 = _mm256_setzero_pd();
      __m256d acc1 = _mm256_setzero_pd();
      for (std::size_t t = 0; t < d; ++t) {
        const __m256d at = _mm256_set1_pd(ai[t]);
        const __m256d d0 = _mm256_sub_pd(at, _mm256_loadu_pd(bt.data() + t * nb + j));
        const __m256d d1 = _mm256_sub_pd(at, _mm256_loadu_pd(bt.data() + t * nb + j + 4));
        acc0 = _mm256_fmadd_pd(d0, d0, acc0);
        acc1 = _mm256_fmadd_pd(d1, d1, acc1);
      }
      _mm256_storeu_pd(orow + j, acc0);
      _mm256_storeu_pd(orow + j + 4, acc1);
    }
    for (; j < nb; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < d; ++t) {
        const double diff = ai[t] - bt[t * nb + j];
        s += diff * diff;
      }
      orow[j] = s;
    }
  }
}

// exp via 2^n * p(r), r = x - n ln2, |r| <= ln2/2, p = degree-13 Taylor polynomial.
inline __m256d exp4(__m256d x) {
  const __m256d hi = _mm256_set1_pd(709.0);
  const __m256d lo = _mm256_set1_pd(-708.0);
  const __m256d under = _mm256_cmp_pd(x, lo, _CMP_LT_OQ);
  const __m256d over = _mm256_cmp_pd(x, hi, _CMP_GT_OQ);
  x = _mm256_max_pd(_mm256_min_pd(x, hi), lo);

  const __m256d n = _mm256_round_pd(_mm256_mul_pd(x, _mm256_set1_pd(1.4426950408889634)),
                                    _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(n, _mm256_set1_pd(6.93147180369123816490e-01), x);
  r = _mm256_fnmadd_pd(n, _mm256_set1_pd(1.90821492927058770002e-10), r);

  __m256d p = _mm256_set1_pd(1.0 / 6227020800.0);
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 479001600.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 39916800.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 3628800.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 362880.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 40320.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 5040.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 720.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 120.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 24.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 6.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(0.5));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));

  // 2^n through the exponent field; n is in [-1022, 1023] after clamping.
  const __m256d magic = _mm256_set1_pd(6755399441055744.0);
  const __m256i ni = _mm256_sub_epi64(_mm256_castpd_si256(_mm256_add_pd(n, magic)),
                                      _mm256_castpd_si256(magic));
  const __m256i bits = _mm256_slli_epi64(_mm256_add_epi64(ni, _mm256_set1_epi64x(1023)), 52);
  __m256d result = _mm256_mul_pd(p, _mm256_castsi256_pd(bits));

  result = _mm256_blendv_pd(result, _mm256_setzero_pd(), under);
  result = _mm256_blendv_pd(result, _mm256_set1_pd(HUGE_VAL), over);
  return result;
}

void scaled_exp(const double* x, double scale, double* out, std::size_t n) {
  const __m256d s = _mm256_set1_pd(scale);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, exp4(_mm256_mul_pd(s, _mm256_loadu_pd(x + i))));
  }
  for (; i < n; ++i) out[i] = std::exp(scale * x[i]);
}

double sum(const double* x, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
    acc1 = _mm256_add_pd(acc1, _mm256_loadu_pd(x + i + 4));
  }
  for (; i + 4 <= n; i += 4) acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += x[i];
  return s;
}

bool all_finite(const double* x, std::size_t n) {
  const __m256d abs_mask = _mm256_castsi256_pd(_mm256_set1_epi64x(0x7fffffffffffffffLL));
  const __m256d big = _mm256_set1_pd(std::numeric_limits<double>::max());
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    // NaN compares false, so it fails the ordered <= test too
    const __m256d ok = _mm256_cmp_pd(_mm256_and_pd(_mm256_loadu_pd(x + i), abs_mask), big, _CMP_LE_OQ);
    if (_mm256_movemask_pd(ok) != 0xf) return false;
  }
  for (; i < n; ++i) {
    if (!std::isfinite(x[i])) return false;
  }
  return true;
}

void leaky_relu(const double* x, double slope, double* out, std::size_t n) {
  const __m256d s = _mm256_set1_pd(slope);
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    const __m256d pos = _mm256_cmp_pd(v, zero, _CMP_GT_OQ);
    _mm256_storeu_pd(out + i, _mm256_blendv_pd(_mm256_mul_pd(s, v), v, pos));
  }
  for (; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : slope * x[i];
}

void leaky_relu_grad(const double* x, const double* g, double slope, double* out, std::size_t n) {
  const __m256d s = _mm256_set1_pd(slope);
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d pos = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
    const __m256d gv = _mm256_loadu_pd(g + i);
    _mm256_storeu_pd(out + i, _mm256_blendv_pd(_mm256_mul_pd(s, gv), gv, pos));
  }
  for (; i < n; ++i) out[i] = x[i] > 0.0 ? g[i] : slope * g[i];
}

constexpr KernelTable kAvx2Table{"avx2", gemm_nn,    gemm_tn,    gemm_nt,        dot, axpy, sq_dist, scaled_exp,
                                 sum,    all_finite, leaky_relu, leaky_relu_grad};

}  // namespace

const KernelTable* avx2_table_unchecked() { return &kAvx2Table; }

}  // namespace claire::kernels

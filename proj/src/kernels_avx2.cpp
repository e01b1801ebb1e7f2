// AVX2 kernel variants. This translation unit is the only one compiled with
// -mavx2 -mfma; it must not be entered unless cpuid reports AVX2+FMA, which
// the dispatcher in kernels.cpp guarantees.

#if defined(MMFORGE_WITH_AVX2)

#include <immintrin.h>

#include <cmath>
#include <cstddef>

#include "mmforge/kernels.hpp"

namespace mmforge::kern {

namespace {

inline double hsum256(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d shuf = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, shuf));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double acc = hsum256(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void matvec_avx2(const double* w, std::size_t rows, std::size_t cols, const double* x,
                 const double* bias, double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = dot_avx2(w + r * cols, x, cols);
    y[r] = bias ? acc + bias[r] : acc;
  }
}

void axpy_avx2(std::size_t n, double a, const double* x, double* y) {
  __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_loadu_pd(y + i);
    vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void matvec_t_acc_avx2(const double* w, std::size_t rows, std::size_t cols, const double* gy,
                       double* gx) {
  for (std::size_t r = 0; r < rows; ++r) axpy_avx2(cols, gy[r], w + r * cols, gx);
}

void outer_acc_avx2(double* gw, std::size_t rows, std::size_t cols, const double* gy,
                    const double* x) {
  for (std::size_t r = 0; r < rows; ++r) axpy_avx2(cols, gy[r], x, gw + r * cols);
}

double sum_sq_avx2(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d v = _mm256_loadu_pd(x + i);
    acc = _mm256_fmadd_pd(v, v, acc);
  }
  double s = hsum256(acc);
  for (; i < n; ++i) s += x[i] * x[i];
  return s;
}

void scale_avx2(double* x, std::size_t n, double a) {
  __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(x + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), va));
  }
  for (; i < n; ++i) x[i] *= a;
}

void adam_update_avx2(std::size_t n, double* p, double* m, double* v, const double* g,
                      double lr, double beta1, double beta2, double eps, double bc1,
                      double bc2) {
  __m256d vb1 = _mm256_set1_pd(beta1);
  __m256d vb2 = _mm256_set1_pd(beta2);
  __m256d vob1 = _mm256_set1_pd(1.0 - beta1);
  __m256d vob2 = _mm256_set1_pd(1.0 - beta2);
  __m256d vlr = _mm256_set1_pd(lr);
  __m256d veps = _mm256_set1_pd(eps);
  __m256d vrb1 = _mm256_set1_pd(1.0 / bc1);
  __m256d vrb2 = _mm256_set1_pd(1.0 / bc2);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vg = _mm256_loadu_pd(g + i);
    __m256d vm = _mm256_fmadd_pd(vob1, vg, _mm256_mul_pd(vb1, _mm256_loadu_pd(m + i)));
    __m256d vv =
        _mm256_fmadd_pd(vob2, _mm256_mul_pd(vg, vg), _mm256_mul_pd(vb2, _mm256_loadu_pd(v + i)));
    _mm256_storeu_pd(m + i, vm);
    _mm256_storeu_pd(v + i, vv);
    __m256d mhat = _mm256_mul_pd(vm, vrb1);
    __m256d vhat = _mm256_mul_pd(vv, vrb2);
    __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(vhat), veps);
    __m256d upd = _mm256_div_pd(_mm256_mul_pd(vlr, mhat), denom);
    _mm256_storeu_pd(p + i, _mm256_sub_pd(_mm256_loadu_pd(p + i), upd));
  }
  for (; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
    p[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
  }
}

}  // namespace

namespace detail {

const KernelTable& avx2_table() {
  static const KernelTable t = {dot_avx2,    matvec_avx2, matvec_t_acc_avx2, outer_acc_avx2,
                                axpy_avx2,   sum_sq_avx2, scale_avx2,        adam_update_avx2};
  return t;
}

}  // namespace detail

}  // namespace mmforge::kern

#endif  // MMFORGE_WITH_AVX2

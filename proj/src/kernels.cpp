// Scalar reference kernels and runtime backend dispatch.

#include "mmforge/kernels.hpp"

#include <cmath>
#include <cstdlib>
#include <cstring>

namespace mmforge::kern {

namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void matvec_scalar(const double* w, std::size_t rows, std::size_t cols, const double* x,
                   const double* bias, double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = bias ? bias[r] : 0.0;
    const double* row = w + r * cols;
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
}

void matvec_t_acc_scalar(const double* w, std::size_t rows, std::size_t cols, const double* gy,
                         double* gx) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = w + r * cols;
    double g = gy[r];
    for (std::size_t c = 0; c < cols; ++c) gx[c] += row[c] * g;
  }
}

void outer_acc_scalar(double* gw, std::size_t rows, std::size_t cols, const double* gy,
                      const double* x) {
  for (std::size_t r = 0; r < rows; ++r) {
    double g = gy[r];
    double* row = gw + r * cols;
    for (std::size_t c = 0; c < cols; ++c) row[c] += g * x[c];
  }
}

void axpy_scalar(std::size_t n, double a, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

double sum_sq_scalar(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * x[i];
  return acc;
}

void scale_scalar(double* x, std::size_t n, double a) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

void adam_update_scalar(std::size_t n, double* p, double* m, double* v, const double* g,
                        double lr, double beta1, double beta2, double eps, double bc1,
                        double bc2) {
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
    double mhat = m[i] / bc1;
    double vhat = v[i] / bc2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

bool cpu_has_avx2() {
#if defined(MMFORGE_WITH_AVX2) && defined(__GNUC__)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const detail::KernelTable* pick_initial() {
  const char* force = std::getenv("MMFORGE_KERNELS");
  if (force && std::strcmp(force, "scalar") == 0) return &detail::scalar_table();
#if defined(MMFORGE_WITH_AVX2)
  if (force && std::strcmp(force, "avx2") == 0 && cpu_has_avx2()) return &detail::avx2_table();
  if (!force && cpu_has_avx2()) return &detail::avx2_table();
#endif
  return &detail::scalar_table();
}

const detail::KernelTable*& active_table() {
  static const detail::KernelTable* table = pick_initial();
  return table;
}

}  // namespace

namespace detail {

const KernelTable& scalar_table() {
  static const KernelTable t = {dot_scalar,    matvec_scalar, matvec_t_acc_scalar,
                                outer_acc_scalar, axpy_scalar,   sum_sq_scalar,
                                scale_scalar,  adam_update_scalar};
  return t;
}

}  // namespace detail

Backend active_backend() {
#if defined(MMFORGE_WITH_AVX2)
  if (active_table() == &detail::avx2_table()) return Backend::Avx2;
#endif
  return Backend::Scalar;
}

bool backend_available(Backend b) {
  if (b == Backend::Scalar) return true;
  return cpu_has_avx2();
}

bool set_backend(Backend b) {
  if (!backend_available(b)) return false;
  switch (b) {
    case Backend::Scalar:
      active_table() = &detail::scalar_table();
      return true;
    case Backend::Avx2:
#if defined(MMFORGE_WITH_AVX2)
      active_table() = &detail::avx2_table();
      return true;
#else
      return false;
#endif
  }
  return false;
}

const char* backend_name(Backend b) {
  switch (b) {
    case Backend::Scalar: return "scalar";
    case Backend::Avx2: return "avx2";
  }
  return "unknown";
}

double dot(const double* a, const double* b, std::size_t n) {
  return active_table()->dot(a, b, n);
}

void matvec(const double* w, std::size_t rows, std::size_t cols, const double* x,
            const double* bias, double* y) {
  active_table()->matvec(w, rows, cols, x, bias, y);
}

void matvec_t_acc(const double* w, std::size_t rows, std::size_t cols, const double* gy,
                  double* gx) {
  active_table()->matvec_t_acc(w, rows, cols, gy, gx);
}

void outer_acc(double* gw, std::size_t rows, std::size_t cols, const double* gy,
               const double* x) {
  active_table()->outer_acc(gw, rows, cols, gy, x);
}

void axpy(std::size_t n, double a, const double* x, double* y) {
  active_table()->axpy(n, a, x, y);
}

double sum_sq(const double* x, std::size_t n) { return active_table()->sum_sq(x, n); }

void scale(double* x, std::size_t n, double a) { active_table()->scale(x, n, a); }

void adam_update(std::size_t n, double* p, double* m, double* v, const double* g, double lr,
                 double beta1, double beta2, double eps, double bc1, double bc2) {
  active_table()->adam_update(n, p, m, v, g, lr, beta1, beta2, eps, bc1, bc2);
}

}  // namespace mmforge::kern

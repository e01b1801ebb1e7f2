#pragma once

// Data-parallel arithmetic primitives behind the neural stack. Every routine
// has a scalar reference implementation and, on x86-64, an AVX2 variant; the
// backend is picked once at startup from cpuid and can be forced with
// set_backend() or the MMFORGE_KERNELS environment variable (scalar|avx2).
// AVX2 results may differ from scalar in the last bits because of FMA
// contraction and lane-wise accumulation order; equivalence tests compare
// with a relative tolerance.

#include <cstddef>

namespace mmforge::kern {

enum class Backend { Scalar, Avx2 };

Backend active_backend();
bool backend_available(Backend b);
// Returns false (and leaves the active backend unchanged) if unsupported.
bool set_backend(Backend b);
const char* backend_name(Backend b);

// Sum of a[i] * b[i].
double dot(const double* a, const double* b, std::size_t n);

// y = W x + bias, W row-major [rows x cols]; bias may be null.
void matvec(const double* w, std::size_t rows, std::size_t cols, const double* x,
            const double* bias, double* y);

// gx += W^T gy, W row-major [rows x cols].
void matvec_t_acc(const double* w, std::size_t rows, std::size_t cols, const double* gy,
                  double* gx);

// gw += gy x^T (outer product), gw row-major [rows x cols].
void outer_acc(double* gw, std::size_t rows, std::size_t cols, const double* gy,
               const double* x);

// y += a * x.
void axpy(std::size_t n, double a, const double* x, double* y);

// Sum of x[i]^2.
double sum_sq(const double* x, std::size_t n);

// x *= a.
void scale(double* x, std::size_t n, double a);

// One Adam update over n parameters. bc1/bc2 are the bias-correction factors
// (1 - beta1^t) and (1 - beta2^t), computed by the caller per step:
//   m = beta1 m + (1-beta1) g
//   v = beta2 v + (1-beta2) g^2
//   p -= lr * (m/bc1) / (sqrt(v/bc2) + eps)
void adam_update(std::size_t n, double* p, double* m, double* v, const double* g, double lr,
                 double beta1, double beta2, double eps, double bc1, double bc2);

namespace detail {

struct KernelTable {
  double (*dot)(const double*, const double*, std::size_t);
  void (*matvec)(const double*, std::size_t, std::size_t, const double*, const double*, double*);
  void (*matvec_t_acc)(const double*, std::size_t, std::size_t, const double*, double*);
  void (*outer_acc)(double*, std::size_t, std::size_t, const double*, const double*);
  void (*axpy)(std::size_t, double, const double*, double*);
  double (*sum_sq)(const double*, std::size_t);
  void (*scale)(double*, std::size_t, double);
  void (*adam_update)(std::size_t, double*, double*, double*, const double*, double, double,
                      double, double, double, double);
};

const KernelTable& scalar_table();
#if defined(MMFORGE_WITH_AVX2)
const KernelTable& avx2_table();
#endif

}  // namespace detail

}  // namespace mmforge::kern

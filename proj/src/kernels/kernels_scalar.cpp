// Scalar reference kernels. These definitions are the semantic contract the
// SIMD variants must reproduce bit-for-bit; keep the operation order of every
// statement exactly as written.

#include <cmath>
#include <cstring>

#include "pcmorph/kernels.hpp"

namespace pcmorph::kern {
namespace {

void matmul_scalar(const double* a, const double* b, double* c, std::size_t m,
                   std::size_t k, std::size_t n) {
  std::memset(c, 0, m * n * sizeof(double));
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

void matmul_acc_scalar(const double* a, const double* b, double* c,
                       std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

void transpose_scalar(const double* a, double* at, std::size_t rows,
                      std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) at[j * rows + i] = a[i * cols + j];
}

void add_scalar(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_scalar(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_scalar(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_scalar(const double* a, double s, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * s;
}

void square_scalar(const double* a, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * a[i];
}

void axpy_scalar(double s, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = y[i] + s * x[i];
}

void dist2_batch_scalar(double qx, double qy, double qz, const double* xs,
                        const double* ys, const double* zs, std::size_t n,
                        double* d2) {
  for (std::size_t i = 0; i < n; ++i)
    d2[i] = dist2(qx, qy, qz, xs[i], ys[i], zs[i]);
}

void adam_update_scalar(double* p, const double* g, double* m, double* v,
                        std::size_t n, double lr, double beta1, double beta2,
                        double eps, double corr1, double corr2) {
  const double c1 = 1.0 - beta1;
  const double c2 = 1.0 - beta2;
  for (std::size_t i = 0; i < n; ++i) {
    const double gi = g[i];
    m[i] = beta1 * m[i] + c1 * gi;
    v[i] = beta2 * v[i] + c2 * (gi * gi);
    const double mhat = m[i] / corr1;
    const double vhat = v[i] / corr2;
    p[i] = p[i] - lr * (mhat / (std::sqrt(vhat) + eps));
  }
}

}  // namespace

const Kernels& scalar_kernels() {
  static const Kernels table = {
      "scalar",          matmul_scalar, matmul_acc_scalar, transpose_scalar,
      add_scalar,        sub_scalar,    mul_scalar,        scale_scalar,
      square_scalar,     axpy_scalar,   dist2_batch_scalar,
      adam_update_scalar,
  };
  return table;
}

}  // namespace pcmorph::kern

// AVX2 kernel variants. Bit-identical to the scalar reference: vectorization
// runs across independent output elements, each element sees the same
// operation sequence as the reference, and mul/add stay separate instructions
// (vfmadd would change rounding). This file is compiled with -mavx2 on
// x86-64 only; selection happens at runtime in kernels.cpp.

#include "pcmorph/kernels.hpp"

#if defined(__x86_64__) && defined(__AVX2__)

#include <immintrin.h>

#include <cmath>
#include <cstring>

namespace pcmorph::kern {
namespace {

constexpr std::size_t W = 4;  // doubles per __m256d

void matmul_avx2(const double* a, const double* b, double* c, std::size_t m,
                 std::size_t k, std::size_t n) {
  std::memset(c, 0, m * n * sizeof(double));
  const std::size_t nv = n - n % W;
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* brow = b + p * n;
      const __m256d va = _mm256_set1_pd(aip);
      for (std::size_t j = 0; j < nv; j += W) {
        const __m256d vb = _mm256_loadu_pd(brow + j);
        const __m256d vc = _mm256_loadu_pd(crow + j);
        _mm256_storeu_pd(crow + j, _mm256_add_pd(vc, _mm256_mul_pd(va, vb)));
      }
      for (std::size_t j = nv; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

void matmul_acc_avx2(const double* a, const double* b, double* c,
                     std::size_t m, std::size_t k, std::size_t n) {
  const std::size_t nv = n - n % W;
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* brow = b + p * n;
      const __m256d va = _mm256_set1_pd(aip);
      for (std::size_t j = 0; j < nv; j += W) {
        const __m256d vb = _mm256_loadu_pd(brow + j);
        const __m256d vc = _mm256_loadu_pd(crow + j);
        _mm256_storeu_pd(crow + j, _mm256_add_pd(vc, _mm256_mul_pd(va, vb)));
      }
      for (std::size_t j = nv; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

// Pure data movement; shared with the scalar path.
void transpose_avx2(const double* a, double* at, std::size_t rows,
                    std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) at[j * rows + i] = a[i * cols + j];
}

void add_avx2(const double* a, const double* b, double* out, std::size_t n) {
  const std::size_t nv = n - n % W;
  for (std::size_t i = 0; i < nv; i += W)
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i),
                                            _mm256_loadu_pd(b + i)));
  for (std::size_t i = nv; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_avx2(const double* a, const double* b, double* out, std::size_t n) {
  const std::size_t nv = n - n % W;
  for (std::size_t i = 0; i < nv; i += W)
    _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i),
                                            _mm256_loadu_pd(b + i)));
  for (std::size_t i = nv; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_avx2(const double* a, const double* b, double* out, std::size_t n) {
  const std::size_t nv = n - n % W;
  for (std::size_t i = 0; i < nv; i += W)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i),
                                            _mm256_loadu_pd(b + i)));
  for (std::size_t i = nv; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_avx2(const double* a, double s, double* out, std::size_t n) {
  const __m256d vs = _mm256_set1_pd(s);
  const std::size_t nv = n - n % W;
  for (std::size_t i = 0; i < nv; i += W)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), vs));
  for (std::size_t i = nv; i < n; ++i) out[i] = a[i] * s;
}

void square_avx2(const double* a, double* out, std::size_t n) {
  const std::size_t nv = n - n % W;
  for (std::size_t i = 0; i < nv; i += W) {
    const __m256d va = _mm256_loadu_pd(a + i);
    _mm256_storeu_pd(out + i, _mm256_mul_pd(va, va));
  }
  for (std::size_t i = nv; i < n; ++i) out[i] = a[i] * a[i];
}

void axpy_avx2(double s, const double* x, double* y, std::size_t n) {
  const __m256d vs = _mm256_set1_pd(s);
  const std::size_t nv = n - n % W;
  for (std::size_t i = 0; i < nv; i += W) {
    const __m256d vy = _mm256_loadu_pd(y + i);
    const __m256d vx = _mm256_loadu_pd(x + i);
    _mm256_storeu_pd(y + i, _mm256_add_pd(vy, _mm256_mul_pd(vs, vx)));
  }
  for (std::size_t i = nv; i < n; ++i) y[i] = y[i] + s * x[i];
}

void dist2_batch_avx2(double qx, double qy, double qz, const double* xs,
                      const double* ys, const double* zs, std::size_t n,
                      double* d2) {
  const __m256d vqx = _mm256_set1_pd(qx);
  const __m256d vqy = _mm256_set1_pd(qy);
  const __m256d vqz = _mm256_set1_pd(qz);
  const std::size_t nv = n - n % W;
  for (std::size_t i = 0; i < nv; i += W) {
    const __m256d dx = _mm256_sub_pd(vqx, _mm256_loadu_pd(xs + i));
    const __m256d dy = _mm256_sub_pd(vqy, _mm256_loadu_pd(ys + i));
    const __m256d dz = _mm256_sub_pd(vqz, _mm256_loadu_pd(zs + i));
    const __m256d sxy =
        _mm256_add_pd(_mm256_mul_pd(dx, dx), _mm256_mul_pd(dy, dy));
    _mm256_storeu_pd(d2 + i, _mm256_add_pd(sxy, _mm256_mul_pd(dz, dz)));
  }
  for (std::size_t i = nv; i < n; ++i)
    d2[i] = dist2(qx, qy, qz, xs[i], ys[i], zs[i]);
}

// vsqrtpd and vdivpd are correctly rounded, so this matches scalar exactly.
void adam_update_avx2(double* p, const double* g, double* m, double* v,
                      std::size_t n, double lr, double beta1, double beta2,
                      double eps, double corr1, double corr2) {
  const double c1s = 1.0 - beta1;
  const double c2s = 1.0 - beta2;
  const __m256d vb1 = _mm256_set1_pd(beta1);
  const __m256d vb2 = _mm256_set1_pd(beta2);
  const __m256d vc1 = _mm256_set1_pd(c1s);
  const __m256d vc2 = _mm256_set1_pd(c2s);
  const __m256d vcorr1 = _mm256_set1_pd(corr1);
  const __m256d vcorr2 = _mm256_set1_pd(corr2);
  const __m256d veps = _mm256_set1_pd(eps);
  const __m256d vlr = _mm256_set1_pd(lr);
  const std::size_t nv = n - n % W;
  for (std::size_t i = 0; i < nv; i += W) {
    const __m256d vg = _mm256_loadu_pd(g + i);
    __m256d vm = _mm256_loadu_pd(m + i);
    __m256d vv = _mm256_loadu_pd(v + i);
    vm = _mm256_add_pd(_mm256_mul_pd(vb1, vm), _mm256_mul_pd(vc1, vg));
    vv = _mm256_add_pd(_mm256_mul_pd(vb2, vv),
                       _mm256_mul_pd(vc2, _mm256_mul_pd(vg, vg)));
    _mm256_storeu_pd(m + i, vm);
    _mm256_storeu_pd(v + i, vv);
    const __m256d mhat = _mm256_div_pd(vm, vcorr1);
    const __m256d vhat = _mm256_div_pd(vv, vcorr2);
    const __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(vhat), veps);
    const __m256d upd = _mm256_mul_pd(vlr, _mm256_div_pd(mhat, denom));
    _mm256_storeu_pd(p + i, _mm256_sub_pd(_mm256_loadu_pd(p + i), upd));
  }
  for (std::size_t i = nv; i < n; ++i) {
    const double gi = g[i];
    m[i] = beta1 * m[i] + c1s * gi;
    v[i] = beta2 * v[i] + c2s * (gi * gi);
    const double mhat = m[i] / corr1;
    const double vhat = v[i] / corr2;
    p[i] = p[i] - lr * (mhat / (std::sqrt(vhat) + eps));
  }
}

}  // namespace

const Kernels* avx2_kernels() {
  static const Kernels table = {
      "avx2",           matmul_avx2, matmul_acc_avx2, transpose_avx2,
      add_avx2,         sub_avx2,    mul_avx2,        scale_avx2,
      square_avx2,      axpy_avx2,   dist2_batch_avx2,
      adam_update_avx2,
  };
  return &table;
}

}  // namespace pcmorph::kern

#else  // non-x86 or AVX2 not enabled for this TU

namespace pcmorph::kern {
const Kernels* avx2_kernels() { return nullptr; }
}  // namespace pcmorph::kern

#endif

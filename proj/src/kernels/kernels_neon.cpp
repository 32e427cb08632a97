// NEON kernel variants for aarch64. Same bit-exactness contract as the AVX2
// file: per-element operation order matches the scalar reference, no fused
// multiply-add. float64x2 NEON is baseline on aarch64, so no special compile
// flags are needed.

#include "pcmorph/kernels.hpp"

#if defined(__aarch64__)

#include <arm_neon.h>

#include <cmath>
#include <cstring>

namespace pcmorph::kern {
namespace {

constexpr std::size_t W = 2;  // doubles per float64x2_t

void matmul_neon(const double* a, const double* b, double* c, std::size_t m,
                 std::size_t k, std::size_t n) {
  std::memset(c, 0, m * n * sizeof(double));
  const std::size_t nv = n - n % W;
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* brow = b + p * n;
      const float64x2_t va = vdupq_n_f64(aip);
      for (std::size_t j = 0; j < nv; j += W) {
        const float64x2_t vb = vld1q_f64(brow + j);
        const float64x2_t vc = vld1q_f64(crow + j);
        vst1q_f64(crow + j, vaddq_f64(vc, vmulq_f64(va, vb)));
      }
      for (std::size_t j = nv; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

void matmul_acc_neon(const double* a, const double* b, double* c,
                     std::size_t m, std::size_t k, std::size_t n) {
  const std::size_t nv = n - n % W;
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* brow = b + p * n;
      const float64x2_t va = vdupq_n_f64(aip);
      for (std::size_t j = 0; j < nv; j += W) {
        const float64x2_t vb = vld1q_f64(brow + j);
        const float64x2_t vc = vld1q_f64(crow + j);
        vst1q_f64(crow + j, vaddq_f64(vc, vmulq_f64(va, vb)));
      }
      for (std::size_t j = nv; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

void transpose_neon(const double* a, double* at, std::size_t rows,
                    std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) at[j * rows + i] = a[i * cols + j];
}

void add_neon(const double* a, const double* b, double* out, std::size_t n) {
  const std::size_t nv = n - n % W;
  for (std::size_t i = 0; i < nv; i += W)
    vst1q_f64(out + i, vaddq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (std::size_t i = nv; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_neon(const double* a, const double* b, double* out, std::size_t n) {
  const std::size_t nv = n - n % W;
  for (std::size_t i = 0; i < nv; i += W)
    vst1q_f64(out + i, vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (std::size_t i = nv; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_neon(const double* a, const double* b, double* out, std::size_t n) {
  const std::size_t nv = n - n % W;
  for (std::size_t i = 0; i < nv; i += W)
    vst1q_f64(out + i, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (std::size_t i = nv; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_neon(const double* a, double s, double* out, std::size_t n) {
  const float64x2_t vs = vdupq_n_f64(s);
  const std::size_t nv = n - n % W;
  for (std::size_t i = 0; i < nv; i += W)
    vst1q_f64(out + i, vmulq_f64(vld1q_f64(a + i), vs));
  for (std::size_t i = nv; i < n; ++i) out[i] = a[i] * s;
}

void square_neon(const double* a, double* out, std::size_t n) {
  const std::size_t nv = n - n % W;
  for (std::size_t i = 0; i < nv; i += W) {
    const float64x2_t va = vld1q_f64(a + i);
    vst1q_f64(out + i, vmulq_f64(va, va));
  }
  for (std::size_t i = nv; i < n; ++i) out[i] = a[i] * a[i];
}

void axpy_neon(double s, const double* x, double* y, std::size_t n) {
  const float64x2_t vs = vdupq_n_f64(s);
  const std::size_t nv = n - n % W;
  for (std::size_t i = 0; i < nv; i += W) {
    const float64x2_t vy = vld1q_f64(y + i);
    const float64x2_t vx = vld1q_f64(x + i);
    vst1q_f64(y + i, vaddq_f64(vy, vmulq_f64(vs, vx)));
  }
  for (std::size_t i = nv; i < n; ++i) y[i] = y[i] + s * x[i];
}

void dist2_batch_neon(double qx, double qy, double qz, const double* xs,
                      const double* ys, const double* zs, std::size_t n,
                      double* d2) {
  const float64x2_t vqx = vdupq_n_f64(qx);
  const float64x2_t vqy = vdupq_n_f64(qy);
  const float64x2_t vqz = vdupq_n_f64(qz);
  const std::size_t nv = n - n % W;
  for (std::size_t i = 0; i < nv; i += W) {
    const float64x2_t dx = vsubq_f64(vqx, vld1q_f64(xs + i));
    const float64x2_t dy = vsubq_f64(vqy, vld1q_f64(ys + i));
    const float64x2_t dz = vsubq_f64(vqz, vld1q_f64(zs + i));
    const float64x2_t sxy = vaddq_f64(vmulq_f64(dx, dx), vmulq_f64(dy, dy));
    vst1q_f64(d2 + i, vaddq_f64(sxy, vmulq_f64(dz, dz)));
  }
  for (std::size_t i = nv; i < n; ++i)
    d2[i] = dist2(qx, qy, qz, xs[i], ys[i], zs[i]);
}

void adam_update_neon(double* p, const double* g, double* m, double* v,
                      std::size_t n, double lr, double beta1, double beta2,
                      double eps, double corr1, double corr2) {
  const double c1s = 1.0 - beta1;
  const double c2s = 1.0 - beta2;
  const float64x2_t vb1 = vdupq_n_f64(beta1);
  const float64x2_t vb2 = vdupq_n_f64(beta2);
  const float64x2_t vc1 = vdupq_n_f64(c1s);
  const float64x2_t vc2 = vdupq_n_f64(c2s);
  const float64x2_t vcorr1 = vdupq_n_f64(corr1);
  const float64x2_t vcorr2 = vdupq_n_f64(corr2);
  const float64x2_t veps = vdupq_n_f64(eps);
  const float64x2_t vlr = vdupq_n_f64(lr);
  const std::size_t nv = n - n % W;
  for (std::size_t i = 0; i < nv; i += W) {
    const float64x2_t vg = vld1q_f64(g + i);
    float64x2_t vm = vld1q_f64(m + i);
    float64x2_t vv = vld1q_f64(v + i);
    vm = vaddq_f64(vmulq_f64(vb1, vm), vmulq_f64(vc1, vg));
    vv = vaddq_f64(vmulq_f64(vb2, vv), vmulq_f64(vc2, vmulq_f64(vg, vg)));
    vst1q_f64(m + i, vm);
    vst1q_f64(v + i, vv);
    const float64x2_t mhat = vdivq_f64(vm, vcorr1);
    const float64x2_t vhat = vdivq_f64(vv, vcorr2);
    const float64x2_t denom = vaddq_f64(vsqrtq_f64(vhat), veps);
    const float64x2_t upd = vmulq_f64(vlr, vdivq_f64(mhat, denom));
    vst1q_f64(p + i, vsubq_f64(vld1q_f64(p + i), upd));
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

const Kernels* neon_kernels() {
  static const Kernels table = {
      "neon",           matmul_neon, matmul_acc_neon, transpose_neon,
      add_neon,         sub_neon,    mul_neon,        scale_neon,
      square_neon,      axpy_neon,   dist2_batch_neon,
      adam_update_neon,
  };
  return &table;
}

}  // namespace pcmorph::kern

#else

namespace pcmorph::kern {
const Kernels* neon_kernels() { return nullptr; }
}  // namespace pcmorph::kern

#endif

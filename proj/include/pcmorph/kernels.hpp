#pragma once

#include <cstddef>
#include <string>

namespace pcmorph::kern {

// Data-parallel inner loops used by the autodiff engine, the Chamfer paths
// and the optimizer. Every entry has a scalar reference implementation and
// optional SIMD variants (AVX2 on x86-64, NEON on aarch64) selected at
// runtime. The SIMD variants are required to be bit-identical to the scalar
// reference: they vectorize across independent output elements and keep the
// per-element operation order of the reference (no FMA contraction), so
// dispatch can never change a result. tests/test_kernels.cpp enforces this.
struct Kernels {
  const char* name;

  // c[m x n] = a[m x k] * b[k x n], row-major. Per output element the
  // accumulation runs over k in ascending order starting from 0.0.
  void (*matmul)(const double* a, const double* b, double* c,
                 std::size_t m, std::size_t k, std::size_t n);
  // c += a * b, same ordering contract.
  void (*matmul_acc)(const double* a, const double* b, double* c,
                     std::size_t m, std::size_t k, std::size_t n);

  void (*transpose)(const double* a, double* at, std::size_t rows,
                    std::size_t cols);

  // Elementwise. out may alias a or b.
  void (*add)(const double* a, const double* b, double* out, std::size_t n);
  void (*sub)(const double* a, const double* b, double* out, std::size_t n);
  void (*mul)(const double* a, const double* b, double* out, std::size_t n);
  void (*scale)(const double* a, double s, double* out, std::size_t n);
  void (*square)(const double* a, double* out, std::size_t n);
  // y += s * x, evaluated as y + (s * x) per element.
  void (*axpy)(double s, const double* x, double* y, std::size_t n);

  // d2[i] = ((qx-xs[i])^2 + (qy-ys[i])^2) + (qz-zs[i])^2. This association
  // is the project-wide squared-distance definition; see dist2() below.
  void (*dist2_batch)(double qx, double qy, double qz, const double* xs,
                      const double* ys, const double* zs, std::size_t n,
                      double* d2);

  // One Adam update over a parameter block. corr1 = 1 - beta1^t,
  // corr2 = 1 - beta2^t (precomputed by the caller). Per element:
  //   m = beta1*m + (1-beta1)*g
  //   v = beta2*v + (1-beta2)*(g*g)
  //   p = p - lr * (m/corr1) / (sqrt(v/corr2) + eps)
  void (*adam_update)(double* p, const double* g, double* m, double* v,
                      std::size_t n, double lr, double beta1, double beta2,
                      double eps, double corr1, double corr2);
};

// Scalar reference; always available.
const Kernels& scalar_kernels();

// SIMD variants; null when the build or the CPU does not support them.
const Kernels* avx2_kernels();
const Kernels* neon_kernels();

// Active table. Resolution order: PCMORPH_KERNELS env var ("scalar",
// "avx2", "neon", "auto"), then best supported variant, then scalar.
const Kernels& active();

// Force a table by name ("auto" re-runs detection). Throws InvalidArgument
// on unknown or unsupported names. Intended for tests and benchmarks.
void force(const std::string& name);

// Canonical squared Euclidean distance between two 3D points. Every distance
// in the project (brute-force Chamfer, kd-tree, k-NN, loss terms) evaluates
// with exactly this association so the paths agree bit-for-bit.
inline double dist2(double ax, double ay, double az, double bx, double by,
                    double bz) {
  const double dx = ax - bx;
  const double dy = ay - by;
  const double dz = az - bz;
  return (dx * dx + dy * dy) + dz * dz;
}

}  // namespace pcmorph::kern

#pragma once

#include <cstdint>
#include <vector>

#include "pcmorph/geom.hpp"

namespace pcmorph {

// Chamfer distance with per-point nearest assignments:
//   CD(A,B) = (1/|A|) sum_a min_b ||a-b||^2 + (1/|B|) sum_b min_a ||a-b||^2
// Squared distances, per-side means. Both implementations accumulate in
// ascending point-index order and break nearest ties to the lower index, so
// the kd-tree path and the brute-force oracle compare with ==, not with a
// tolerance.
struct ChamferResult {
  double value = 0.0;
  std::vector<std::uint32_t> a_to_b;  // nearest index into B for each point of A
  std::vector<std::uint32_t> b_to_a;  // nearest index into A for each point of B
};

// kd-tree accelerated path.
ChamferResult chamfer(const PointCloud& a, const PointCloud& b);

// Exhaustive O(|A|*|B|) oracle. Guarded at |A|*|B| <= 10^7.
ChamferResult chamfer_bruteforce(const PointCloud& a, const PointCloud& b);

// X(alpha)_i = alpha * xa_i + (1-alpha) * xb_i. Pairing is by index, which
// is exactly what makes this baseline fail on unaligned shapes.
// Requires |Xa| == |Xb| and alpha in [0, 1].
PointCloud naive_interpolate(const PointCloud& xa, const PointCloud& xb,
                             double alpha);

}  // namespace pcmorph

#include <limits>

#include "pcmorph/kernels.hpp"
#include "pcmorph/metrics.hpp"

namespace pcmorph {
namespace {

// One direction of the Chamfer sum through the kd-tree, ascending order.
double directed_sum(const PointCloud& from, const KdTree& to_tree,
                    std::vector<std::uint32_t>& assign) {
  assign.resize(from.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < from.size(); ++i) {
    const KdTree::Hit hit = to_tree.nearest(from[i]);
    assign[i] = static_cast<std::uint32_t>(hit.index);
    sum += hit.d2;
  }
  return sum;
}

}  // namespace

ChamferResult chamfer(const PointCloud& a, const PointCloud& b) {
  a.validate();
  b.validate();
  const KdTree tree_b(b);
  const KdTree tree_a(a);
  ChamferResult r;
  const double sum_a = directed_sum(a, tree_b, r.a_to_b);
  const double sum_b = directed_sum(b, tree_a, r.b_to_a);
  r.value = sum_a / static_cast<double>(a.size()) +
            sum_b / static_cast<double>(b.size());
  return r;
}

ChamferResult chamfer_bruteforce(const PointCloud& a, const PointCloud& b) {
  a.validate();
  b.validate();
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  if (n * m > 10'000'000)
    throw InvalidArgument("chamfer_bruteforce: |A|*|B| exceeds the 1e7 guard");

  ChamferResult r;
  r.a_to_b.resize(n);
  r.b_to_a.resize(m);
  std::vector<double> best_b(m, std::numeric_limits<double>::infinity());

  // Single pass over all pairs in ascending (i, j) order; the B-side minima
  // fall out of the same loop. Ties go to the lower index in both directions
  // because j (resp. i) only replaces a strictly larger distance.
  double sum_a = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::uint32_t best_j = 0;
    for (std::size_t j = 0; j < m; ++j) {
      const double d2 = kern::dist2(a[i].x, a[i].y, a[i].z, b[j].x, b[j].y,
                                    b[j].z);
      if (d2 < best) {
        best = d2;
        best_j = static_cast<std::uint32_t>(j);
      }
      if (d2 < best_b[j]) {
        best_b[j] = d2;
        r.b_to_a[j] = static_cast<std::uint32_t>(i);
      }
    }
    r.a_to_b[i] = best_j;
    sum_a += best;
  }
  double sum_b = 0.0;
  for (std::size_t j = 0; j < m; ++j) sum_b += best_b[j];

  r.value = sum_a / static_cast<double>(n) + sum_b / static_cast<double>(m);
  return r;
}

PointCloud naive_interpolate(const PointCloud& xa, const PointCloud& xb,
                             double alpha) {
  xa.validate();
  xb.validate();
  if (xa.size() != xb.size())
    throw InvalidArgument("naive_interpolate: cloud sizes differ (" +
                          std::to_string(xa.size()) + " vs " +
                          std::to_string(xb.size()) + ")");
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw InvalidArgument("naive_interpolate: alpha must be in [0, 1]");

  const double beta = 1.0 - alpha;
  PointCloud out;
  out.points.reserve(xa.size());
  for (std::size_t i = 0; i < xa.size(); ++i) {
    const Point3& p = xa[i];
    const Point3& q = xb[i];
    out.points.push_back({alpha * p.x + beta * q.x, alpha * p.y + beta * q.y,
                          alpha * p.z + beta * q.z});
  }
  return out;
}

}  // namespace pcmorph

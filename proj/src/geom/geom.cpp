#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <unordered_set>

#include "pcmorph/geom.hpp"
#include "pcmorph/kernels.hpp"
#include "pcmorph/rng.hpp"

namespace pcmorph {

bool is_finite(const Point3& p) {
  return std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.z);
}

void PointCloud::validate() const {
  if (points.empty()) throw InvalidArgument("point cloud is empty");
  for (std::size_t i = 0; i < points.size(); ++i)
    if (!is_finite(points[i]))
      throw InvalidArgument("point cloud has non-finite point at index " +
                            std::to_string(i));
}

void TriMesh::validate() const {
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const Face& face = faces[f];
    for (std::uint32_t idx : face)
      if (idx >= vertices.size())
        throw InvalidArgument("face " + std::to_string(f) +
                              " references vertex " + std::to_string(idx) +
                              " out of range");
    if (face[0] == face[1] || face[1] == face[2] || face[0] == face[2])
      throw InvalidArgument("face " + std::to_string(f) +
                            " has repeated vertex indices");
  }
  for (std::size_t v = 0; v < vertices.size(); ++v)
    if (!is_finite(vertices[v]))
      throw InvalidArgument("vertex " + std::to_string(v) + " is non-finite");
}

std::size_t NeighborGraph::directed_edge_count() const {
  std::size_t count = 0;
  for (const auto& nbrs : adjacency) count += nbrs.size();
  return count;
}

void NeighborGraph::validate() const {
  const std::size_t n = adjacency.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& nbrs = adjacency[i];
    if (nbrs.empty())
      throw InvalidArgument("neighbor graph: index " + std::to_string(i) +
                            " has no neighbors");
    for (std::uint32_t j : nbrs) {
      if (j >= n)
        throw InvalidArgument("neighbor graph: neighbor index out of range");
      if (j == i)
        throw InvalidArgument("neighbor graph: self loop at index " +
                              std::to_string(i));
      const auto& back = adjacency[j];
      if (!std::binary_search(back.begin(), back.end(),
                              static_cast<std::uint32_t>(i)))
        throw InvalidArgument("neighbor graph: edge (" + std::to_string(i) +
                              "," + std::to_string(j) + ") not symmetric");
    }
    if (!std::is_sorted(nbrs.begin(), nbrs.end()))
      throw InvalidArgument("neighbor graph: adjacency not sorted");
  }
}

PointCloud NormTransform::apply(const PointCloud& c) const {
  PointCloud out;
  out.points.reserve(c.size());
  for (const Point3& p : c.points) out.points.push_back(apply(p));
  return out;
}

PointCloud NormTransform::invert(const PointCloud& c) const {
  PointCloud out;
  out.points.reserve(c.size());
  for (const Point3& p : c.points) out.points.push_back(invert(p));
  return out;
}

std::pair<PointCloud, NormTransform> normalize_unit_sphere(
    const PointCloud& cloud) {
  cloud.validate();
  const std::size_t n = cloud.size();

  double sx = 0.0, sy = 0.0, sz = 0.0;
  for (const Point3& p : cloud.points) {
    sx += p.x;
    sy += p.y;
    sz += p.z;
  }
  const Point3 centroid{sx / static_cast<double>(n),
                        sy / static_cast<double>(n),
                        sz / static_cast<double>(n)};

  double r2max = 0.0;
  for (const Point3& p : cloud.points) {
    const double d2 = kern::dist2(p.x, p.y, p.z, centroid.x, centroid.y,
                                  centroid.z);
    if (d2 > r2max) r2max = d2;
  }
  if (r2max == 0.0)
    throw InvalidArgument(
        "normalize_unit_sphere: degenerate cloud (all points identical)");

  NormTransform t{centroid, 1.0 / std::sqrt(r2max)};
  return {t.apply(cloud), t};
}

namespace {

// Exact-coordinate hashing for the distinct-vertex subsample.
struct PointBitsHash {
  std::size_t operator()(const Point3& p) const {
    std::uint64_t bits[3];
    std::memcpy(&bits[0], &p.x, 8);
    std::memcpy(&bits[1], &p.y, 8);
    std::memcpy(&bits[2], &p.z, 8);
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::uint64_t b : bits) {
      h ^= b;
      h *= 0x100000001b3ull;
    }
    return static_cast<std::size_t>(h);
  }
};

struct PointBitsEq {
  bool operator()(const Point3& a, const Point3& b) const {
    return std::memcmp(&a, &b, sizeof(Point3)) == 0;
  }
};

double face_area(const TriMesh& mesh, const Face& f) {
  const Point3& a = mesh.vertices[f[0]];
  const Point3& b = mesh.vertices[f[1]];
  const Point3& c = mesh.vertices[f[2]];
  const double ux = b.x - a.x, uy = b.y - a.y, uz = b.z - a.z;
  const double vx = c.x - a.x, vy = c.y - a.y, vz = c.z - a.z;
  const double cx = uy * vz - uz * vy;
  const double cy = uz * vx - ux * vz;
  const double cz = ux * vy - uy * vx;
  return 0.5 * std::sqrt((cx * cx + cy * cy) + cz * cz);
}

}  // namespace

SampleResult sample_points(const TriMesh& mesh, std::size_t n,
                           std::uint64_t seed) {
  if (n < 1) throw InvalidArgument("sample_points: n must be >= 1");
  if (mesh.vertices.empty())
    throw InvalidArgument("sample_points: mesh has no vertices");
  mesh.validate();

  const std::size_t v = mesh.vertices.size();
  SampleResult result;

  if (n == v) {
    // Identity mode: order equals mesh vertex order. Required for export.
    result.cloud.points = mesh.vertices;
    result.source_map.resize(v);
    for (std::size_t i = 0; i < v; ++i)
      result.source_map[i] = static_cast<std::int64_t>(i);
    return result;
  }

  if (n < v) {
    std::unordered_set<Point3, PointBitsHash, PointBitsEq> seen;
    for (std::size_t i = 0; i < v && result.cloud.size() < n; ++i) {
      if (seen.insert(mesh.vertices[i]).second) {
        result.cloud.points.push_back(mesh.vertices[i]);
        result.source_map.push_back(static_cast<std::int64_t>(i));
      }
    }
    if (result.cloud.size() == n) return result;
    // Fewer than n distinct vertices; fall through to face sampling below.
  } else {
    result.cloud.points = mesh.vertices;
    result.source_map.resize(v);
    for (std::size_t i = 0; i < v; ++i)
      result.source_map[i] = static_cast<std::int64_t>(i);
  }

  // Area-weighted face sampling for the remainder.
  std::vector<double> cumulative;
  cumulative.reserve(mesh.faces.size());
  double total = 0.0;
  for (const Face& f : mesh.faces) {
    total += face_area(mesh, f);
    cumulative.push_back(total);
  }
  if (total <= 0.0)
    throw InvalidArgument(
        "sample_points: need face samples but mesh has no positive-area "
        "faces");

  Rng rng(seed);
  while (result.cloud.size() < n) {
    const double u = rng.uniform01() * total;
    const std::size_t fi = static_cast<std::size_t>(
        std::lower_bound(cumulative.begin(), cumulative.end(), u) -
        cumulative.begin());
    const Face& f = mesh.faces[std::min(fi, mesh.faces.size() - 1)];
    const Point3& a = mesh.vertices[f[0]];
    const Point3& b = mesh.vertices[f[1]];
    const Point3& c = mesh.vertices[f[2]];
    // Uniform barycentric coordinates via the square-root trick.
    const double r1 = std::sqrt(rng.uniform01());
    const double r2 = rng.uniform01();
    const double wa = 1.0 - r1;
    const double wb = r1 * (1.0 - r2);
    const double wc = r1 * r2;
    result.cloud.points.push_back({wa * a.x + wb * b.x + wc * c.x,
                                   wa * a.y + wb * b.y + wc * c.y,
                                   wa * a.z + wb * b.z + wc * c.z});
    result.source_map.push_back(-1);
  }
  return result;
}

NeighborGraph mesh_edge_graph(const TriMesh& mesh) {
  mesh.validate();
  NeighborGraph graph;
  graph.adjacency.resize(mesh.vertices.size());
  for (const Face& f : mesh.faces) {
    const std::uint32_t e[3][2] = {{f[0], f[1]}, {f[1], f[2]}, {f[2], f[0]}};
    for (const auto& edge : e) {
      graph.adjacency[edge[0]].push_back(edge[1]);
      graph.adjacency[edge[1]].push_back(edge[0]);
    }
  }
  for (std::size_t i = 0; i < graph.adjacency.size(); ++i) {
    auto& nbrs = graph.adjacency[i];
    std::sort(nbrs.begin(), nbrs.end());
    nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
    if (nbrs.empty())
      throw InvalidArgument("mesh_edge_graph: vertex " + std::to_string(i) +
                            " appears in no face");
  }
  return graph;
}

NeighborGraph knn_graph(const PointCloud& cloud, std::size_t k) {
  cloud.validate();
  const std::size_t n = cloud.size();
  if (k < 1) throw InvalidArgument("knn_graph: k must be >= 1");
  if (k >= n)
    throw InvalidArgument("knn_graph: k (" + std::to_string(k) +
                          ") must be < cloud size (" + std::to_string(n) +
                          ")");

  std::vector<double> xs(n), ys(n), zs(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = cloud[i].x;
    ys[i] = cloud[i].y;
    zs[i] = cloud[i].z;
  }

  NeighborGraph graph;
  graph.adjacency.resize(n);
  std::vector<double> d2(n);
  std::vector<std::uint32_t> order(n);
  for (std::size_t i = 0; i < n; ++i) {
    kern::active().dist2_batch(xs[i], ys[i], zs[i], xs.data(), ys.data(),
                               zs.data(), n, d2.data());
    order.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) order.push_back(static_cast<std::uint32_t>(j));
    std::partial_sort(order.begin(), order.begin() + static_cast<long>(k),
                      order.end(), [&](std::uint32_t a, std::uint32_t b) {
                        if (d2[a] != d2[b]) return d2[a] < d2[b];
                        return a < b;
                      });
    for (std::size_t j = 0; j < k; ++j)
      graph.adjacency[i].push_back(order[j]);
  }

  // Symmetrize by union so no vertex ends up isolated.
  NeighborGraph sym;
  sym.adjacency.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::uint32_t j : graph.adjacency[i]) {
      sym.adjacency[i].push_back(j);
      sym.adjacency[j].push_back(static_cast<std::uint32_t>(i));
    }
  for (auto& nbrs : sym.adjacency) {
    std::sort(nbrs.begin(), nbrs.end());
    nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
  }
  return sym;
}

// ---- KdTree ---------------------------------------------------------------

KdTree::KdTree(const PointCloud& cloud) {
  cloud.validate();
  const std::size_t n = cloud.size();
  perm_.resize(n);
  for (std::size_t i = 0; i < n; ++i) perm_[i] = static_cast<std::uint32_t>(i);

  // Build permutes perm_ so every leaf owns a contiguous range.
  xs_.resize(n);
  ys_.resize(n);
  zs_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs_[i] = cloud[i].x;
    ys_[i] = cloud[i].y;
    zs_[i] = cloud[i].z;
  }
  root_ = build(0, static_cast<std::uint32_t>(n));

  // Reorder coordinate arrays into leaf order.
  std::vector<double> px(n), py(n), pz(n);
  for (std::size_t i = 0; i < n; ++i) {
    px[i] = xs_[perm_[i]];
    py[i] = ys_[perm_[i]];
    pz[i] = zs_[perm_[i]];
  }
  xs_ = std::move(px);
  ys_ = std::move(py);
  zs_ = std::move(pz);
}

std::uint32_t KdTree::build(std::uint32_t begin, std::uint32_t end) {
  if (end - begin <= kLeafSize) {
    nodes_.push_back({0.0, -1, 0, 0, begin, end});
    return static_cast<std::uint32_t>(nodes_.size() - 1);
  }

  const double* coords[3] = {xs_.data(), ys_.data(), zs_.data()};
  double lo[3], hi[3];
  for (int a = 0; a < 3; ++a) {
    lo[a] = std::numeric_limits<double>::infinity();
    hi[a] = -std::numeric_limits<double>::infinity();
  }
  for (std::uint32_t i = begin; i < end; ++i)
    for (int a = 0; a < 3; ++a) {
      const double c = coords[a][perm_[i]];
      lo[a] = std::min(lo[a], c);
      hi[a] = std::max(hi[a], c);
    }
  int axis = 0;
  for (int a = 1; a < 3; ++a)
    if (hi[a] - lo[a] > hi[axis] - lo[axis]) axis = a;

  const std::uint32_t mid = begin + (end - begin) / 2;
  const double* ax = coords[axis];
  std::nth_element(perm_.begin() + begin, perm_.begin() + mid,
                   perm_.begin() + end,
                   [ax](std::uint32_t a, std::uint32_t b) {
                     if (ax[a] != ax[b]) return ax[a] < ax[b];
                     return a < b;  // stable under duplicate coordinates
                   });
  const double split = ax[perm_[mid]];

  nodes_.push_back({split, axis, 0, 0, 0, 0});
  const std::uint32_t node = static_cast<std::uint32_t>(nodes_.size() - 1);
  const std::uint32_t left = build(begin, mid);
  const std::uint32_t right = build(mid, end);
  nodes_[node].left = left;
  nodes_[node].right = right;
  return node;
}

void KdTree::search(std::uint32_t node_id, const Point3& q, Hit& best) const {
  const Node& node = nodes_[node_id];
  if (node.axis < 0) {
    const std::uint32_t count = node.end - node.begin;
    double d2buf[kLeafSize];
    kern::active().dist2_batch(q.x, q.y, q.z, xs_.data() + node.begin,
                               ys_.data() + node.begin, zs_.data() + node.begin,
                               count, d2buf);
    for (std::uint32_t i = 0; i < count; ++i) {
      const std::size_t orig = perm_[node.begin + i];
      if (d2buf[i] < best.d2 || (d2buf[i] == best.d2 && orig < best.index)) {
        best.d2 = d2buf[i];
        best.index = orig;
      }
    }
    return;
  }

  const double qc = node.axis == 0 ? q.x : (node.axis == 1 ? q.y : q.z);
  const double diff = qc - node.split;
  const std::uint32_t near = diff < 0.0 ? node.left : node.right;
  const std::uint32_t far = diff < 0.0 ? node.right : node.left;
  search(near, q, best);
  // Strict inequality: an equal-distance point behind the plane may win the
  // lower-index tie, so it must still be visited.
  if (diff * diff > best.d2) return;
  search(far, q, best);
}

KdTree::Hit KdTree::nearest(const Point3& query) const {
  if (!is_finite(query)) throw InvalidArgument("kdtree: non-finite query");
  Hit best{std::numeric_limits<std::size_t>::max(),
           std::numeric_limits<double>::infinity()};
  search(root_, query, best);
  return best;
}

}  // namespace pcmorph

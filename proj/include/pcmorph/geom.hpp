#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pcmorph/errors.hpp"

namespace pcmorph {

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend bool operator==(const Point3&, const Point3&) = default;
};

bool is_finite(const Point3& p);

// Ordered point set. Order is semantic: index i is the identity of a point
// across transformations, which is what makes mesh export possible.
struct PointCloud {
  std::vector<Point3> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  const Point3& operator[](std::size_t i) const { return points[i]; }
  Point3& operator[](std::size_t i) { return points[i]; }

  // Throws InvalidArgument if empty or any coordinate is non-finite.
  void validate() const;

  friend bool operator==(const PointCloud&, const PointCloud&) = default;
};

using Face = std::array<std::uint32_t, 3>;

struct TriMesh {
  std::vector<Point3> vertices;
  std::vector<Face> faces;

  // Throws InvalidArgument on out-of-range or degenerate face indices.
  void validate() const;

  PointCloud vertex_cloud() const { return PointCloud{vertices}; }
};

// Symmetric adjacency over point indices, no self loops, every index has at
// least one neighbor. Neighbor lists are kept sorted ascending so that any
// iteration over edges is deterministic.
struct NeighborGraph {
  std::vector<std::vector<std::uint32_t>> adjacency;

  std::size_t size() const { return adjacency.size(); }
  const std::vector<std::uint32_t>& neighbors(std::size_t i) const {
    return adjacency[i];
  }
  std::size_t directed_edge_count() const;

  // Throws InvalidArgument if any invariant fails.
  void validate() const;
};

// Similarity transform produced by normalization: q = (p - translation) * scale.
struct NormTransform {
  Point3 translation;
  double scale = 1.0;

  Point3 apply(const Point3& p) const {
    return {(p.x - translation.x) * scale, (p.y - translation.y) * scale,
            (p.z - translation.z) * scale};
  }
  Point3 invert(const Point3& q) const {
    return {q.x / scale + translation.x, q.y / scale + translation.y,
            q.z / scale + translation.z};
  }
  PointCloud apply(const PointCloud& c) const;
  PointCloud invert(const PointCloud& c) const;
};

// ---- file formats -------------------------------------------------------
//
// ASCII only. OFF per the ModelNet convention, OBJ with v/f records
// (1-based indices, normals/texcoords ignored), PLY vertex-only output.
// Coordinates are written with 6 decimal places.

TriMesh load_off(const std::string& bytes);
TriMesh load_obj(const std::string& bytes);
std::string write_obj(const TriMesh& mesh);

// Vertex-only ASCII PLY, points in index order. An optional comment is
// placed in the header (used by the CLI to label frames).
std::string write_ply_points(const PointCloud& cloud,
                             const std::string& comment = "");

// Convenience file-path wrappers; format chosen by extension (.off/.obj).
TriMesh load_mesh_file(const std::string& path);
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

// ---- normalization ------------------------------------------------------

// Translate the centroid to the origin and scale so the farthest point has
// norm 1. Errors if all points coincide. Returns the normalized cloud and
// the transform that maps original points into normalized space.
std::pair<PointCloud, NormTransform> normalize_unit_sphere(
    const PointCloud& cloud);

// ---- sampling -----------------------------------------------------------

// source_map[i] is the mesh vertex index point i came from, or -1 for
// points drawn from face interiors.
struct SampleResult {
  PointCloud cloud;
  std::vector<std::int64_t> source_map;
};

// n == vertex count: identity (cloud equals mesh.vertices, in order).
// n <  vertex count: first n distinct vertices in mesh order.
// n >  vertex count: all vertices, then area-weighted face samples.
SampleResult sample_points(const TriMesh& mesh, std::size_t n,
                           std::uint64_t seed);

// ---- neighbor graphs ----------------------------------------------------

// 1-ring adjacency: j in N(i) iff edge (i,j) appears in some face.
// Errors on vertices that appear in no face.
NeighborGraph mesh_edge_graph(const TriMesh& mesh);

// k nearest neighbors per point (ties to lower index), symmetrized by
// union, so degrees may exceed k. Requires k < cloud size.
NeighborGraph knn_graph(const PointCloud& cloud, std::size_t k);

// ---- nearest neighbor search --------------------------------------------

// Static kd-tree: median split on the widest axis, leaf size 16. Queries
// agree exactly with an exhaustive scan, ties broken by lower point index.
// Immutable after construction; concurrent queries are safe.
class KdTree {
 public:
  explicit KdTree(const PointCloud& cloud);

  struct Hit {
    std::size_t index;
    double d2;
  };
  Hit nearest(const Point3& query) const;

  std::size_t size() const { return xs_.size(); }

 private:
  struct Node {
    double split;         // splitting coordinate (interior only)
    std::int32_t axis;    // 0/1/2, or -1 for leaf
    std::uint32_t left;   // child node ids (interior)
    std::uint32_t right;
    std::uint32_t begin;  // point range (leaf)
    std::uint32_t end;
  };

  std::uint32_t build(std::uint32_t begin, std::uint32_t end);
  void search(std::uint32_t node, const Point3& q, Hit& best) const;

  static constexpr std::uint32_t kLeafSize = 16;

  // Points permuted into leaf order, stored as separate coordinate arrays
  // so leaf scans can run through the batched distance kernel.
  std::vector<double> xs_, ys_, zs_;
  std::vector<std::uint32_t> perm_;  // position -> original index
  std::vector<Node> nodes_;
  std::uint32_t root_ = 0;
};

}  // namespace pcmorph

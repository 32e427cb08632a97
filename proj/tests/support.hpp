#pragma once

// Shared fixtures for the test suites: procedural shapes, tiny file
// helpers, and a subprocess runner for CLI-level tests.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pcmorph/geom.hpp"
#include "pcmorph/rng.hpp"

namespace testsup {

using pcmorph::Face;
using pcmorph::Point3;
using pcmorph::PointCloud;
using pcmorph::TriMesh;

// Fibonacci lattice on the unit sphere: deterministic, near-uniform.
inline PointCloud fibonacci_sphere(std::size_t n) {
  PointCloud cloud;
  const double golden = (1.0 + std::sqrt(5.0)) / 2.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = 1.0 - (2.0 * static_cast<double>(i) + 1.0) /
                               static_cast<double>(n);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = 2.0 * 3.14159265358979323846 *
                       (static_cast<double>(i) / golden -
                        std::floor(static_cast<double>(i) / golden));
    cloud.points.push_back({r * std::cos(phi), r * std::sin(phi), z});
  }
  return cloud;
}

// Points on the surface of the axis-aligned cube [-0.5, 0.5]^3, assigned
// round-robin to faces with seeded uniform in-face coordinates.
inline PointCloud cube_surface(std::size_t n, std::uint64_t seed) {
  PointCloud cloud;
  pcmorph::Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const int face = static_cast<int>(i % 6);
    const double u = rng.uniform(-0.5, 0.5);
    const double v = rng.uniform(-0.5, 0.5);
    const int axis = face / 2;
    const double w = face % 2 == 0 ? -0.5 : 0.5;
    Point3 p;
    if (axis == 0)
      p = {w, u, v};
    else if (axis == 1)
      p = {u, w, v};
    else
      p = {u, v, w};
    cloud.points.push_back(p);
  }
  return cloud;
}

// Icosphere: subdivided icosahedron projected to the unit sphere.
inline TriMesh icosphere(int subdivisions) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Point3> verts = {
      {-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0},
      {0, -1, t}, {0, 1, t}, {0, -1, -t}, {0, 1, -t},
      {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  std::vector<Face> faces = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
      {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
      {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
      {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  auto normalize = [](Point3 p) {
    const double len = std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z);
    return Point3{p.x / len, p.y / len, p.z / len};
  };
  for (Point3& v : verts) v = normalize(v);

  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> midpoints;
    auto midpoint = [&](std::uint32_t a, std::uint32_t b) {
      const auto key = std::minmax(a, b);
      const auto it = midpoints.find(key);
      if (it != midpoints.end()) return it->second;
      const Point3& pa = verts[a];
      const Point3& pb = verts[b];
      verts.push_back(normalize(
          {(pa.x + pb.x) / 2, (pa.y + pb.y) / 2, (pa.z + pb.z) / 2}));
      const auto id = static_cast<std::uint32_t>(verts.size() - 1);
      midpoints.emplace(key, id);
      return id;
    };
    std::vector<Face> next;
    for (const Face& f : faces) {
      const std::uint32_t ab = midpoint(f[0], f[1]);
      const std::uint32_t bc = midpoint(f[1], f[2]);
      const std::uint32_t ca = midpoint(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    faces = std::move(next);
  }
  return TriMesh{std::move(verts), std::move(faces)};
}

// Grid cube mesh: each face of [-0.5, 0.5]^3 split into segments^2 quads.
// Vertices are not welded across edges; fine for sampling fixtures.
inline TriMesh grid_cube(int segments) {
  TriMesh mesh;
  for (int face = 0; face < 6; ++face) {
    const int axis = face / 2;
    const double w = face % 2 == 0 ? -0.5 : 0.5;
    const auto base = static_cast<std::uint32_t>(mesh.vertices.size());
    for (int i = 0; i <= segments; ++i)
      for (int j = 0; j <= segments; ++j) {
        const double u = -0.5 + static_cast<double>(i) / segments;
        const double v = -0.5 + static_cast<double>(j) / segments;
        if (axis == 0)
          mesh.vertices.push_back({w, u, v});
        else if (axis == 1)
          mesh.vertices.push_back({u, w, v});
        else
          mesh.vertices.push_back({u, v, w});
      }
    const auto idx = [&](int i, int j) {
      return base + static_cast<std::uint32_t>(i * (segments + 1) + j);
    };
    for (int i = 0; i < segments; ++i)
      for (int j = 0; j < segments; ++j) {
        mesh.faces.push_back({idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)});
        mesh.faces.push_back({idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)});
      }
  }
  return mesh;
}

inline std::string to_off(const TriMesh& mesh) {
  std::string out = "OFF\n";
  out += std::to_string(mesh.vertices.size()) + " " +
         std::to_string(mesh.faces.size()) + " 0\n";
  char buf[128];
  for (const Point3& v : mesh.vertices) {
    std::snprintf(buf, sizeof(buf), "%.9f %.9f %.9f\n", v.x, v.y, v.z);
    out += buf;
  }
  for (const Face& f : mesh.faces) {
    std::snprintf(buf, sizeof(buf), "3 %u %u %u\n", f[0], f[1], f[2]);
    out += buf;
  }
  return out;
}

inline PointCloud random_cloud(pcmorph::Rng& rng, std::size_t n,
                               double lo = -1.0, double hi = 1.0) {
  PointCloud cloud;
  for (std::size_t i = 0; i < n; ++i)
    cloud.points.push_back(
        {rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)});
  return cloud;
}

// Coordinates on a dyadic grid (multiples of 2^-8): additions and
// subtractions of such values at small magnitudes are exact in doubles.
inline PointCloud random_dyadic_cloud(pcmorph::Rng& rng, std::size_t n) {
  PointCloud cloud;
  for (std::size_t i = 0; i < n; ++i) {
    auto coord = [&rng] {
      return static_cast<double>(static_cast<int>(rng.uniform_index(513)) -
                                 256) /
             256.0;
    };
    cloud.points.push_back({coord(), coord(), coord()});
  }
  return cloud;
}

struct ProcessResult {
  int exit_code = -1;
  std::string output;  // stdout + stderr
};

// Runs a command line through the shell, capturing combined output.
inline ProcessResult run_process(const std::string& command) {
  ProcessResult result;
  const std::string full = command + " 2>&1";
  FILE* pipe = popen(full.c_str(), "r");
  if (!pipe) return result;
  char buf[4096];
  std::size_t got;
  while ((got = fread(buf, 1, sizeof(buf), pipe)) > 0)
    result.output.append(buf, got);
  const int status = pclose(pipe);
  if (WIFEXITED(status)) result.exit_code = WEXITSTATUS(status);
  return result;
}

// Scratch directory under the system temp path, unique per tag, wiped on
// creation.
inline std::string fresh_dir(const std::string& tag) {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("pcmorph_test_" + tag);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace testsup

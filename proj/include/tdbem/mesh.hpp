#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "tdbem/error.hpp"

namespace tdbem {

using Point3 = Eigen::Vector3d;
using TriangleIndices = std::array<int, 3>;

/// Flat triangulated surface: an open screen or a closed polyhedron.
///
/// Vertices and connectivity are fixed at construction; the constructor
/// checks index bounds, non-degenerate areas and (for closed meshes) the
/// Euler characteristic.
class TriangleMesh {
 public:
  TriangleMesh(std::vector<Point3> vertices, std::vector<TriangleIndices> triangles, bool is_closed)
      : vertices_(std::move(vertices)), triangles_(std::move(triangles)), is_closed_(is_closed) {
    validate();
  }

  const std::vector<Point3>& vertices() const { return vertices_; }
  const std::vector<TriangleIndices>& triangles() const { return triangles_; }
  bool is_closed() const { return is_closed_; }
  int n_vertices() const { return static_cast<int>(vertices_.size()); }
  int n_triangles() const { return static_cast<int>(triangles_.size()); }

  std::array<Point3, 3> corners(int t) const {
    const auto& tri = triangles_[t];
    return {vertices_[tri[0]], vertices_[tri[1]], vertices_[tri[2]]};
  }

  double area(int t) const {
    auto c = corners(t);
    return 0.5 * (c[1] - c[0]).cross(c[2] - c[0]).norm();
  }

  double total_area() const {
    double sum = 0.0;
    for (int t = 0; t < n_triangles(); ++t) sum += area(t);
    return sum;
  }

  /// Longest edge of triangle t.
  double triangle_diameter(int t) const {
    auto c = corners(t);
    return std::max({(c[1] - c[0]).norm(), (c[2] - c[1]).norm(), (c[0] - c[2]).norm()});
  }

  int n_edges() const { return static_cast<int>(edge_counts().size()); }

  /// Undirected edges with the number of triangles using each.
  std::map<std::pair<int, int>, int> edge_counts() const {
    std::map<std::pair<int, int>, int> edges;
    for (const auto& tri : triangles_) {
      for (int e = 0; e < 3; ++e) {
        int a = tri[e], b = tri[(e + 1) % 3];
        ++edges[{std::min(a, b), std::max(a, b)}];
      }
    }
    return edges;
  }

  /// FNV-1a over coordinates and connectivity; identifies geometry for block reuse.
  std::string hash() const {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const void* data, std::size_t n) {
      const auto* bytes = static_cast<const unsigned char*>(data);
      for (std::size_t i = 0; i < n; ++i) {
        h ^= bytes[i];
        h *= 1099511628211ULL;
      }
    };
    for (const auto& v : vertices_) mix(v.data(), 3 * sizeof(double));
    for (const auto& t : triangles_) mix(t.data(), 3 * sizeof(int));
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }

 private:
  void validate() const {
    require(!vertices_.empty(), "mesh has no vertices");
    require(!triangles_.empty(), "mesh has no triangles");
    const int nv = n_vertices();
    double scale = 0.0;
    for (const auto& v : vertices_) scale = std::max(scale, v.cwiseAbs().maxCoeff());
    if (scale == 0.0) scale = 1.0;
    for (int t = 0; t < n_triangles(); ++t) {
      for (int idx : triangles_[t]) {
        require(idx >= 0 && idx < nv, "triangle " + std::to_string(t) + ": index out of range");
      }
      require(area(t) > 1e-14 * scale * scale,
              "triangle " + std::to_string(t) + " has zero area");
    }
    if (is_closed_) {
      const int euler = nv - n_edges() + n_triangles();
      require(euler == 2, "closed mesh has Euler characteristic " + std::to_string(euler));
    }
  }

  std::vector<Point3> vertices_;
  std::vector<TriangleIndices> triangles_;
  bool is_closed_;
};

struct MeshStats {
  double h = 0.0;                 // max triangle diameter
  double diam = 0.0;              // max vertex-vertex distance
  double quasi_uniformity = 1.0;  // max / min triangle diameter
};

inline MeshStats mesh_stats(const TriangleMesh& mesh) {
  MeshStats s;
  double hmin = std::numeric_limits<double>::infinity();
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    const double d = mesh.triangle_diameter(t);
    s.h = std::max(s.h, d);
    hmin = std::min(hmin, d);
  }
  const auto& v = mesh.vertices();
  for (std::size_t i = 0; i < v.size(); ++i)
    for (std::size_t j = i + 1; j < v.size(); ++j) s.diam = std::max(s.diam, (v[i] - v[j]).norm());
  s.quasi_uniformity = s.h / hmin;
  return s;
}

/// Structured n x n screen on [-1/2, 1/2]^2 in the plane z = 0. Every cell is
/// split along its lower-left to upper-right diagonal.
inline TriangleMesh make_square_screen(int n) {
  require(n >= 1, "square screen needs n >= 1");
  std::vector<Point3> vertices;
  vertices.reserve((n + 1) * (n + 1));
  for (int j = 0; j <= n; ++j)
    for (int i = 0; i <= n; ++i)
      vertices.emplace_back(-0.5 + static_cast<double>(i) / n, -0.5 + static_cast<double>(j) / n, 0.0);
  std::vector<TriangleIndices> triangles;
  triangles.reserve(2 * n * n);
  auto id = [n](int i, int j) { return j * (n + 1) + i; };
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      triangles.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      triangles.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  }
  return TriangleMesh(std::move(vertices), std::move(triangles), false);
}

/// Regular icosahedron centred at the origin with the given circumradius.
/// Faces are oriented with outward normals.
inline TriangleMesh make_icosahedron(double circumradius = 1.0) {
  require(circumradius > 0.0, "icosahedron radius must be positive");
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Point3> v;
  for (double s1 : {-1.0, 1.0}) {
    for (double s2 : {-1.0, 1.0}) {
      v.emplace_back(0.0, s1, s2 * phi);
      v.emplace_back(s1, s2 * phi, 0.0);
      v.emplace_back(s2 * phi, 0.0, s1);
    }
  }
  const double scale = circumradius / std::sqrt(1.0 + phi * phi);
  for (auto& p : v) p *= scale;
  const double edge = 2.0 * scale;
  auto is_edge = [&](int a, int b) { return std::abs((v[a] - v[b]).norm() - edge) < 1e-9 * edge; };
  std::vector<TriangleIndices> faces;
  const int nv = static_cast<int>(v.size());
  for (int a = 0; a < nv; ++a)
    for (int b = a + 1; b < nv; ++b)
      for (int c = b + 1; c < nv; ++c)
        if (is_edge(a, b) && is_edge(b, c) && is_edge(a, c)) {
          const Point3 normal = (v[b] - v[a]).cross(v[c] - v[a]);
          if (normal.dot(v[a] + v[b] + v[c]) > 0.0)
            faces.push_back({a, b, c});
          else
            faces.push_back({a, c, b});
        }
  return TriangleMesh(std::move(v), std::move(faces), true);
}

/// Red refinement: each triangle is split into four congruent children through
/// its edge midpoints. Children stay in the parent's plane.
inline TriangleMesh refine_uniform(const TriangleMesh& mesh) {
  std::vector<Point3> vertices = mesh.vertices();
  std::map<std::pair<int, int>, int> midpoint;
  auto mid = [&](int a, int b) {
    const std::pair<int, int> key{std::min(a, b), std::max(a, b)};
    auto it = midpoint.find(key);
    if (it != midpoint.end()) return it->second;
    vertices.push_back(0.5 * (vertices[a] + vertices[b]));
    const int id = static_cast<int>(vertices.size()) - 1;
    midpoint.emplace(key, id);
    return id;
  };
  std::vector<TriangleIndices> triangles;
  triangles.reserve(4 * mesh.triangles().size());
  for (const auto& t : mesh.triangles()) {
    const int ab = mid(t[0], t[1]), bc = mid(t[1], t[2]), ca = mid(t[2], t[0]);
    triangles.push_back({t[0], ab, ca});
    triangles.push_back({ab, t[1], bc});
    triangles.push_back({ca, bc, t[2]});
    triangles.push_back({ab, bc, ca});
  }
  return TriangleMesh(std::move(vertices), std::move(triangles), mesh.is_closed());
}

// ---------------------------------------------------------------------------
// ASCII OFF

inline void save_off(const TriangleMesh& mesh, const std::string& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), "cannot open '" + path + "' for writing");
  out << "OFF\n" << mesh.n_vertices() << ' ' << mesh.n_triangles() << ' ' << mesh.n_edges() << '\n';
  char buf[96];
  for (const auto& p : mesh.vertices()) {
    std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g\n", p.x(), p.y(), p.z());
    out << buf;
  }
  for (const auto& t : mesh.triangles()) out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
}

namespace detail {

class OffReader {
 public:
  explicit OffReader(std::istream& in) : in_(in) {}

  // Next non-empty, non-comment line; false at EOF.
  bool next(std::string& line) {
    while (std::getline(in_, line)) {
      ++line_no_;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      if (line.find_first_not_of(" \t\r") != std::string::npos) return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw ValidationError("OFF line " + std::to_string(line_no_) + ": " + what);
  }

  int line_no() const { return line_no_; }

 private:
  std::istream& in_;
  int line_no_ = 0;
};

}  // namespace detail

/// Reads an ASCII OFF triangle mesh. A mesh is flagged closed when every edge
/// is shared by exactly two triangles.
inline TriangleMesh read_off(std::istream& in) {
  detail::OffReader reader(in);
  std::string line;
  if (!reader.next(line)) reader.fail("empty file");
  std::istringstream header(line);
  std::string magic;
  header >> magic;
  if (magic != "OFF") reader.fail("malformed header, expected 'OFF'");
  long nv = -1, nf = -1, ne = 0;
  if (!(header >> nv)) {
    if (!reader.next(line)) reader.fail("missing counts line");
    std::istringstream counts(line);
    if (!(counts >> nv >> nf)) reader.fail("malformed counts line");
    counts >> ne;
  } else if (!(header >> nf)) {
    reader.fail("malformed counts line");
  }
  if (nv <= 0 || nf <= 0) reader.fail("vertex and face counts must be positive");

  std::vector<Point3> vertices;
  vertices.reserve(nv);
  for (long i = 0; i < nv; ++i) {
    if (!reader.next(line)) reader.fail("unexpected end of file in vertex list");
    std::istringstream ls(line);
    double x, y, z;
    if (!(ls >> x >> y >> z)) reader.fail("malformed vertex");
    vertices.emplace_back(x, y, z);
  }
  std::vector<TriangleIndices> triangles;
  triangles.reserve(nf);
  for (long i = 0; i < nf; ++i) {
    if (!reader.next(line)) reader.fail("unexpected end of file in face list");
    std::istringstream ls(line);
    int count;
    if (!(ls >> count)) reader.fail("malformed face");
    if (count != 3) reader.fail("non-triangle face");
    TriangleIndices tri;
    for (int& idx : tri) {
      if (!(ls >> idx)) reader.fail("malformed face");
      if (idx < 0 || idx >= nv) reader.fail("index out of range");
    }
    triangles.push_back(tri);
  }

  std::map<std::pair<int, int>, int> edges;
  for (const auto& tri : triangles)
    for (int e = 0; e < 3; ++e) {
      int a = tri[e], b = tri[(e + 1) % 3];
      ++edges[{std::min(a, b), std::max(a, b)}];
    }
  const bool closed = std::all_of(edges.begin(), edges.end(), [](const auto& kv) { return kv.second == 2; });
  return TriangleMesh(std::move(vertices), std::move(triangles), closed);
}

inline TriangleMesh load_off(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "cannot open '" + path + "'");
  return read_off(in);
}

}  // namespace tdbem

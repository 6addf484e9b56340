#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sfem/core.hpp"

namespace sfem {

// ---------------------------------------------------------------------------
// Lattice geometry of one macro element refined m times.
//
// Lattice points (i,j) with i,j >= 0 and i+j <= n, n = 2^m, sit at reference
// coordinates (i/n, j/n); physical position is A*(i/n, j/n) + b where A's
// columns are the macro edge vectors. Indexing is row-major in j.
// ---------------------------------------------------------------------------

inline constexpr int lattice_n(int m) { return 1 << m; }

inline constexpr std::int64_t lattice_point_count(int m) {
  const std::int64_t n = lattice_n(m);
  return (n + 1) * (n + 2) / 2;
}

inline constexpr std::int64_t lattice_interior_count(int m) {
  if (m < 2) return 0;
  const std::int64_t n = lattice_n(m);
  return (n - 1) * (n - 2) / 2;
}

// Row-major by j: rows j = 0..n, row j holds i = 0..n-j.
inline std::int64_t lattice_index(int m, int i, int j) {
  const std::int64_t n = lattice_n(m);
  return j * (n + 1) - std::int64_t(j) * (j - 1) / 2 + i;
}

inline bool lattice_valid(int m, int i, int j) {
  return i >= 0 && j >= 0 && i + j <= lattice_n(m);
}

inline bool lattice_interior(int m, int i, int j) {
  return i >= 1 && j >= 1 && i + j <= lattice_n(m) - 1;
}

enum class LatticePointClass { interior, edge, vertex };

// Location of a non-interior lattice point on the macro boundary.
// Local edges: 0 = (v0,v1) at j == 0, 1 = (v0,v2) at i == 0,
// 2 = (v1,v2) at i+j == n. Edge parameter s runs 0..n from the first listed
// vertex. Corners report the vertex index instead.
struct BoundaryLocation {
  bool is_vertex = false;
  int vertex = -1;  // local corner 0..2
  int edge = -1;    // local edge 0..2
  int s = -1;       // position along the edge, 1..n-1
};

inline LatticePointClass classify_lattice_point(int m, int i, int j) {
  const int n = lattice_n(m);
  if ((i == 0 && j == 0) || (i == n && j == 0) || (i == 0 && j == n))
    return LatticePointClass::vertex;
  if (j == 0 || i == 0 || i + j == n) return LatticePointClass::edge;
  return LatticePointClass::interior;
}

inline BoundaryLocation boundary_location(int m, int i, int j) {
  const int n = lattice_n(m);
  BoundaryLocation loc;
  if (i == 0 && j == 0) {
    loc.is_vertex = true;
    loc.vertex = 0;
  } else if (i == n && j == 0) {
    loc.is_vertex = true;
    loc.vertex = 1;
  } else if (i == 0 && j == n) {
    loc.is_vertex = true;
    loc.vertex = 2;
  } else if (j == 0) {
    loc.edge = 0;
    loc.s = i;
  } else if (i == 0) {
    loc.edge = 1;
    loc.s = j;
  } else if (i + j == n) {
    loc.edge = 2;
    loc.s = j;
  } else {
    throw Error("boundary_location: (" + std::to_string(i) + "," +
                std::to_string(j) + ") is interior");
  }
  return loc;
}

// Lattice point on local edge e at parameter s.
inline std::pair<int, int> edge_lattice_point(int m, int e, int s) {
  const int n = lattice_n(m);
  switch (e) {
    case 0: return {s, 0};
    case 1: return {0, s};
    case 2: return {n - s, s};
  }
  throw Error("edge_lattice_point: bad edge index");
}

// Local corner -> lattice point.
inline std::pair<int, int> corner_lattice_point(int m, int corner) {
  const int n = lattice_n(m);
  switch (corner) {
    case 0: return {0, 0};
    case 1: return {n, 0};
    case 2: return {0, n};
  }
  throw Error("corner_lattice_point: bad corner index");
}

// Compact enumeration of the 3n macro-boundary lattice points: bottom row
// left to right, then per row the left and right endpoints, apex last.
inline int boundary_point_count(int m) { return 3 * lattice_n(m); }

inline int boundary_position(int m, int i, int j) {
  const int n = lattice_n(m);
  if (j == 0) return i;
  if (j == n) return 3 * n - 1;
  return (n + 1) + 2 * (j - 1) + (i == 0 ? 0 : 1);
}

// Visit all boundary lattice points as (i, j, lattice index, position).
template <typename F>
void for_each_boundary_lattice_point(int m, F&& fn) {
  const int n = lattice_n(m);
  for (int i = 0; i <= n; ++i) fn(i, 0, lattice_index(m, i, 0), i);
  int pos = n + 1;
  for (int j = 1; j < n; ++j) {
    fn(0, j, lattice_index(m, 0, j), pos++);
    fn(n - j, j, lattice_index(m, n - j, j), pos++);
  }
  fn(0, n, lattice_index(m, 0, n), 3 * n - 1);
}

// ---------------------------------------------------------------------------
// Macro mesh
// ---------------------------------------------------------------------------

struct MacroTriangle {
  std::array<int, 3> v{};  // vertex ids, positively oriented
  Mat2 A;                  // columns: v1 - v0, v2 - v0
  Vec2 b;                  // v0
  double diameter = 0.0;   // longest edge
  double area = 0.0;

  // Per local edge: adjacent triangle (-1 on the domain boundary), that
  // triangle's local edge index, and whether both traverse the edge in the
  // same direction.
  std::array<int, 3> neighbor{-1, -1, -1};
  std::array<int, 3> neighbor_edge{-1, -1, -1};
  std::array<bool, 3> neighbor_same_dir{false, false, false};
  std::array<bool, 3> boundary_edge{false, false, false};

  Vec2 vertex_coord(int corner) const {
    if (corner == 0) return b;
    return b + A.col(corner - 1);
  }

  Vec2 lattice_coord(int m, int i, int j) const {
    const double n = double(lattice_n(m));
    return b + A * Vec2(i / n, j / n);
  }
};

// Vertex ids of local edge e, in traversal order.
inline std::pair<int, int> edge_vertices(const MacroTriangle& t, int e) {
  switch (e) {
    case 0: return {t.v[0], t.v[1]};
    case 1: return {t.v[0], t.v[2]};
    case 2: return {t.v[1], t.v[2]};
  }
  throw Error("edge_vertices: bad edge index");
}

struct MacroMesh {
  std::vector<Vec2> vertices;
  std::vector<MacroTriangle> tris;
  double mesh_size = 0.0;  // H: max triangle diameter
  std::vector<bool> boundary_vertex;
  std::vector<std::vector<int>> vertex_tris;  // incident triangles, ascending
  std::vector<int> orientation_fixed;         // triangles whose input was flipped
};

namespace detail {

inline double cross2(const Vec2& a, const Vec2& b) {
  return a.x() * b.y() - a.y() * b.x();
}

}  // namespace detail

// Validates and finishes a macro triangulation: orientation (fixing inverted
// input), degeneracy, aspect ratio (reject > 1e3), conformity (every shared
// edge matched exactly, no vertex hanging on another triangle's edge).
inline MacroMesh build_macro_mesh(std::vector<Vec2> vertices,
                                  std::vector<std::array<int, 3>> triangles) {
  if (vertices.size() < 3) throw MeshError("mesh needs at least 3 vertices");
  if (triangles.empty()) throw MeshError("mesh needs at least 1 triangle");

  MacroMesh mesh;
  mesh.vertices = std::move(vertices);

  Vec2 lo = mesh.vertices[0], hi = mesh.vertices[0];
  for (const auto& p : mesh.vertices) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double scale = std::max((hi - lo).norm(), 1e-300);

  for (std::size_t a = 0; a < mesh.vertices.size(); ++a)
    for (std::size_t b = a + 1; b < mesh.vertices.size(); ++b)
      if ((mesh.vertices[a] - mesh.vertices[b]).norm() < 1e-12 * scale)
        throw MeshError("duplicate vertices " + std::to_string(a) + " and " +
                        std::to_string(b));

  const int nv = int(mesh.vertices.size());
  mesh.tris.resize(triangles.size());
  for (std::size_t tid = 0; tid < triangles.size(); ++tid) {
    auto idx = triangles[tid];
    for (int k = 0; k < 3; ++k)
      if (idx[k] < 0 || idx[k] >= nv)
        throw MeshError("triangle " + std::to_string(tid) +
                        ": vertex index out of range");
    if (idx[0] == idx[1] || idx[0] == idx[2] || idx[1] == idx[2])
      throw MeshError("triangle " + std::to_string(tid) +
                      ": repeated vertex index");

    const Vec2 p0 = mesh.vertices[idx[0]];
    Vec2 p1 = mesh.vertices[idx[1]];
    Vec2 p2 = mesh.vertices[idx[2]];
    double det = detail::cross2(p1 - p0, p2 - p0);
    if (det < 0.0) {
      std::swap(idx[1], idx[2]);
      std::swap(p1, p2);
      det = -det;
      mesh.orientation_fixed.push_back(int(tid));
    }
    if (det <= 1e-14 * scale * scale)
      throw MeshError("triangle " + std::to_string(tid) + " is degenerate");

    MacroTriangle& t = mesh.tris[tid];
    t.v = idx;
    t.b = p0;
    t.A.col(0) = p1 - p0;
    t.A.col(1) = p2 - p0;
    t.area = 0.5 * det;
    const double e01 = (p1 - p0).norm();
    const double e02 = (p2 - p0).norm();
    const double e12 = (p2 - p1).norm();
    t.diameter = std::max({e01, e02, e12});
    const double perimeter = e01 + e02 + e12;
    const double inradius = 2.0 * t.area / perimeter;
    if (t.diameter / (2.0 * inradius) > 1e3)
      throw MeshError("triangle " + std::to_string(tid) +
                      ": aspect ratio exceeds 1e3");
    mesh.mesh_size = std::max(mesh.mesh_size, t.diameter);
  }

  // Edge matching: a shared edge must appear in exactly two triangles.
  std::map<std::pair<int, int>, std::vector<std::pair<int, int>>> edge_map;
  for (std::size_t tid = 0; tid < mesh.tris.size(); ++tid) {
    for (int e = 0; e < 3; ++e) {
      auto [a, b] = edge_vertices(mesh.tris[tid], e);
      auto key = std::minmax(a, b);
      edge_map[{key.first, key.second}].push_back({int(tid), e});
    }
  }
  mesh.boundary_vertex.assign(mesh.vertices.size(), false);
  for (const auto& [key, inc] : edge_map) {
    if (inc.size() > 2)
      throw MeshError("edge (" + std::to_string(key.first) + "," +
                      std::to_string(key.second) + ") shared by " +
                      std::to_string(inc.size()) + " triangles");
    if (inc.size() == 1) {
      auto [tid, e] = inc[0];
      mesh.tris[tid].boundary_edge[e] = true;
      mesh.boundary_vertex[key.first] = true;
      mesh.boundary_vertex[key.second] = true;
    } else {
      auto [t1, e1] = inc[0];
      auto [t2, e2] = inc[1];
      mesh.tris[t1].neighbor[e1] = t2;
      mesh.tris[t1].neighbor_edge[e1] = e2;
      mesh.tris[t2].neighbor[e2] = t1;
      mesh.tris[t2].neighbor_edge[e2] = e1;
      const bool same = edge_vertices(mesh.tris[t1], e1).first ==
                        edge_vertices(mesh.tris[t2], e2).first;
      mesh.tris[t1].neighbor_same_dir[e1] = same;
      mesh.tris[t2].neighbor_same_dir[e2] = same;
    }
  }

  // Hanging vertices: a vertex strictly inside another triangle's edge means
  // two triangles share only part of an edge.
  for (int v = 0; v < nv; ++v) {
    const Vec2 p = mesh.vertices[v];
    for (const auto& [key, inc] : edge_map) {
      (void)inc;
      if (key.first == v || key.second == v) continue;
      const Vec2 a = mesh.vertices[key.first];
      const Vec2 b = mesh.vertices[key.second];
      const Vec2 ab = b - a;
      const double len2 = ab.squaredNorm();
      const double s = (p - a).dot(ab) / len2;
      if (s <= 1e-12 || s >= 1.0 - 1e-12) continue;
      const double dist = std::abs(detail::cross2(ab, p - a)) / std::sqrt(len2);
      if (dist < 1e-12 * scale)
        throw MeshError("non-conforming mesh: vertex " + std::to_string(v) +
                        " lies inside edge (" + std::to_string(key.first) +
                        "," + std::to_string(key.second) + ")");
    }
  }

  mesh.vertex_tris.assign(mesh.vertices.size(), {});
  for (std::size_t tid = 0; tid < mesh.tris.size(); ++tid)
    for (int k = 0; k < 3; ++k)
      mesh.vertex_tris[mesh.tris[tid].v[k]].push_back(int(tid));

  return mesh;
}

// Plain-text mesh format: '#' comments, 'v <x> <y>' vertices in order,
// 't <i0> <i1> <i2>' triangles with 0-based vertex indices.
inline MacroMesh parse_mesh(std::istream& in, const std::string& origin) {
  std::vector<Vec2> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    const std::string where =
        origin + ":" + std::to_string(lineno);
    if (tag == "v") {
      double x, y;
      if (!(ls >> x >> y)) throw MeshError(where + ": expected 'v <x> <y>'");
      vertices.emplace_back(x, y);
    } else if (tag == "t") {
      std::array<int, 3> t{};
      if (!(ls >> t[0] >> t[1] >> t[2]))
        throw MeshError(where + ": expected 't <i0> <i1> <i2>'");
      triangles.push_back(t);
    } else {
      throw MeshError(where + ": unknown record '" + tag + "'");
    }
    std::string rest;
    if (ls >> rest)
      throw MeshError(where + ": trailing tokens after record");
  }
  return build_macro_mesh(std::move(vertices), std::move(triangles));
}

inline MacroMesh read_mesh_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MeshError("cannot open mesh file '" + path + "'");
  return parse_mesh(in, path);
}

// Uniform (red) refinement: every triangle split into four via edge midpoints.
inline MacroMesh refine_macro_mesh(const MacroMesh& mesh) {
  std::vector<Vec2> vertices = mesh.vertices;
  std::map<std::pair<int, int>, int> midpoint;
  auto mid = [&](int a, int b) {
    auto key = std::minmax(a, b);
    auto it = midpoint.find({key.first, key.second});
    if (it != midpoint.end()) return it->second;
    const int id = int(vertices.size());
    vertices.push_back(0.5 * (mesh.vertices[a] + mesh.vertices[b]));
    midpoint[{key.first, key.second}] = id;
    return id;
  };

  std::vector<std::array<int, 3>> triangles;
  triangles.reserve(4 * mesh.tris.size());
  for (const auto& t : mesh.tris) {
    const int m01 = mid(t.v[0], t.v[1]);
    const int m02 = mid(t.v[0], t.v[2]);
    const int m12 = mid(t.v[1], t.v[2]);
    triangles.push_back({t.v[0], m01, m02});
    triangles.push_back({m01, t.v[1], m12});
    triangles.push_back({m02, m12, t.v[2]});
    triangles.push_back({m01, m12, m02});
  }
  return build_macro_mesh(std::move(vertices), std::move(triangles));
}

inline MacroMesh refine_macro_mesh(MacroMesh mesh, int times) {
  for (int k = 0; k < times; ++k) mesh = refine_macro_mesh(mesh);
  return mesh;
}

// ---------------------------------------------------------------------------
// Built-in meshes (also shipped as files under meshes/)
// ---------------------------------------------------------------------------

// Unit square from two triangles (variant 2) or four triangles around the
// center vertex (variant 4).
inline MacroMesh make_unit_square_mesh(int variant = 4) {
  std::vector<Vec2> v{{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  std::vector<std::array<int, 3>> t;
  if (variant == 2) {
    t = {{0, 1, 3}, {2, 3, 1}};
  } else if (variant == 4) {
    v.emplace_back(0.5, 0.5);
    t = {{0, 1, 4}, {1, 2, 4}, {2, 3, 4}, {3, 0, 4}};
  } else {
    throw MeshError("make_unit_square_mesh: variant must be 2 or 4");
  }
  return build_macro_mesh(std::move(v), std::move(t));
}

// Regular polygon inscribed in the unit circle, fanned around a hub at the
// origin.
inline MacroMesh make_disk_mesh(int segments = 16) {
  if (segments < 3) throw MeshError("make_disk_mesh: need >= 3 segments");
  std::vector<Vec2> v{{0, 0}};
  constexpr double pi = 3.14159265358979323846;
  for (int k = 0; k < segments; ++k) {
    const double a = 2.0 * pi * k / segments;
    v.emplace_back(std::cos(a), std::sin(a));
  }
  std::vector<std::array<int, 3>> t;
  for (int k = 0; k < segments; ++k)
    t.push_back({0, 1 + k, 1 + (k + 1) % segments});
  return build_macro_mesh(std::move(v), std::move(t));
}

}  // namespace sfem

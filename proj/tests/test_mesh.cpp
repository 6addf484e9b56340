#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <sfem/mesh.hpp>

using namespace sfem;

TEST_CASE("lattice sizes and index layout") {
  for (int m = 0; m <= 6; ++m) {
    const int n = lattice_n(m);
    REQUIRE(n == (1 << m));
    REQUIRE(lattice_point_count(m) ==
            std::int64_t(n + 1) * (n + 2) / 2);
    // Brute-force enumeration in (j, i) order must match the closed form and
    // produce consecutive indices.
    std::int64_t count = 0, interior = 0;
    for (int j = 0; j <= n; ++j)
      for (int i = 0; i + j <= n; ++i) {
        REQUIRE(lattice_index(m, i, j) == count);
        ++count;
        if (i >= 1 && j >= 1 && i + j <= n - 1) ++interior;
      }
    REQUIRE(count == lattice_point_count(m));
    REQUIRE(interior == lattice_interior_count(m));
  }
}

TEST_CASE("interior and boundary classification") {
  const int m = 3, n = lattice_n(m);
  for (int j = 0; j <= n; ++j)
    for (int i = 0; i + j <= n; ++i) {
      const bool interior = i >= 1 && j >= 1 && i + j <= n - 1;
      REQUIRE(lattice_interior(m, i, j) == interior);
    }
  REQUIRE_FALSE(lattice_interior(m, -1, 1));
  REQUIRE_FALSE(lattice_interior(m, n + 1, 0));
}

TEST_CASE("boundary positions enumerate every non-interior point once") {
  for (int m = 1; m <= 5; ++m) {
    const int n = lattice_n(m);
    REQUIRE(boundary_point_count(m) == 3 * n);
    std::set<std::int64_t> seen_pos;
    std::set<std::int64_t> seen_idx;
    for_each_boundary_lattice_point(m, [&](int i, int j, std::int64_t idx,
                                           std::int64_t pos) {
      REQUIRE(lattice_valid(m, i, j));
      REQUIRE_FALSE(lattice_interior(m, i, j));
      REQUIRE(idx == lattice_index(m, i, j));
      REQUIRE(pos == boundary_position(m, i, j));
      REQUIRE(pos >= 0);
      REQUIRE(pos < boundary_point_count(m));
      REQUIRE(seen_pos.insert(pos).second);
      REQUIRE(seen_idx.insert(idx).second);
    });
    REQUIRE(std::int64_t(seen_pos.size()) == 3 * n);
    // Every non-interior lattice point was covered.
    std::int64_t boundary = 0;
    for (int j = 0; j <= n; ++j)
      for (int i = 0; i + j <= n; ++i)
        if (!lattice_interior(m, i, j)) ++boundary;
    REQUIRE(boundary == std::int64_t(seen_idx.size()));
  }
}

TEST_CASE("macro edge parameterization") {
  const int m = 3, n = lattice_n(m);
  for (int e = 0; e < 3; ++e)
    for (int s = 0; s <= n; ++s) {
      const auto [i, j] = edge_lattice_point(m, e, s);
      REQUIRE(lattice_valid(m, i, j));
      const auto loc = boundary_location(m, i, j);
      if (s > 0 && s < n) {
        REQUIRE(loc.edge == e);
        REQUIRE(loc.s == s);
      }
    }
  REQUIRE(corner_lattice_point(m, 0) == std::pair<int, int>(0, 0));
  REQUIRE(corner_lattice_point(m, 1) == std::pair<int, int>(n, 0));
  REQUIRE(corner_lattice_point(m, 2) == std::pair<int, int>(0, n));
}

TEST_CASE("built-in meshes are conforming with correct areas") {
  const MacroMesh sq2 = make_unit_square_mesh(2);
  const MacroMesh sq4 = make_unit_square_mesh(4);
  const MacroMesh disk = make_disk_mesh(16);
  REQUIRE(sq2.tris.size() == 2);
  REQUIRE(sq4.tris.size() == 4);
  REQUIRE(disk.tris.size() == 16);

  auto total_area = [](const MacroMesh& mesh) {
    double a = 0.0;
    for (const auto& t : mesh.tris) a += t.area;
    return a;
  };
  REQUIRE(total_area(sq2) == Catch::Approx(1.0).epsilon(1e-14));
  REQUIRE(total_area(sq4) == Catch::Approx(1.0).epsilon(1e-14));
  REQUIRE(total_area(disk) ==
          Catch::Approx(8.0 * std::sin(2.0 * 3.14159265358979323846 / 16))
              .epsilon(1e-13));

  REQUIRE_THROWS_AS(make_unit_square_mesh(3), MeshError);
  REQUIRE_THROWS_AS(make_disk_mesh(2), MeshError);
}

TEST_CASE("neighbor tables are symmetric and boundary edges marked") {
  for (const MacroMesh& mesh :
       {make_unit_square_mesh(2), make_unit_square_mesh(4),
        make_disk_mesh(16)}) {
    int boundary_edges = 0;
    for (std::size_t t = 0; t < mesh.tris.size(); ++t) {
      const MacroTriangle& tri = mesh.tris[t];
      for (int e = 0; e < 3; ++e) {
        if (tri.neighbor[e] < 0) {
          REQUIRE(tri.boundary_edge[e]);
          ++boundary_edges;
          continue;
        }
        REQUIRE_FALSE(tri.boundary_edge[e]);
        const MacroTriangle& nb = mesh.tris[tri.neighbor[e]];
        const int back = tri.neighbor_edge[e];
        REQUIRE(nb.neighbor[back] == int(t));
        REQUIRE(nb.neighbor_edge[back] == e);
        REQUIRE(nb.neighbor_same_dir[back] == tri.neighbor_same_dir[e]);
      }
    }
    REQUIRE(boundary_edges > 0);
    // Incident-triangle lists are ascending and complete.
    std::size_t refs = 0;
    for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
      const auto& inc = mesh.vertex_tris[v];
      REQUIRE(std::is_sorted(inc.begin(), inc.end()));
      refs += inc.size();
      for (int t : inc) {
        const auto& tv = mesh.tris[t].v;
        REQUIRE((tv[0] == int(v) || tv[1] == int(v) || tv[2] == int(v)));
      }
    }
    REQUIRE(refs == 3 * mesh.tris.size());
  }
}

TEST_CASE("macro coordinates interpolate the vertices") {
  const MacroMesh mesh = make_unit_square_mesh(4);
  const int m = 3, n = lattice_n(m);
  for (const auto& tri : mesh.tris) {
    REQUIRE((tri.vertex_coord(0) - tri.lattice_coord(m, 0, 0)).norm() < 1e-15);
    REQUIRE((tri.vertex_coord(1) - tri.lattice_coord(m, n, 0)).norm() < 1e-15);
    REQUIRE((tri.vertex_coord(2) - tri.lattice_coord(m, 0, n)).norm() < 1e-15);
    const Vec2 mid = tri.lattice_coord(m, n / 2, n / 2);
    REQUIRE((mid - 0.5 * (tri.vertex_coord(1) + tri.vertex_coord(2))).norm() <
            1e-14);
  }
}

TEST_CASE("clockwise input triangles are reoriented and recorded") {
  const MacroMesh mesh =
      build_macro_mesh({{0, 0}, {1, 0}, {0, 1}}, {{{0, 2, 1}}});
  REQUIRE(mesh.orientation_fixed == std::vector<int>{0});
  REQUIRE(mesh.tris[0].area > 0.0);
  REQUIRE(mesh.tris[0].v == std::array<int, 3>{0, 1, 2});
}

TEST_CASE("mesh validation rejects malformed input") {
  // Vertex index out of range.
  REQUIRE_THROWS_AS(
      build_macro_mesh({{0, 0}, {1, 0}, {0, 1}}, {{{0, 1, 3}}}),
      MeshError);
  // Hanging vertex: the second triangle's corner sits inside an edge.
  REQUIRE_THROWS_AS(
      build_macro_mesh(
          {{0, 0}, {1, 0}, {0, 1}, {0.5, 0.0}, {0.5, -1.0}},
          {{{0, 1, 2}, {0, 4, 3}}}),
      MeshError);
}

TEST_CASE("mesh file parsing") {
  {
    std::istringstream in("# comment\nv 0 0\nv 1 0\nv 0 1\nt 0 1 2\n");
    const MacroMesh mesh = parse_mesh(in, "inline");
    REQUIRE(mesh.tris.size() == 1);
    REQUIRE(mesh.vertices.size() == 3);
  }
  {
    std::istringstream in("x 1 2\n");
    REQUIRE_THROWS_AS(parse_mesh(in, "inline"), MeshError);
  }
  {
    std::istringstream in("v 0\n");
    REQUIRE_THROWS_AS(parse_mesh(in, "inline"), MeshError);
  }
  {
    std::istringstream in("v 0 0 junk\n");
    REQUIRE_THROWS_AS(parse_mesh(in, "inline"), MeshError);
  }
  REQUIRE_THROWS_AS(read_mesh_file("/nonexistent/mesh.file"), MeshError);
}

TEST_CASE("shipped mesh files match the built-in generators") {
  const std::string root = SFEM_SOURCE_DIR;
  const struct {
    const char* file;
    MacroMesh built;
  } cases[] = {
      {"/meshes/unit_square_2.mesh", make_unit_square_mesh(2)},
      {"/meshes/unit_square_4.mesh", make_unit_square_mesh(4)},
      {"/meshes/disk_16.mesh", make_disk_mesh(16)},
  };
  for (const auto& c : cases) {
    const MacroMesh loaded = read_mesh_file(root + c.file);
    REQUIRE(loaded.tris.size() == c.built.tris.size());
    REQUIRE(loaded.vertices.size() == c.built.vertices.size());
    for (std::size_t v = 0; v < loaded.vertices.size(); ++v)
      REQUIRE((loaded.vertices[v] - c.built.vertices[v]).norm() < 1e-12);
    for (std::size_t t = 0; t < loaded.tris.size(); ++t)
      REQUIRE(loaded.tris[t].v == c.built.tris[t].v);
  }
}

TEST_CASE("uniform refinement quarters triangles and halves the mesh size") {
  const MacroMesh base = make_unit_square_mesh(4);
  const MacroMesh fine = refine_macro_mesh(base);
  REQUIRE(fine.tris.size() == 4 * base.tris.size());
  // V + E new vertices: 5 old + 8 interior-edge midpoints... count via Euler
  // instead: every edge contributes one midpoint exactly once.
  std::set<std::pair<int, int>> edges;
  for (const auto& t : base.tris)
    for (int e = 0; e < 3; ++e) {
      const int a = t.v[e], b = t.v[(e + 1) % 3];
      edges.insert({std::min(a, b), std::max(a, b)});
    }
  REQUIRE(fine.vertices.size() == base.vertices.size() + edges.size());
  REQUIRE(fine.mesh_size == Catch::Approx(0.5 * base.mesh_size));

  const MacroMesh fine2 = refine_macro_mesh(base, 2);
  REQUIRE(fine2.tris.size() == 16 * base.tris.size());
  double area = 0.0;
  for (const auto& t : fine2.tris) area += t.area;
  REQUIRE(area == Catch::Approx(1.0).epsilon(1e-13));
}

#pragma once

#include <memory>
#include <vector>

#include "sfem/mesh.hpp"

namespace sfem {

// Per-level bookkeeping for one (mesh, m) pair. Every macro element stores the
// full lattice including its boundary, so points on shared macro edges and
// vertices exist once per incident macro ("aliases"). The lowest incident
// triangle id owns a shared point; global ids enumerate owners in (triangle,
// row-major lattice) order.
struct LevelContext {
  std::shared_ptr<const MacroMesh> mesh;
  int m = 0;
  std::int64_t points_per_macro = 0;
  std::int64_t n_global = 0;
  std::int64_t n_free = 0;  // global dofs not on the domain boundary

  struct Alias {
    std::int32_t tri;
    std::int32_t idx;
  };

  std::vector<std::vector<std::int32_t>> global_id;  // [tri][lattice idx]
  std::vector<std::vector<std::uint8_t>> owned;
  std::vector<std::vector<std::uint8_t>> dirichlet;  // domain-boundary points
  // Alias classes of multiply-held points, owner first, members ascending.
  std::vector<std::vector<Alias>> classes;
  // Owned macro-boundary lattice indices per triangle (interior is always
  // owned and iterated separately).
  std::vector<std::vector<std::int32_t>> owned_boundary;

  int n() const { return lattice_n(m); }
};

using LevelPtr = std::shared_ptr<const LevelContext>;

inline LevelPtr build_level(std::shared_ptr<const MacroMesh> mesh, int m) {
  if (m < 0 || m > 30) throw Error("build_level: level out of range");
  auto ctx = std::make_shared<LevelContext>();
  ctx->mesh = mesh;
  ctx->m = m;
  const int n = lattice_n(m);
  const std::int64_t np = lattice_point_count(m);
  ctx->points_per_macro = np;
  const int ntri = int(mesh->tris.size());

  ctx->global_id.assign(ntri, std::vector<std::int32_t>(np, -1));
  ctx->owned.assign(ntri, std::vector<std::uint8_t>(np, 0));
  ctx->dirichlet.assign(ntri, std::vector<std::uint8_t>(np, 0));
  ctx->owned_boundary.assign(ntri, {});

  double coord_scale = mesh->mesh_size;
  for (const auto& p : mesh->vertices)
    coord_scale = std::max(coord_scale, p.cwiseAbs().maxCoeff());
  const double alias_tol = 1e-14 * coord_scale;

  std::int32_t next_id = 0;
  for (int t = 0; t < ntri; ++t) {
    const MacroTriangle& tri = mesh->tris[t];
    for (int j = 0; j <= n; ++j) {
      for (int i = 0; i <= n - j; ++i) {
        const std::int64_t idx = lattice_index(m, i, j);
        const auto cls = classify_lattice_point(m, i, j);
        if (cls == LatticePointClass::interior) {
          ctx->global_id[t][idx] = next_id++;
          ctx->owned[t][idx] = 1;
          continue;
        }
        if (cls == LatticePointClass::vertex) {
          const auto loc = boundary_location(m, i, j);
          const int v = tri.v[loc.vertex];
          ctx->dirichlet[t][idx] = mesh->boundary_vertex[v] ? 1 : 0;
          const int owner_tri = mesh->vertex_tris[v].front();
          if (owner_tri == t) {
            ctx->global_id[t][idx] = next_id++;
            ctx->owned[t][idx] = 1;
            ctx->owned_boundary[t].push_back(std::int32_t(idx));
          } else {
            const MacroTriangle& ot = mesh->tris[owner_tri];
            int oc = -1;
            for (int k = 0; k < 3; ++k)
              if (ot.v[k] == v) oc = k;
            const auto [oi, oj] = corner_lattice_point(m, oc);
            ctx->global_id[t][idx] =
                ctx->global_id[owner_tri][lattice_index(m, oi, oj)];
          }
          continue;
        }
        // Macro-edge point.
        const auto loc = boundary_location(m, i, j);
        const int e = loc.edge;
        if (tri.boundary_edge[e]) {
          ctx->dirichlet[t][idx] = 1;
          ctx->global_id[t][idx] = next_id++;
          ctx->owned[t][idx] = 1;
          ctx->owned_boundary[t].push_back(std::int32_t(idx));
          continue;
        }
        const int nb = tri.neighbor[e];
        if (nb > t || nb < 0) {
          ctx->global_id[t][idx] = next_id++;
          ctx->owned[t][idx] = 1;
          ctx->owned_boundary[t].push_back(std::int32_t(idx));
        } else {
          const int ne = tri.neighbor_edge[e];
          const int s2 = tri.neighbor_same_dir[e] ? loc.s : n - loc.s;
          const auto [ni, nj] = edge_lattice_point(m, ne, s2);
          const std::int64_t nidx = lattice_index(m, ni, nj);
          ctx->global_id[t][idx] = ctx->global_id[nb][nidx];
          const Vec2 mine = tri.lattice_coord(m, i, j);
          const Vec2 theirs = mesh->tris[nb].lattice_coord(m, ni, nj);
          if ((mine - theirs).norm() > alias_tol)
            throw MeshError(
                "interface mismatch: aliased lattice points disagree in "
                "coordinates (triangles " +
                std::to_string(t) + " and " + std::to_string(nb) + ")");
        }
      }
    }
  }
  ctx->n_global = next_id;

  // Alias classes: interface-edge interiors (two members) and shared mesh
  // vertices (one member per incident macro).
  for (int t = 0; t < ntri; ++t) {
    const MacroTriangle& tri = mesh->tris[t];
    for (int e = 0; e < 3; ++e) {
      const int nb = tri.neighbor[e];
      if (nb < 0 || nb < t) continue;
      const int ne = tri.neighbor_edge[e];
      for (int s = 1; s < n; ++s) {
        const auto [i1, j1] = edge_lattice_point(m, e, s);
        const int s2 = tri.neighbor_same_dir[e] ? s : n - s;
        const auto [i2, j2] = edge_lattice_point(m, ne, s2);
        ctx->classes.push_back(
            {{std::int32_t(t), std::int32_t(lattice_index(m, i1, j1))},
             {std::int32_t(nb), std::int32_t(lattice_index(m, i2, j2))}});
      }
    }
  }
  for (std::size_t v = 0; v < mesh->vertices.size(); ++v) {
    const auto& inc = mesh->vertex_tris[v];
    if (inc.size() < 2) continue;
    std::vector<LevelContext::Alias> cls;
    for (int t : inc) {
      const MacroTriangle& tri = mesh->tris[t];
      for (int k = 0; k < 3; ++k) {
        if (tri.v[k] != int(v)) continue;
        const auto [i, j] = corner_lattice_point(m, k);
        cls.push_back({std::int32_t(t), std::int32_t(lattice_index(m, i, j))});
      }
    }
    ctx->classes.push_back(std::move(cls));
  }

  std::int64_t n_dirichlet = 0;
  for (int t = 0; t < ntri; ++t)
    for (std::int64_t k = 0; k < np; ++k)
      if (ctx->owned[t][k] && ctx->dirichlet[t][k]) ++n_dirichlet;
  ctx->n_free = ctx->n_global - n_dirichlet;
  return ctx;
}

}  // namespace sfem

#pragma once

#include <cmath>
#include <functional>

#include "sfem/level.hpp"

namespace sfem {

// Nodal P1 function stored per macro element over the full lattice. Shared
// interface points are duplicated; consistent states hold identical values in
// every alias (enforce with broadcast_interfaces after per-macro writes).
class GridFunction {
public:
  GridFunction() = default;
  explicit GridFunction(LevelPtr ctx)
      : ctx_(std::move(ctx)),
        data_(ctx_->global_id.size(),
              std::vector<double>(ctx_->points_per_macro, 0.0)) {}

  const LevelPtr& ctx() const { return ctx_; }
  int level() const { return ctx_->m; }
  std::size_t macros() const { return data_.size(); }

  std::vector<double>& data(int tri) { return data_[tri]; }
  const std::vector<double>& data(int tri) const { return data_[tri]; }

  double& at(int tri, std::int64_t idx) { return data_[tri][idx]; }
  double at(int tri, std::int64_t idx) const { return data_[tri][idx]; }

  void set_zero() {
    for (auto& d : data_) std::fill(d.begin(), d.end(), 0.0);
  }

  void fill(double v) {
    for (auto& d : data_) std::fill(d.begin(), d.end(), v);
  }

  // Nodal interpolation; aliases are made bit-identical afterwards.
  void set_nodal(const std::function<double(const Vec2&)>& f);

private:
  LevelPtr ctx_;
  std::vector<std::vector<double>> data_;
};

// Sum every alias class and write the sum back to all members (turns
// per-macro partial results into consistent global values).
inline void reduce_interfaces_add(GridFunction& g) {
  const LevelContext& ctx = *g.ctx();
  for (const auto& cls : ctx.classes) {
    double s = 0.0;
    for (const auto& a : cls) s += g.at(a.tri, a.idx);
    for (const auto& a : cls) g.at(a.tri, a.idx) = s;
  }
}

// Copy the owner's value to all other aliases.
inline void broadcast_interfaces(GridFunction& g) {
  const LevelContext& ctx = *g.ctx();
  for (const auto& cls : ctx.classes) {
    const double v = g.at(cls.front().tri, cls.front().idx);
    for (std::size_t k = 1; k < cls.size(); ++k)
      g.at(cls[k].tri, cls[k].idx) = v;
  }
}

inline void GridFunction::set_nodal(
    const std::function<double(const Vec2&)>& f) {
  const LevelContext& ctx = *ctx_;
  const int n = ctx.n();
  for (std::size_t t = 0; t < data_.size(); ++t) {
    const MacroTriangle& tri = ctx.mesh->tris[t];
    std::int64_t idx = 0;
    for (int j = 0; j <= n; ++j)
      for (int i = 0; i <= n - j; ++i, ++idx)
        data_[t][idx] = f(tri.lattice_coord(ctx.m, i, j));
  }
  broadcast_interfaces(*this);
}

inline void copy(const GridFunction& x, GridFunction& y) {
  for (std::size_t t = 0; t < x.macros(); ++t) y.data(int(t)) = x.data(int(t));
}

inline void axpy(double a, const GridFunction& x, GridFunction& y) {
  for (std::size_t t = 0; t < x.macros(); ++t) {
    const auto& xd = x.data(int(t));
    auto& yd = y.data(int(t));
    for (std::size_t k = 0; k < xd.size(); ++k) yd[k] += a * xd[k];
  }
}

inline void scale(GridFunction& x, double a) {
  for (std::size_t t = 0; t < x.macros(); ++t)
    for (auto& v : x.data(int(t))) v *= a;
}

// Euclidean inner product over global dofs: every alias class counted once.
// Accumulation order is fixed (macro ascending, interior rows then owned
// boundary points), so results are reproducible.
inline double dot(const GridFunction& a, const GridFunction& b) {
  const LevelContext& ctx = *a.ctx();
  const int n = ctx.n();
  double total = 0.0;
  for (std::size_t t = 0; t < a.macros(); ++t) {
    const auto& ad = a.data(int(t));
    const auto& bd = b.data(int(t));
    double acc = 0.0;
    for (int j = 1; j <= n - 2; ++j) {
      const std::int64_t row = lattice_index(ctx.m, 0, j);
      for (int i = 1; i <= n - j - 1; ++i) acc += ad[row + i] * bd[row + i];
    }
    for (std::int32_t idx : ctx.owned_boundary[t]) acc += ad[idx] * bd[idx];
    total += acc;
  }
  return total;
}

inline double norm2(const GridFunction& a) { return std::sqrt(dot(a, a)); }

inline double max_abs(const GridFunction& a) {
  const LevelContext& ctx = *a.ctx();
  const int n = ctx.n();
  double mx = 0.0;
  for (std::size_t t = 0; t < a.macros(); ++t) {
    const auto& ad = a.data(int(t));
    for (int j = 1; j <= n - 2; ++j) {
      const std::int64_t row = lattice_index(ctx.m, 0, j);
      for (int i = 1; i <= n - j - 1; ++i)
        mx = std::max(mx, std::abs(ad[row + i]));
    }
    for (std::int32_t idx : ctx.owned_boundary[t])
      mx = std::max(mx, std::abs(ad[idx]));
  }
  return mx;
}

// Zero all domain-boundary (Dirichlet) points.
inline void zero_dirichlet(GridFunction& g) {
  const LevelContext& ctx = *g.ctx();
  for (std::size_t t = 0; t < g.macros(); ++t) {
    const auto& mask = ctx.dirichlet[t];
    auto& d = g.data(int(t));
    for (std::size_t k = 0; k < d.size(); ++k)
      if (mask[k]) d[k] = 0.0;
  }
}

// Set domain-boundary points from g(x); all other points untouched.
inline void set_dirichlet(GridFunction& u,
                          const std::function<double(const Vec2&)>& g) {
  const LevelContext& ctx = *u.ctx();
  const int n = ctx.n();
  for (std::size_t t = 0; t < u.macros(); ++t) {
    const MacroTriangle& tri = ctx.mesh->tris[t];
    const auto& mask = ctx.dirichlet[t];
    auto& d = u.data(int(t));
    std::int64_t idx = 0;
    for (int j = 0; j <= n; ++j)
      for (int i = 0; i <= n - j; ++i, ++idx)
        if (mask[idx]) d[idx] = g(tri.lattice_coord(ctx.m, i, j));
  }
  broadcast_interfaces(u);
}

}  // namespace sfem

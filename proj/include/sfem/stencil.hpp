#pragma once

#include <Eigen/Dense>

#include "sfem/coefficients.hpp"
#include "sfem/quadrature.hpp"

namespace sfem {

using Mat3 = Eigen::Matrix3d;

// ---------------------------------------------------------------------------
// Standalone P1 element matrices on an arbitrary triangle.
// entry(a,b) = sum_q w_q grad(phi_a)^T K(x_q) grad(phi_b) * 2|t|  (stiffness)
// entry(a,b) = sum_q w_q phi_a(x_q) phi_b(x_q) * 2|t|             (mass)
// Upper triangle computed, mirrored; element matrices are exactly symmetric.
// ---------------------------------------------------------------------------

inline Mat3 local_stiffness(const Vec2& v0, const Vec2& v1, const Vec2& v2,
                            const CoefficientField& K,
                            const TriangleQuadrature& rule) {
  if (K.kind == CoeffKind::cellwise)
    throw Error("local_stiffness: analytic coefficient required");
  Mat2 J;
  J.col(0) = v1 - v0;
  J.col(1) = v2 - v0;
  const double det = J(0, 0) * J(1, 1) - J(0, 1) * J(1, 0);
  if (det <= 0.0) throw Error("local_stiffness: degenerate or inverted triangle");
  const Mat2 Jit = J.inverse().transpose();
  const std::array<Vec2, 3> grad = {Jit * Vec2(-1, -1), Jit * Vec2(1, 0),
                                    Jit * Vec2(0, 1)};
  Mat3 M = Mat3::Zero();
  if (K.kind == CoeffKind::scalar) {
    double kw = 0.0;
    for (std::size_t q = 0; q < rule.points.size(); ++q)
      kw += rule.weights[q] * K.scalar(v0 + J * rule.points[q]);
    for (int a = 0; a < 3; ++a)
      for (int b = a; b < 3; ++b)
        M(a, b) = M(b, a) = kw * grad[a].dot(grad[b]) * det;
  } else {
    Mat2 Kw = Mat2::Zero();
    for (std::size_t q = 0; q < rule.points.size(); ++q)
      Kw += rule.weights[q] * K.tensor(v0 + J * rule.points[q]);
    for (int a = 0; a < 3; ++a)
      for (int b = a; b < 3; ++b)
        M(a, b) = M(b, a) = grad[a].dot(Kw * grad[b]) * det;
  }
  return M;
}

inline Mat3 local_mass(const Vec2& v0, const Vec2& v1, const Vec2& v2,
                       const TriangleQuadrature& rule) {
  Mat2 J;
  J.col(0) = v1 - v0;
  J.col(1) = v2 - v0;
  const double det = J(0, 0) * J(1, 1) - J(0, 1) * J(1, 0);
  if (det <= 0.0) throw Error("local_mass: degenerate or inverted triangle");
  Mat3 M = Mat3::Zero();
  for (std::size_t q = 0; q < rule.points.size(); ++q) {
    const double x = rule.points[q].x(), y = rule.points[q].y();
    const double phi[3] = {1.0 - x - y, x, y};
    const double w = rule.weights[q] * det;
    for (int a = 0; a < 3; ++a)
      for (int b = a; b < 3; ++b) M(a, b) += w * phi[a] * phi[b];
  }
  for (int a = 0; a < 3; ++a)
    for (int b = a + 1; b < 3; ++b) M(b, a) = M(a, b);
  return M;
}

// ---------------------------------------------------------------------------
// PatchAssembler: stencil rows and element matrices on the level-m lattice of
// one macro element. Fine triangles come in two congruence classes,
//   lower (a,b): [(a,b),(a+1,b),(a,b+1)]     for a+b <= n-1,
//   upper (a,b): [(a+1,b),(a+1,b+1),(a,b+1)] for a+b <= n-2,
// so gradients, measures and mass matrices are precomputed per class and only
// the coefficient is evaluated per element.
// ---------------------------------------------------------------------------

class PatchAssembler {
public:
  PatchAssembler(const MacroTriangle& tri, int macro_id, int m,
                 const TriangleQuadrature& rule)
      : tri_(&tri), macro_(macro_id), m_(m), n_(lattice_n(m)), rule_(&rule) {
    e1_ = tri.A.col(0) / double(n_);
    e2_ = tri.A.col(1) / double(n_);
    init_shape(shape_[0], e1_, e2_, Vec2::Zero());            // lower
    init_shape(shape_[1], e2_, e2_ - e1_, e1_);               // upper
    for (int f = 0; f < 6; ++f)
      fan_off_[f] = kFan[f].di * e1_ + kFan[f].dj * e2_;
  }

  int level() const { return m_; }
  int macro_id() const { return macro_; }
  const MacroTriangle& tri() const { return *tri_; }
  const TriangleQuadrature& rule() const { return *rule_; }

  // Full 7-direction row of the form at lattice point (i,j). The hexagonal
  // patch is traversed in the fixed fan order E-N, N-NW, NW-W, W-S, S-SE,
  // SE-E; requires an interior point so the patch lies inside the macro.
  void row(Form form, const CoefficientField& field, int i, int j,
           StencilRow& out) const {
    if (!lattice_interior(m_, i, j))
      throw Error("stencil row requested at non-interior lattice point (" +
                  std::to_string(i) + "," + std::to_string(j) + ")");
    out.w.fill(0.0);
    if (form == Form::mass) {
      for (int f = 0; f < 6; ++f) {
        const Fan& fan = kFan[f];
        const ShapeData& sh = shape_[fan.upper];
        for (int a = 0; a < 3; ++a)
          out.w[fan.dir[a]] += sh.mass[3 * fan.lp + a];
      }
      return;
    }
    switch (field.kind) {
      case CoeffKind::scalar: {
        const Vec2 base = tri_->b + double(i) * e1_ + double(j) * e2_;
        for (int f = 0; f < 6; ++f) {
          const Fan& fan = kFan[f];
          const ShapeData& sh = shape_[fan.upper];
          const Vec2 anchor = base + fan_off_[f];
          double kw = 0.0;
          for (std::size_t q = 0; q < sh.qoff.size(); ++q)
            kw += rule_->weights[q] * field.scalar(anchor + sh.qoff[q]);
          for (int a = 0; a < 3; ++a)
            out.w[fan.dir[a]] += kw * sh.s[3 * fan.lp + a];
        }
        break;
      }
      case CoeffKind::tensor: {
        const Vec2 base = tri_->b + double(i) * e1_ + double(j) * e2_;
        for (int f = 0; f < 6; ++f) {
          const Fan& fan = kFan[f];
          const ShapeData& sh = shape_[fan.upper];
          const Vec2 anchor = base + fan_off_[f];
          Mat2 Kw = Mat2::Zero();
          for (std::size_t q = 0; q < sh.qoff.size(); ++q)
            Kw += rule_->weights[q] * field.tensor(anchor + sh.qoff[q]);
          for (int a = 0; a < 3; ++a) {
            const Mat2& G = sh.G[3 * fan.lp + a];
            out.w[fan.dir[a]] += (Kw.array() * G.array()).sum();
          }
        }
        break;
      }
      case CoeffKind::cellwise: {
        const ElementwiseCoefficient& cells = *field.cells;
        for (int f = 0; f < 6; ++f) {
          const Fan& fan = kFan[f];
          const ShapeData& sh = shape_[fan.upper];
          const int a0 = i + kFan[f].di, b0 = j + kFan[f].dj;
          // s carries det = 2|t|; the analytic branches pick the missing 1/2
          // up from the quadrature weights, here it is explicit.
          const double w =
              0.5 * (fan.upper
                         ? cells.upper[macro_][upper_tri_index(m_, a0, b0)]
                         : cells.lower[macro_][lower_tri_index(m_, a0, b0)]);
          for (int a = 0; a < 3; ++a)
            out.w[fan.dir[a]] += w * sh.s[3 * fan.lp + a];
        }
        break;
      }
    }
  }

  // 3x3 element matrix of one fine triangle (exactly symmetric). Vertex order
  // matches the class definition above.
  void element_matrix(Form form, const CoefficientField& field, bool upper,
                      int a, int b, Mat3& M) const {
    const ShapeData& sh = shape_[upper ? 1 : 0];
    if (form == Form::mass) {
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) M(r, c) = sh.mass[3 * r + c];
      return;
    }
    double kw = 0.0;
    Mat2 Kw = Mat2::Zero();
    switch (field.kind) {
      case CoeffKind::scalar: {
        const Vec2 anchor = tri_->b + double(a) * e1_ + double(b) * e2_;
        for (std::size_t q = 0; q < sh.qoff.size(); ++q)
          kw += rule_->weights[q] * field.scalar(anchor + sh.qoff[q]);
        break;
      }
      case CoeffKind::tensor: {
        const Vec2 anchor = tri_->b + double(a) * e1_ + double(b) * e2_;
        for (std::size_t q = 0; q < sh.qoff.size(); ++q)
          Kw += rule_->weights[q] * field.tensor(anchor + sh.qoff[q]);
        break;
      }
      case CoeffKind::cellwise:
        kw = 0.5 * (upper ? field.cells->upper[macro_][upper_tri_index(m_, a, b)]
                          : field.cells->lower[macro_][lower_tri_index(m_, a, b)]);
        break;
    }
    if (field.kind == CoeffKind::tensor) {
      for (int r = 0; r < 3; ++r)
        for (int c = r; c < 3; ++c)
          M(r, c) = M(c, r) = (Kw.array() * sh.G[3 * r + c].array()).sum();
    } else {
      for (int r = 0; r < 3; ++r)
        for (int c = r; c < 3; ++c) M(r, c) = M(c, r) = kw * sh.s[3 * r + c];
    }
  }

  // Lattice points of fine triangle (shape, a, b), class vertex order.
  std::array<std::pair<int, int>, 3> element_points(bool upper, int a,
                                                    int b) const {
    if (upper) return {{{a + 1, b}, {a + 1, b + 1}, {a, b + 1}}};
    return {{{a, b}, {a + 1, b}, {a, b + 1}}};
  }

  // Visit the fine triangles with at least one vertex on the macro boundary.
  template <typename F>
  void for_each_boundary_element(F&& fn) const {
    const int n = n_;
    for (int a = 0; a < n; ++a) fn(false, a, 0);
    for (int b = 1; b < n; ++b) {
      fn(false, 0, b);
      if (n - 1 - b > 0) fn(false, n - 1 - b, b);
    }
    for (int a = 0; a < n - 1; ++a) fn(true, a, 0);
    for (int b = 1; b < n - 1; ++b) {
      fn(true, 0, b);
      if (n - 2 - b > 0) fn(true, n - 2 - b, b);
    }
  }

private:
  struct ShapeData {
    double det = 0.0;            // 2 * fine-triangle area
    std::array<Vec2, 3> grad{};  // P1 gradients
    std::array<double, 9> s{};   // grad_a . grad_b * det
    std::array<Mat2, 9> G{};     // det * grad_a (x) grad_b
    std::array<double, 9> mass{};
    std::vector<Vec2> qoff;      // quad points relative to the anchor point
  };

  struct Fan {
    int upper;  // shape class
    int di, dj; // anchor offset from the row point
    int lp;     // local index of the row point
    int dir[3]; // Dir of each local vertex
  };

  // Hexagonal patch around an interior point, fans in the fixed order
  // E-N, N-NW, NW-W, W-S, S-SE, SE-E.
  static constexpr std::array<Fan, 6> kFan = {{
      {0, 0, 0, 0, {int(Dir::C), int(Dir::E), int(Dir::N)}},
      {1, -1, 0, 0, {int(Dir::C), int(Dir::N), int(Dir::NW)}},
      {0, -1, 0, 1, {int(Dir::W), int(Dir::C), int(Dir::NW)}},
      {1, -1, -1, 1, {int(Dir::S), int(Dir::C), int(Dir::W)}},
      {0, 0, -1, 2, {int(Dir::S), int(Dir::SE), int(Dir::C)}},
      {1, 0, -1, 2, {int(Dir::SE), int(Dir::E), int(Dir::C)}},
  }};

  void init_shape(ShapeData& sh, const Vec2& d1, const Vec2& d2,
                  const Vec2& anchor_to_v0) {
    Mat2 J;
    J.col(0) = d1;
    J.col(1) = d2;
    sh.det = J(0, 0) * J(1, 1) - J(0, 1) * J(1, 0);
    const Mat2 Jit = J.inverse().transpose();
    sh.grad = {Jit * Vec2(-1, -1), Jit * Vec2(1, 0), Jit * Vec2(0, 1)};
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) {
        sh.s[3 * a + b] = sh.grad[a].dot(sh.grad[b]) * sh.det;
        sh.G[3 * a + b] = sh.det * (sh.grad[a] * sh.grad[b].transpose());
      }
    // Symmetrize the scalar products exactly (dot is order-sensitive).
    for (int a = 0; a < 3; ++a)
      for (int b = a + 1; b < 3; ++b) {
        sh.s[3 * b + a] = sh.s[3 * a + b];
        sh.G[3 * b + a] = sh.G[3 * a + b].transpose();
      }
    std::array<double, 9> mass{};
    for (std::size_t q = 0; q < rule_->points.size(); ++q) {
      const double x = rule_->points[q].x(), y = rule_->points[q].y();
      const double phi[3] = {1.0 - x - y, x, y};
      const double w = rule_->weights[q] * sh.det;
      for (int a = 0; a < 3; ++a)
        for (int b = a; b < 3; ++b) mass[3 * a + b] += w * phi[a] * phi[b];
    }
    for (int a = 0; a < 3; ++a)
      for (int b = a; b < 3; ++b) sh.mass[3 * a + b] = sh.mass[3 * b + a] =
                                      mass[3 * a + b];
    sh.qoff.resize(rule_->points.size());
    for (std::size_t q = 0; q < rule_->points.size(); ++q)
      sh.qoff[q] = anchor_to_v0 + J * rule_->points[q];
  }

  const MacroTriangle* tri_;
  int macro_;
  int m_;
  int n_;
  const TriangleQuadrature* rule_;
  Vec2 e1_, e2_;
  std::array<ShapeData, 2> shape_;
  std::array<Vec2, 6> fan_off_;
};

// True stencil row at an interior lattice point (one-off convenience; solvers
// keep a PatchAssembler per macro element).
inline StencilRow true_stencil(const MacroTriangle& tri, int macro_id, int m,
                               Form form, const CoefficientField& field,
                               int i, int j, int quad_degree) {
  PatchAssembler pa(tri, macro_id, m, quadrature_rule(quad_degree));
  StencilRow row;
  pa.row(form, field, i, j, row);
  return row;
}

// ---------------------------------------------------------------------------
// Stencil-function sampling
// ---------------------------------------------------------------------------

// Full stencil rows of the level-m form sampled at the interior lattice points
// of the coarser level m_ls (every sampling point is a fine lattice point).
// For direction d only those base points whose d-shifted partner is also
// interior at m_ls are admissible.
struct StencilSamples {
  int m_eval = 0;
  int m_ls = 0;
  std::vector<std::pair<std::int32_t, std::int32_t>> points;  // (i,j) at m_ls
  std::array<std::vector<double>, kNumDirs> values;
};

inline bool sample_admissible(Dir d, int m_ls, int i, int j) {
  const auto off = offset_of(d);
  return lattice_interior(m_ls, i + off.di, j + off.dj);
}

inline StencilSamples sample_stencil_field(const PatchAssembler& pa, Form form,
                                           const CoefficientField& field,
                                           int m_ls) {
  const int m = pa.level();
  if (m_ls < 2 || m_ls > m)
    throw Error("sample_stencil_field: need 2 <= m_ls <= m, got m_ls = " +
                std::to_string(m_ls));
  StencilSamples s;
  s.m_eval = m;
  s.m_ls = m_ls;
  const int nc = lattice_n(m_ls);
  const int stride = 1 << (m - m_ls);
  const std::int64_t count = lattice_interior_count(m_ls);
  s.points.reserve(count);
  for (auto& v : s.values) v.reserve(count);
  StencilRow row;
  for (int j = 1; j <= nc - 2; ++j) {
    for (int i = 1; i <= nc - j - 1; ++i) {
      pa.row(form, field, i * stride, j * stride, row);
      s.points.emplace_back(i, j);
      for (int d = 0; d < kNumDirs; ++d) s.values[d].push_back(row.w[d]);
    }
  }
  return s;
}

}  // namespace sfem

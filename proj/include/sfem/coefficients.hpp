#pragma once

#include <functional>
#include <memory>

#include "sfem/grid_function.hpp"

namespace sfem {

// ---------------------------------------------------------------------------
// Fine-triangle indexing. Level-m refinement of a macro element consists of
// "lower" triangles [(a,b),(a+1,b),(a,b+1)] with a+b <= n-1 and "upper"
// triangles [(a+1,b),(a+1,b+1),(a,b+1)] with a+b <= n-2, n = 2^m.
// ---------------------------------------------------------------------------

inline constexpr std::int64_t lower_tri_count(int m) {
  const std::int64_t n = lattice_n(m);
  return n * (n + 1) / 2;
}

inline constexpr std::int64_t upper_tri_count(int m) {
  const std::int64_t n = lattice_n(m);
  return n * (n - 1) / 2;
}

inline std::int64_t lower_tri_index(int m, int a, int b) {
  const std::int64_t n = lattice_n(m);
  return b * n - std::int64_t(b) * (b - 1) / 2 + a;
}

inline std::int64_t upper_tri_index(int m, int a, int b) {
  const std::int64_t n = lattice_n(m);
  return b * (n - 1) - std::int64_t(b) * (b - 1) / 2 + a;
}

// Constant value per fine triangle of every macro element.
struct ElementwiseCoefficient {
  int m = 0;
  std::vector<std::vector<double>> lower;  // [macro][lower_tri_index]
  std::vector<std::vector<double>> upper;  // [macro][upper_tri_index]
};

enum class CoeffKind { scalar, tensor, cellwise };

struct CoefficientField {
  CoeffKind kind = CoeffKind::scalar;
  std::function<double(const Vec2&)> scalar;
  std::function<Mat2(const Vec2&)> tensor;
  std::shared_ptr<const ElementwiseCoefficient> cells;
};

inline CoefficientField scalar_coefficient(
    std::function<double(const Vec2&)> f) {
  CoefficientField c;
  c.kind = CoeffKind::scalar;
  c.scalar = std::move(f);
  return c;
}

inline CoefficientField constant_coefficient(double v) {
  return scalar_coefficient([v](const Vec2&) { return v; });
}

inline CoefficientField tensor_coefficient(std::function<Mat2(const Vec2&)> f) {
  CoefficientField c;
  c.kind = CoeffKind::tensor;
  c.tensor = std::move(f);
  return c;
}

inline CoefficientField cellwise_coefficient(
    std::shared_ptr<const ElementwiseCoefficient> cells) {
  CoefficientField c;
  c.kind = CoeffKind::cellwise;
  c.cells = std::move(cells);
  return c;
}

// ---------------------------------------------------------------------------
// Domain map and diffusion-tensor pullback
// ---------------------------------------------------------------------------

struct DomainMap {
  std::function<Vec2(const Vec2&)> phi;
  std::function<Mat2(const Vec2&)> jacobian;
};

inline DomainMap identity_map() {
  DomainMap map;
  map.phi = [](const Vec2& x) { return x; };
  map.jacobian = [](const Vec2&) { return Mat2::Identity(); };
  return map;
}

// K0(x) = Dphi^-1 K(phi(x)) Dphi^-T / |det Dphi^-1|. The off-diagonal is
// computed once and mirrored, so K0 is exactly symmetric.
inline CoefficientField pullback_tensor(const CoefficientField& K,
                                        const DomainMap& map) {
  if (K.kind == CoeffKind::cellwise)
    throw Error("pullback_tensor: analytic coefficient required");
  auto eval_K = [K](const Vec2& x) -> Mat2 {
    if (K.kind == CoeffKind::scalar) return K.scalar(x) * Mat2::Identity();
    return K.tensor(x);
  };
  return tensor_coefficient([eval_K, map](const Vec2& x) -> Mat2 {
    const Mat2 J = map.jacobian(x);
    const double det = J(0, 0) * J(1, 1) - J(0, 1) * J(1, 0);
    if (std::abs(det) < 1e-14)
      throw Error("pullback_tensor: singular map jacobian at (" +
                  std::to_string(x.x()) + "," + std::to_string(x.y()) + ")");
    Mat2 Jinv;
    Jinv << J(1, 1), -J(0, 1), -J(1, 0), J(0, 0);
    Jinv /= det;
    const Mat2 B = Jinv * eval_K(map.phi(x));
    Mat2 K0;
    K0(0, 0) = B(0, 0) * Jinv(0, 0) + B(0, 1) * Jinv(0, 1);
    K0(1, 1) = B(1, 0) * Jinv(1, 0) + B(1, 1) * Jinv(1, 1);
    K0(0, 1) = B(0, 0) * Jinv(1, 0) + B(0, 1) * Jinv(1, 1);
    K0(1, 0) = K0(0, 1);
    K0 *= std::abs(det);
    return K0;
  });
}

// ---------------------------------------------------------------------------
// |grad u_h|^(p-2) as an elementwise-constant field
// ---------------------------------------------------------------------------

// Floor on |grad u|^2 before exponentiation; keeps p < 2 exponents finite.
inline constexpr double kGradFloor = 1e-12;

inline std::shared_ptr<const ElementwiseCoefficient> gradient_magnitude_field(
    const GridFunction& u, double p) {
  const LevelContext& ctx = *u.ctx();
  const int m = ctx.m;
  const int n = lattice_n(m);
  const double invn = 1.0 / n;
  const double expo = 0.5 * (p - 2.0);

  auto out = std::make_shared<ElementwiseCoefficient>();
  out->m = m;
  out->lower.resize(u.macros());
  out->upper.resize(u.macros());

  for (std::size_t t = 0; t < u.macros(); ++t) {
    const MacroTriangle& tri = ctx.mesh->tris[t];
    const Vec2 e1 = tri.A.col(0) * invn;
    const Vec2 e2 = tri.A.col(1) * invn;
    Mat2 JL, JU;
    JL.col(0) = e1;
    JL.col(1) = e2;
    JU.col(0) = e2;
    JU.col(1) = e2 - e1;
    const Mat2 GL = JL.inverse().transpose();
    const Mat2 GU = JU.inverse().transpose();

    const auto& ud = u.data(int(t));
    auto& lw = out->lower[t];
    auto& up = out->upper[t];
    lw.resize(lower_tri_count(m));
    up.resize(upper_tri_count(m));

    auto value = [expo](const Vec2& grad) {
      const double g2 = std::max(grad.squaredNorm(), kGradFloor);
      return std::pow(g2, expo);
    };

    for (int b = 0; b < n; ++b) {
      const std::int64_t row = lattice_index(m, 0, b);
      const std::int64_t row1 = lattice_index(m, 0, b + 1);
      for (int a = 0; a + b < n; ++a) {
        const double u0 = ud[row + a];
        const Vec2 grad = GL * Vec2(ud[row + a + 1] - u0, ud[row1 + a] - u0);
        lw[lower_tri_index(m, a, b)] = value(grad);
      }
      for (int a = 0; a + b < n - 1; ++a) {
        const double u0 = ud[row + a + 1];
        const Vec2 grad =
            GU * Vec2(ud[row1 + a + 1] - u0, ud[row1 + a] - u0);
        up[upper_tri_index(m, a, b)] = value(grad);
      }
    }
  }
  return out;
}

}  // namespace sfem

#pragma once

#include <algorithm>
#include <vector>

#include "sfem/core.hpp"

namespace sfem {

// Quadrature on the reference triangle {(x,y): x,y >= 0, x+y <= 1}.
// Weights sum to the reference area 1/2, so for an affine element t,
//   integral_t f dx = 2|t| * sum_q w_q f(x_q).
struct TriangleQuadrature {
  int exactness = 0;
  std::vector<Vec2> points;     // reference coordinates
  std::vector<double> weights;  // sum to 1/2
};

namespace detail {

inline void push_orbit1(TriangleQuadrature& r, double w) {
  r.points.emplace_back(1.0 / 3.0, 1.0 / 3.0);
  r.weights.push_back(0.5 * w);
}

// Orbit of barycentric (a, b, b): three permutations.
inline void push_orbit3(TriangleQuadrature& r, double a, double w) {
  const double b = 0.5 * (1.0 - a);
  const double bary[3][3] = {{a, b, b}, {b, a, b}, {b, b, a}};
  for (auto& p : bary) {
    r.points.emplace_back(p[1], p[2]);
    r.weights.push_back(0.5 * w);
  }
}

// Orbit of barycentric (a, b, c): six permutations.
inline void push_orbit6(TriangleQuadrature& r, double a, double b, double w) {
  const double c = 1.0 - a - b;
  const double bary[6][3] = {{a, b, c}, {a, c, b}, {b, a, c},
                             {b, c, a}, {c, a, b}, {c, b, a}};
  for (auto& p : bary) {
    r.points.emplace_back(p[1], p[2]);
    r.weights.push_back(0.5 * w);
  }
}

inline std::vector<TriangleQuadrature> make_rules() {
  std::vector<TriangleQuadrature> rules;

  {  // degree 1: centroid
    TriangleQuadrature r;
    r.exactness = 1;
    push_orbit1(r, 1.0);
    rules.push_back(std::move(r));
  }
  {  // degree 2: 3 points
    TriangleQuadrature r;
    r.exactness = 2;
    push_orbit3(r, 2.0 / 3.0, 1.0 / 3.0);
    rules.push_back(std::move(r));
  }
  {  // degree 4: 6 points
    TriangleQuadrature r;
    r.exactness = 4;
    push_orbit3(r, 0.1081030181680702, 0.2233815896780115);
    push_orbit3(r, 0.8168475729804585, 0.1099517436553219);
    rules.push_back(std::move(r));
  }
  {  // degree 5: 7 points
    TriangleQuadrature r;
    r.exactness = 5;
    push_orbit1(r, 0.225);
    push_orbit3(r, 0.0597158717897698, 0.1323941527885062);
    push_orbit3(r, 0.7974269853530873, 0.1259391805448272);
    rules.push_back(std::move(r));
  }
  {  // degree 6: 12 points
    TriangleQuadrature r;
    r.exactness = 6;
    push_orbit3(r, 0.5014265096581791, 0.1167862757263794);
    push_orbit3(r, 0.8738219710169954, 0.05084490637020681);
    push_orbit6(r, 0.05314504984481695, 0.3103524510337844,
                0.08285107561837358);
    rules.push_back(std::move(r));
  }
  {  // degree 8: 16 points
    TriangleQuadrature r;
    r.exactness = 8;
    push_orbit1(r, 0.1443156076777871);
    push_orbit3(r, 0.0814148234145538, 0.09509163426728465);
    push_orbit3(r, 0.6588613844964796, 0.1032173705347183);
    push_orbit3(r, 0.8989055433659381, 0.03245849762319808);
    push_orbit6(r, 0.008394777409957605, 0.2631128296346381,
                0.02723031417443499);
    rules.push_back(std::move(r));
  }
  return rules;
}

}  // namespace detail

// Smallest stored rule with exactness >= degree. Coefficient smoothness up to
// polynomial degree 8 is supported (matching the maximum fit degree).
inline const TriangleQuadrature& quadrature_rule(int degree) {
  static const std::vector<TriangleQuadrature> rules = detail::make_rules();
  for (const auto& r : rules) {
    if (r.exactness >= degree) return r;
  }
  throw Error("quadrature_rule: no rule with exactness degree " +
              std::to_string(degree) + " (max 8)");
}

}  // namespace sfem

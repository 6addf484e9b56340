#pragma once

#include <algorithm>
#include <chrono>
#include <optional>

#include "sfem/stencil.hpp"

namespace sfem {

// ---------------------------------------------------------------------------
// Bivariate polynomials in the macro element's reference coordinates.
// Monomial coefficients c_ab for x^a y^b, blocks by total degree, x-exponent
// descending inside a block: 1; x, y; x^2, xy, y^2; ...
// ---------------------------------------------------------------------------

struct Poly2 {
  int q = 0;
  std::vector<double> c;

  static int coeff_count(int q) { return (q + 1) * (q + 2) / 2; }
  static int index(int a, int b) {
    const int d = a + b;
    return d * (d + 1) / 2 + b;
  }

  Poly2() = default;
  explicit Poly2(int degree) : q(degree), c(coeff_count(degree), 0.0) {}

  double eval(double x, double y) const {
    double xp[9], yp[9];
    xp[0] = yp[0] = 1.0;
    for (int k = 1; k <= q; ++k) {
      xp[k] = xp[k - 1] * x;
      yp[k] = yp[k - 1] * y;
    }
    double acc = 0.0;
    int idx = 0;
    for (int d = 0; d <= q; ++d)
      for (int b = 0; b <= d; ++b, ++idx) acc += c[idx] * xp[d - b] * yp[b];
    return acc;
  }

  double eval(const Vec2& x) const { return eval(x.x(), x.y()); }
};

inline Poly2 operator*(double s, const Poly2& p) {
  Poly2 r = p;
  for (auto& v : r.c) v *= s;
  return r;
}

inline Poly2& operator+=(Poly2& a, const Poly2& b) {
  if (a.q < b.q) {
    Poly2 grown(b.q);
    std::copy(a.c.begin(), a.c.end(), grown.c.begin());
    a = grown;
  }
  for (std::size_t k = 0; k < b.c.size(); ++k) a.c[k] += b.c[k];
  return a;
}

// p(x + s): exact binomial expansion in coefficient space.
inline Poly2 shift_polynomial(const Poly2& p, const Vec2& s) {
  double binom[9][9] = {};
  for (int n = 0; n <= p.q; ++n) {
    binom[n][0] = 1.0;
    for (int k = 1; k <= n; ++k)
      binom[n][k] = binom[n - 1][k - 1] + (k <= n - 1 ? binom[n - 1][k] : 0.0);
  }
  double sx[9], sy[9];
  sx[0] = sy[0] = 1.0;
  for (int k = 1; k <= p.q; ++k) {
    sx[k] = sx[k - 1] * s.x();
    sy[k] = sy[k - 1] * s.y();
  }
  Poly2 r(p.q);
  int idx = 0;
  for (int d = 0; d <= p.q; ++d) {
    for (int b = 0; b <= d; ++b, ++idx) {
      const int a = d - b;
      const double cab = p.c[idx];
      if (cab == 0.0) continue;
      for (int al = 0; al <= a; ++al)
        for (int be = 0; be <= b; ++be)
          r.c[Poly2::index(al, be)] +=
              cab * binom[a][al] * sx[a - al] * binom[b][be] * sy[b - be];
    }
  }
  return r;
}

// Forward difference Delta p(x) = p(x + s) - p(x) in coefficient space, one
// degree lower. The identity term of the binomial expansion is excluded
// rather than subtracted, so the small result is assembled without
// cancellation (every kept term carries at least one factor of s).
inline Poly2 diff_polynomial(const Poly2& p, const Vec2& s) {
  double binom[9][9] = {};
  for (int n = 0; n <= p.q; ++n) {
    binom[n][0] = 1.0;
    for (int k = 1; k <= n; ++k)
      binom[n][k] = binom[n - 1][k - 1] + (k <= n - 1 ? binom[n - 1][k] : 0.0);
  }
  double sx[9], sy[9];
  sx[0] = sy[0] = 1.0;
  for (int k = 1; k <= p.q; ++k) {
    sx[k] = sx[k - 1] * s.x();
    sy[k] = sy[k - 1] * s.y();
  }
  Poly2 r(std::max(p.q - 1, 0));
  int idx = 0;
  for (int d = 0; d <= p.q; ++d) {
    for (int b = 0; b <= d; ++b, ++idx) {
      const int a = d - b;
      const double cab = p.c[idx];
      if (cab == 0.0) continue;
      for (int al = 0; al <= a; ++al)
        for (int be = 0; be <= b; ++be) {
          if (al == a && be == b) continue;
          r.c[Poly2::index(al, be)] +=
              cab * binom[a][al] * sx[a - al] * binom[b][be] * sy[b - be];
        }
    }
  }
  return r;
}

// Polynomial for the opposite stencil direction: the row symmetry
// A(x, x+delta) = A(x+delta, x) turns the fitted polynomial for delta into
// the one for -delta by the argument shift x -> x - delta.
inline Poly2 symmetric_pair(const Poly2& p, const Vec2& delta_of_new_dir) {
  return shift_polynomial(p, delta_of_new_dir);
}

inline Vec2 dir_ref_offset(Dir d, int m) {
  const auto off = offset_of(d);
  const double h = 1.0 / double(lattice_n(m));
  return Vec2(off.di * h, off.dj * h);
}

// ---------------------------------------------------------------------------
// Least-squares fit
// ---------------------------------------------------------------------------

struct FitReport {
  int n_samples = 0;
  int n_coeffs = 0;
  double residual = 0.0;       // ||B c - f||_2
  double residual_rel = 0.0;   // relative to ||f||_2 (or absolute if f ~ 0)
  double cond_estimate = 0.0;  // |R_00 / R_MM| from the pivoted QR
};

// Minimizes ||B c - f||_2 over monomial coefficients via column-pivoted
// Householder QR (rank-revealing; the Vandermonde matrix is ill-conditioned,
// so normal equations are not an option). Points must already be expressed in
// reference coordinates of the macro element.
inline Poly2 fit_polynomial(const std::vector<Vec2>& points,
                            const std::vector<double>& values, int q,
                            FitReport* report = nullptr) {
  if (q < 0 || q > 8) throw FitError("fit_polynomial: degree must be in 0..8");
  const int M = Poly2::coeff_count(q);
  const int n = int(points.size());
  if (n != int(values.size()))
    throw FitError("fit_polynomial: points/values size mismatch");
  if (n < M)
    throw FitError("fit_polynomial: underdetermined system (" +
                   std::to_string(n) + " samples < " + std::to_string(M) +
                   " coefficients)");

  Eigen::MatrixXd B(n, M);
  for (int r = 0; r < n; ++r) {
    const double x = points[r].x(), y = points[r].y();
    double xp[9], yp[9];
    xp[0] = yp[0] = 1.0;
    for (int k = 1; k <= q; ++k) {
      xp[k] = xp[k - 1] * x;
      yp[k] = yp[k - 1] * y;
    }
    int idx = 0;
    for (int d = 0; d <= q; ++d)
      for (int b = 0; b <= d; ++b, ++idx) B(r, idx) = xp[d - b] * yp[b];
  }
  Eigen::VectorXd f = Eigen::Map<const Eigen::VectorXd>(values.data(), n);

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(B);
  if (qr.rank() < M)
    throw FitError(
        "fit_polynomial: sampling set does not determine a degree-" +
        std::to_string(q) + " polynomial (rank " +
        std::to_string(qr.rank()) + " < " + std::to_string(M) + ")");
  Eigen::VectorXd sol = qr.solve(f);

  Poly2 p(q);
  for (int k = 0; k < M; ++k) p.c[k] = sol[k];
  if (report) {
    report->n_samples = n;
    report->n_coeffs = M;
    report->residual = (B * sol - f).norm();
    const double fn = f.norm();
    report->residual_rel = fn > 1e-300 ? report->residual / fn : report->residual;
    const auto& R = qr.matrixR();
    report->cond_estimate =
        std::abs(R(0, 0)) / std::max(std::abs(R(M - 1, M - 1)), 1e-300);
  }
  return p;
}

// Max-norm of the least-squares objective gradient 2 B^T (B c - f); zero at
// the exact minimizer over the same sampling set.
inline double first_order_optimality(const std::vector<Vec2>& points,
                                     const std::vector<double>& values,
                                     const Poly2& p) {
  const int M = Poly2::coeff_count(p.q);
  std::vector<double> grad(M, 0.0);
  for (std::size_t r = 0; r < points.size(); ++r) {
    const double x = points[r].x(), y = points[r].y();
    const double res = p.eval(x, y) - values[r];
    double xp[9], yp[9];
    xp[0] = yp[0] = 1.0;
    for (int k = 1; k <= p.q; ++k) {
      xp[k] = xp[k - 1] * x;
      yp[k] = yp[k - 1] * y;
    }
    int idx = 0;
    for (int d = 0; d <= p.q; ++d)
      for (int b = 0; b <= d; ++b, ++idx)
        grad[idx] += 2.0 * res * xp[d - b] * yp[b];
  }
  double mx = 0.0;
  for (double g : grad) mx = std::max(mx, std::abs(g));
  return mx;
}

// ---------------------------------------------------------------------------
// Forward-difference row evaluation
// ---------------------------------------------------------------------------

// Difference polynomials of p along a fixed step: d[k] is the k-th forward
// difference, degree q - k. Depends only on (p, step), so it can be built
// once and reused for every row marched in that direction.
struct DiffChain {
  int q = 0;
  std::vector<Poly2> d;
};

inline DiffChain make_diff_chain(const Poly2& p, const Vec2& step) {
  DiffChain ch;
  ch.q = p.q;
  ch.d.resize(p.q + 1);
  ch.d[0] = p;
  for (int k = 1; k <= p.q; ++k) ch.d[k] = diff_polynomial(ch.d[k - 1], step);
  return ch;
}

// Streams p(x0), p(x0+step), p(x0+2 step), ... via a Newton forward-difference
// table; each advance costs q additions. The table is seeded from analytically
// differenced polynomials, not from subtracted point values: the k-th
// difference shrinks like |step|^k, subtracting near-equal evaluations leaves
// noise of order 2^k eps |p| in it, and marching N points amplifies that by
// binomial(N, k). Evaluating the exact difference polynomials keeps the seed
// error at the rounding level of the (tiny) difference itself, which stays
// negligible after amplification.
class RowEvaluator {
public:
  RowEvaluator() = default;

  RowEvaluator(const DiffChain& chain, const Vec2& x0) : q_(chain.q) {
    for (int k = 0; k <= q_; ++k) d_[k] = chain.d[k].eval(x0);
  }

  RowEvaluator(const Poly2& p, const Vec2& x0, const Vec2& step)
      : RowEvaluator(make_diff_chain(p, step), x0) {}

  double value() const { return d_[0]; }

  void advance() {
    for (int k = 0; k < q_; ++k) d_[k] += d_[k + 1];
  }

private:
  int q_ = 0;
  std::array<double, 9> d_{};
};

// ---------------------------------------------------------------------------
// Per-macro surrogate stencil set
// ---------------------------------------------------------------------------

struct SurrogateConfig {
  int q = 2;
  int m_ls = 2;
  bool symmetric_pairing = true;
  bool zero_row_sum = true;  // applies to the stiffness form only
};

struct DirFit {
  Dir dir = Dir::C;
  FitReport report;
  double sign_violation = 0.0;  // max positive fitted off-diagonal sample
};

struct MacroFitDiagnostics {
  std::vector<DirFit> fits;
  double sampling_seconds = 0.0;
  double fitting_seconds = 0.0;
};

// Fitted polynomials of one macro element for one bilinear form. With
// symmetric pairing only E, N, NW are stored; W, S, SE come from argument
// shifts. With zero-row-sum closure the center is minus the sum of the six
// off-diagonal values, exactly as evaluated; otherwise it is fitted too.
struct MacroSurrogate {
  int q = 0;
  int m = 0;
  int m_ls = 0;
  bool pairing = true;
  bool closure = true;
  std::array<std::optional<Poly2>, kNumDirs> poly;

  const Poly2& stored(Dir d) const { return *poly[static_cast<int>(d)]; }

  // Value of direction d at lattice point (i,j) by direct evaluation.
  double value(Dir d, int i, int j) const {
    const double h = 1.0 / double(lattice_n(m));
    const double x = i * h, y = j * h;
    switch (d) {
      case Dir::C:
        if (!closure) return stored(Dir::C).eval(x, y);
        return -(value(Dir::E, i, j) + value(Dir::W, i, j) +
                 value(Dir::N, i, j) + value(Dir::S, i, j) +
                 value(Dir::NW, i, j) + value(Dir::SE, i, j));
      case Dir::E:
      case Dir::N:
      case Dir::NW:
        return stored(d).eval(x, y);
      case Dir::W:
        return pairing ? stored(Dir::E).eval(x - h, y)
                       : stored(Dir::W).eval(x, y);
      case Dir::S:
        return pairing ? stored(Dir::N).eval(x, y - h)
                       : stored(Dir::S).eval(x, y);
      case Dir::SE:
        return pairing ? stored(Dir::NW).eval(x + h, y - h)
                       : stored(Dir::SE).eval(x, y);
    }
    return 0.0;
  }
};

// Full surrogate row at an interior lattice point.
inline StencilRow surrogate_stencil_at(const MacroSurrogate& s, int i, int j) {
  StencilRow row;
  for (Dir d : kOffDiagDirs) row[d] = s.value(d, i, j);
  if (s.closure) {
    double sum = 0.0;
    for (Dir d : kOffDiagDirs) sum += row[d];
    row[Dir::C] = -sum;
  } else {
    row[Dir::C] = s.value(Dir::C, i, j);
  }
  return row;
}

// Minimum sampling level that supports a degree-q fit for every direction:
// each direction needs at least coeff_count(q) admissible interior pairs.
inline int min_sampling_points(int m_ls, Dir d) {
  int count = 0;
  const int nc = lattice_n(m_ls);
  for (int j = 1; j <= nc - 2; ++j)
    for (int i = 1; i <= nc - j - 1; ++i)
      if (sample_admissible(d, m_ls, i, j)) ++count;
  return count;
}

inline bool sampling_supports_fit(int m_ls, int q, bool pairing,
                                  bool closure) {
  if (m_ls < 2) return false;
  const int M = Poly2::coeff_count(q);
  std::vector<Dir> dirs;
  if (pairing)
    dirs = {Dir::E, Dir::N, Dir::NW};
  else
    dirs.assign(kOffDiagDirs.begin(), kOffDiagDirs.end());
  if (!closure) dirs.push_back(Dir::C);
  for (Dir d : dirs)
    if (min_sampling_points(m_ls, d) < M) return false;
  return true;
}

inline MacroSurrogate fit_macro_surrogate(const PatchAssembler& pa, Form form,
                                          const CoefficientField& field,
                                          const SurrogateConfig& cfg,
                                          MacroFitDiagnostics* diag = nullptr) {
  MacroSurrogate s;
  s.q = cfg.q;
  s.m = pa.level();
  s.m_ls = cfg.m_ls;
  s.pairing = cfg.symmetric_pairing;
  s.closure = cfg.zero_row_sum && form == Form::stiffness;

  const auto t0 = std::chrono::steady_clock::now();
  const StencilSamples samples = sample_stencil_field(pa, form, field, cfg.m_ls);
  const auto t1 = std::chrono::steady_clock::now();

  std::vector<Dir> dirs;
  if (s.pairing)
    dirs = {Dir::E, Dir::N, Dir::NW};
  else
    dirs.assign(kOffDiagDirs.begin(), kOffDiagDirs.end());
  if (!s.closure) dirs.push_back(Dir::C);

  const int nc = lattice_n(cfg.m_ls);
  std::vector<Vec2> pts;
  std::vector<double> vals;
  for (Dir d : dirs) {
    pts.clear();
    vals.clear();
    const auto& dv = samples.values[static_cast<int>(d)];
    for (std::size_t k = 0; k < samples.points.size(); ++k) {
      const auto [i, j] = samples.points[k];
      if (!sample_admissible(d, cfg.m_ls, i, j)) continue;
      pts.emplace_back(double(i) / nc, double(j) / nc);
      vals.push_back(dv[k]);
    }
    DirFit df;
    df.dir = d;
    try {
      s.poly[static_cast<int>(d)] = fit_polynomial(pts, vals, cfg.q, &df.report);
    } catch (const FitError& e) {
      throw FitError(std::string(e.what()) + " (direction " + dir_name(d) +
                     ", m_ls = " + std::to_string(cfg.m_ls) + ")");
    }
    if (form == Form::stiffness && d != Dir::C) {
      const Poly2& p = *s.poly[static_cast<int>(d)];
      for (const auto& x : pts)
        df.sign_violation = std::max(df.sign_violation, p.eval(x));
    }
    if (diag) diag->fits.push_back(df);
  }
  if (diag) {
    const auto t2 = std::chrono::steady_clock::now();
    diag->sampling_seconds += std::chrono::duration<double>(t1 - t0).count();
    diag->fitting_seconds += std::chrono::duration<double>(t2 - t1).count();
  }
  return s;
}

}  // namespace sfem

#pragma once

#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>

#include "sfem/operators.hpp"

namespace sfem {

// ---------------------------------------------------------------------------
// Stencil-space consistency
// ---------------------------------------------------------------------------

struct StencilDiff {
  double max_abs = 0.0;
  double max_abs_reference = 0.0;  // largest |reference entry| seen
  int macro = -1;
  int i = -1, j = -1;
  Dir dir = Dir::C;
};

// Maximum over all interior lattice points and the seven directions of the
// entry difference between two operators on the same level (macro-boundary
// rows are assembled exactly in both and are excluded).
inline StencilDiff max_norm_diff(const Operator& a, const Operator& b) {
  if (a.ctx() != b.ctx())
    throw Error("max_norm_diff: operators live on different levels");
  const int n = a.ctx()->n();
  const int ntri = int(a.ctx()->mesh->tris.size());
  StencilDiff out;
  StencilRow ra, rb;
  for (int t = 0; t < ntri; ++t) {
    for (int j = 1; j <= n - 2; ++j) {
      for (int i = 1; i <= n - j - 1; ++i) {
        a.interior_row(t, i, j, ra);
        b.interior_row(t, i, j, rb);
        for (int d = 0; d < kNumDirs; ++d) {
          out.max_abs_reference =
              std::max(out.max_abs_reference, std::abs(ra.w[d]));
          const double diff = std::abs(ra.w[d] - rb.w[d]);
          if (diff > out.max_abs) {
            out.max_abs = diff;
            out.macro = t;
            out.i = i;
            out.j = j;
            out.dir = Dir(d);
          }
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sparse-matrix norms
// ---------------------------------------------------------------------------

inline double max_abs_entry(const Eigen::SparseMatrix<double>& A) {
  double mx = 0.0;
  for (int oc = 0; oc < A.outerSize(); ++oc)
    for (Eigen::SparseMatrix<double>::InnerIterator it(A, oc); it; ++it)
      mx = std::max(mx, std::abs(it.value()));
  return mx;
}

// Max absolute row sum.
inline double inf_norm(const Eigen::SparseMatrix<double>& A) {
  std::vector<double> row(A.rows(), 0.0);
  for (int oc = 0; oc < A.outerSize(); ++oc)
    for (Eigen::SparseMatrix<double>::InnerIterator it(A, oc); it; ++it)
      row[it.row()] += std::abs(it.value());
  double mx = 0.0;
  for (double r : row) mx = std::max(mx, r);
  return mx;
}

// Largest number of structurally stored entries in any row (an upper bound
// on the nonzeros per row, which is all the perturbation bound needs).
inline int max_row_nonzeros(const Eigen::SparseMatrix<double>& A) {
  std::vector<int> cnt(A.rows(), 0);
  for (int oc = 0; oc < A.outerSize(); ++oc)
    for (Eigen::SparseMatrix<double>::InnerIterator it(A, oc); it; ++it)
      if (it.value() != 0.0) ++cnt[it.row()];
  int mx = 0;
  for (int c : cnt) mx = std::max(mx, c);
  return mx;
}

inline Eigen::VectorXd row_sums(const Eigen::SparseMatrix<double>& A) {
  Eigen::VectorXd s = Eigen::VectorXd::Zero(A.rows());
  for (int oc = 0; oc < A.outerSize(); ++oc)
    for (Eigen::SparseMatrix<double>::InnerIterator it(A, oc); it; ++it)
      s[it.row()] += it.value();
  return s;
}

inline double max_asymmetry(const Eigen::SparseMatrix<double>& A) {
  const Eigen::SparseMatrix<double> At = A.transpose();
  const Eigen::SparseMatrix<double> D = A - At;
  return max_abs_entry(D);
}

// ---------------------------------------------------------------------------
// Symmetric eigenvalues (cyclic Jacobi)
// ---------------------------------------------------------------------------

// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
// Small dense systems only (tests, coarse levels); optional eigenvector
// accumulation for reconstruction checks.
inline std::vector<double> symmetric_eigenvalues(
    Eigen::MatrixXd A, Eigen::MatrixXd* vectors = nullptr) {
  const int n = int(A.rows());
  if (n != A.cols()) throw Error("symmetric_eigenvalues: matrix not square");
  if (n > 2000)
    throw Error("symmetric_eigenvalues: dimension cap of 2000 exceeded");
  if (vectors) *vectors = Eigen::MatrixXd::Identity(n, n);
  if (n == 0) return {};

  const double scale = std::max(A.norm(), 1e-300);  // Frobenius
  bool converged = false;
  for (int sweep = 0; sweep < 100 && !converged; ++sweep) {
    double off2 = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off2 += 2.0 * A(p, q) * A(p, q);
    if (std::sqrt(off2) <= 1e-13 * scale) {
      converged = true;
      break;
    }
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = A(p, q);
        if (std::abs(apq) <= 1e-300) continue;
        const double theta = (A(q, q) - A(p, p)) / (2.0 * apq);
        const double t =
            (theta >= 0.0 ? 1.0 : -1.0) /
            (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        const Eigen::VectorXd colp = A.col(p), colq = A.col(q);
        A.col(p) = c * colp - s * colq;
        A.col(q) = s * colp + c * colq;
        const Eigen::RowVectorXd rowp = A.row(p), rowq = A.row(q);
        A.row(p) = c * rowp - s * rowq;
        A.row(q) = s * rowp + c * rowq;
        if (vectors) {
          const Eigen::VectorXd vp = vectors->col(p), vq = vectors->col(q);
          vectors->col(p) = c * vp - s * vq;
          vectors->col(q) = s * vp + c * vq;
        }
      }
    }
  }
  if (!converged) {
    double off2 = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off2 += 2.0 * A(p, q) * A(p, q);
    if (std::sqrt(off2) > 1e-13 * scale)
      throw SolveError("symmetric_eigenvalues: Jacobi sweeps did not converge");
  }

  std::vector<int> order(n);
  for (int k = 0; k < n; ++k) order[k] = k;
  std::sort(order.begin(), order.end(),
            [&](int x, int y) { return A(x, x) < A(y, y); });
  std::vector<double> eig(n);
  for (int k = 0; k < n; ++k) eig[k] = A(order[k], order[k]);
  if (vectors) {
    Eigen::MatrixXd V = *vectors;
    for (int k = 0; k < n; ++k) vectors->col(k) = V.col(order[k]);
  }
  return eig;
}

// ---------------------------------------------------------------------------
// Eigenvalue perturbation bound
// ---------------------------------------------------------------------------

struct SpectralReport {
  std::vector<double> eig_m, eig_n;
  double norm_inf_diff = 0.0;  // ||M - N||_inf
  double norm_max_diff = 0.0;  // ||M - N||_max
  int row_nonzeros = 0;        // l(M - N)
  double max_gap = 0.0;        // max_k |lambda_k(M) - lambda_k(N)|
  double slack = 0.0;
  bool inf_bound_holds = false;
  bool scaled_max_bound_holds = false;

  bool pass() const { return inf_bound_holds && scaled_max_bound_holds; }
};

// Checks that matching sorted eigenvalues shift by no more than the norm of
// the perturbation: max_k |lambda_k(M) - lambda_k(N)| <= ||M - N||_inf, and
// the sparsity refinement with l(M-N) * ||M - N||_max. Slack is
// 1e-10 * ||M||_inf; asymmetry beyond 1e-12 (relative to the largest entry)
// is rejected.
inline SpectralReport spectral_bound_check(const Eigen::MatrixXd& M,
                                           const Eigen::MatrixXd& N) {
  if (M.rows() != M.cols() || N.rows() != N.cols() || M.rows() != N.rows())
    throw Error("spectral_bound_check: need square matrices of equal size");
  const double mmax = M.cwiseAbs().maxCoeff();
  const double asym_tol = 1e-12 * std::max(1.0, mmax);
  if ((M - M.transpose()).cwiseAbs().maxCoeff() > asym_tol ||
      (N - N.transpose()).cwiseAbs().maxCoeff() > asym_tol)
    throw Error("spectral_bound_check: input matrix is not symmetric");
  const Eigen::MatrixXd Ms = 0.5 * (M + M.transpose());
  const Eigen::MatrixXd Ns = 0.5 * (N + N.transpose());
  const Eigen::MatrixXd D = Ms - Ns;

  SpectralReport rep;
  rep.eig_m = symmetric_eigenvalues(Ms);
  rep.eig_n = symmetric_eigenvalues(Ns);
  rep.norm_inf_diff = D.cwiseAbs().rowwise().sum().maxCoeff();
  rep.norm_max_diff = D.cwiseAbs().maxCoeff();
  int l = 0;
  for (int r = 0; r < D.rows(); ++r) {
    int cnt = 0;
    for (int c = 0; c < D.cols(); ++c)
      if (D(r, c) != 0.0) ++cnt;
    l = std::max(l, cnt);
  }
  rep.row_nonzeros = l;
  for (std::size_t k = 0; k < rep.eig_m.size(); ++k)
    rep.max_gap = std::max(rep.max_gap, std::abs(rep.eig_m[k] - rep.eig_n[k]));
  rep.slack = 1e-10 * Ms.cwiseAbs().rowwise().sum().maxCoeff();
  rep.inf_bound_holds = rep.max_gap <= rep.norm_inf_diff + rep.slack;
  rep.scaled_max_bound_holds =
      rep.max_gap <= double(l) * rep.norm_max_diff + rep.slack;
  return rep;
}

// ---------------------------------------------------------------------------
// Error norms and convergence rates
// ---------------------------------------------------------------------------

struct ErrorNorms {
  double l2 = 0.0;      // ||u - u_h||_L2
  double h1 = 0.0;      // full H1 norm of the error (L2 part included)
  double l2_rel = 0.0;
  double h1_rel = 0.0;
};

inline ErrorNorms error_norms(const GridFunction& uh,
                              const std::function<double(const Vec2&)>& u,
                              const std::function<Vec2(const Vec2&)>& grad_u,
                              int quad_degree = 4) {
  const LevelContext& ctx = *uh.ctx();
  const TriangleQuadrature& rule = quadrature_rule(quad_degree);
  const int m = ctx.m;
  const int n = ctx.n();
  const std::size_t nq = rule.points.size();
  double e_l2 = 0.0, e_h1 = 0.0, n_l2 = 0.0, n_h1 = 0.0;
  for (std::size_t t = 0; t < ctx.mesh->tris.size(); ++t) {
    const MacroTriangle& tri = ctx.mesh->tris[t];
    const Vec2 e1 = tri.A.col(0) / double(n);
    const Vec2 e2 = tri.A.col(1) / double(n);
    struct Shape {
      double det;
      std::array<Vec2, 3> grad;
      std::vector<Vec2> qoff;  // physical offsets from the (a,b) anchor
    };
    std::array<Shape, 2> shape;
    for (int s = 0; s < 2; ++s) {
      Mat2 J;
      if (s == 0) {
        J.col(0) = e1;
        J.col(1) = e2;
      } else {
        J.col(0) = e2;
        J.col(1) = e2 - e1;
      }
      shape[s].det = J(0, 0) * J(1, 1) - J(0, 1) * J(1, 0);
      const Mat2 Jit = J.inverse().transpose();
      shape[s].grad = {Jit * Vec2(-1, -1), Jit * Vec2(1, 0), Jit * Vec2(0, 1)};
      shape[s].qoff.resize(nq);
      for (std::size_t q = 0; q < nq; ++q) {
        shape[s].qoff[q] = J * rule.points[q];
        if (s == 1) shape[s].qoff[q] += e1;
      }
    }
    const auto& ud = uh.data(int(t));
    const auto element = [&](bool upper, int a, int b) {
      const Shape& sh = shape[upper ? 1 : 0];
      double v[3];
      if (upper) {
        v[0] = ud[lattice_index(m, a + 1, b)];
        v[1] = ud[lattice_index(m, a + 1, b + 1)];
        v[2] = ud[lattice_index(m, a, b + 1)];
      } else {
        v[0] = ud[lattice_index(m, a, b)];
        v[1] = ud[lattice_index(m, a + 1, b)];
        v[2] = ud[lattice_index(m, a, b + 1)];
      }
      const Vec2 gh =
          v[0] * sh.grad[0] + v[1] * sh.grad[1] + v[2] * sh.grad[2];
      const Vec2 anchor = tri.b + double(a) * e1 + double(b) * e2;
      for (std::size_t q = 0; q < nq; ++q) {
        const double x = rule.points[q].x(), y = rule.points[q].y();
        const double uh_q = v[0] * (1.0 - x - y) + v[1] * x + v[2] * y;
        const Vec2 xq = anchor + sh.qoff[q];
        const double uq = u(xq);
        const Vec2 gq = grad_u(xq);
        const double w = rule.weights[q] * sh.det;
        e_l2 += w * (uq - uh_q) * (uq - uh_q);
        n_l2 += w * uq * uq;
        e_h1 += w * (gq - gh).squaredNorm();
        n_h1 += w * gq.squaredNorm();
      }
    };
    for (int b = 0; b <= n - 1; ++b)
      for (int a = 0; a <= n - 1 - b; ++a) element(false, a, b);
    for (int b = 0; b <= n - 2; ++b)
      for (int a = 0; a <= n - 2 - b; ++a) element(true, a, b);
  }
  ErrorNorms out;
  out.l2 = std::sqrt(e_l2);
  out.h1 = std::sqrt(e_l2 + e_h1);
  const double un_l2 = std::sqrt(n_l2);
  const double un_h1 = std::sqrt(n_l2 + n_h1);
  out.l2_rel = un_l2 > 0.0 ? out.l2 / un_l2 : out.l2;
  out.h1_rel = un_h1 > 0.0 ? out.h1 / un_h1 : out.h1;
  return out;
}

// rate_k = log(e_{k-1}/e_k) / log(s_{k-1}/s_k) for strictly decreasing sizes.
inline std::vector<double> eoc(const std::vector<double>& errors,
                               const std::vector<double>& sizes) {
  if (errors.size() != sizes.size() || errors.size() < 2)
    throw Error("eoc: need at least two (error, size) pairs");
  std::vector<double> rates;
  for (std::size_t k = 1; k < errors.size(); ++k) {
    if (!(sizes[k] < sizes[k - 1]))
      throw Error("eoc: mesh sizes must decrease strictly");
    rates.push_back(std::log(errors[k - 1] / errors[k]) /
                    std::log(sizes[k - 1] / sizes[k]));
  }
  return rates;
}

// ---------------------------------------------------------------------------
// Convergence tables
// ---------------------------------------------------------------------------

struct ConvergenceRow {
  double H_ratio = 1.0;
  double rel_l2 = 0.0;
  std::optional<double> eoc_l2;  // empty on the first row
  double rel_h1 = 0.0;
  std::optional<double> eoc_h1;
  std::int64_t dofs = 0;
  double rtts = 1.0;
};

inline void write_convergence_csv(const std::string& path,
                                  const std::vector<ConvergenceRow>& rows) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path + " for writing");
  os << "H_ratio,rel_l2,eoc_l2,rel_h1,eoc_h1,dofs,rtts\n";
  char buf[512];
  for (const auto& r : rows) {
    std::string e2 = r.eoc_l2 ? [&] {
      char b[64];
      std::snprintf(b, sizeof b, "%.4f", *r.eoc_l2);
      return std::string(b);
    }() : std::string();
    std::string e1 = r.eoc_h1 ? [&] {
      char b[64];
      std::snprintf(b, sizeof b, "%.4f", *r.eoc_h1);
      return std::string(b);
    }() : std::string();
    std::snprintf(buf, sizeof buf, "%.10g,%.12e,%s,%.12e,%s,%lld,%.6e\n",
                  r.H_ratio, r.rel_l2, e2.c_str(), r.rel_h1, e1.c_str(),
                  static_cast<long long>(r.dofs), r.rtts);
    os << buf;
  }
  if (!os) throw Error("write failed for " + path);
}

inline double monotonic_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

}  // namespace sfem

#pragma once

#include <functional>
#include <optional>

#include "sfem/operators.hpp"

namespace sfem {

// Zero every non-owner alias copy so each global dof is represented exactly
// once (used before summations over fine points).
inline void zero_nonowner_copies(GridFunction& g) {
  for (const auto& cls : g.ctx()->classes)
    for (std::size_t k = 1; k < cls.size(); ++k)
      g.at(cls[k].tri, cls[k].idx) = 0.0;
}

// Nodal injection from level m+1 to level m (coarse point takes the value at
// its fine image); used to carry nonlinear-iterate data down a hierarchy.
inline void inject(const GridFunction& uf, GridFunction& uc) {
  const int mf = uf.level();
  const int mc = uc.level();
  if (mf != mc + 1)
    throw Error("inject: source must be one finer than the target");
  const int nc = lattice_n(mc);
  for (std::size_t t = 0; t < uf.macros(); ++t) {
    const auto& fd = uf.data(int(t));
    auto& cd = uc.data(int(t));
    std::int64_t idx = 0;
    for (int b = 0; b <= nc; ++b)
      for (int a = 0; a <= nc - b; ++a, ++idx)
        cd[idx] = fd[lattice_index(mf, 2 * a, 2 * b)];
  }
}

// P1 interpolation from level m to level m+1 on every macro: injection at
// even-even points, edge-midpoint averages elsewhere (the odd-odd point is
// the midpoint of the diagonal edge). Alias copies of the result agree
// bitwise because both sides average the same two values.
inline void prolongate(const GridFunction& uc, GridFunction& uf) {
  const int mc = uc.level();
  const int mf = uf.level();
  if (mf != mc + 1)
    throw Error("prolongate: target level must be one finer than the source");
  const int nf = lattice_n(mf);
  for (std::size_t t = 0; t < uc.macros(); ++t) {
    const auto& cd = uc.data(int(t));
    auto& fd = uf.data(int(t));
    std::int64_t idx = 0;
    for (int J = 0; J <= nf; ++J) {
      for (int I = 0; I <= nf - J; ++I, ++idx) {
        if ((I & 1) == 0 && (J & 1) == 0) {
          fd[idx] = cd[lattice_index(mc, I / 2, J / 2)];
        } else if ((J & 1) == 0) {
          const int a = (I - 1) / 2, b = J / 2;
          fd[idx] = 0.5 * (cd[lattice_index(mc, a, b)] +
                           cd[lattice_index(mc, a + 1, b)]);
        } else if ((I & 1) == 0) {
          const int a = I / 2, b = (J - 1) / 2;
          fd[idx] = 0.5 * (cd[lattice_index(mc, a, b)] +
                           cd[lattice_index(mc, a, b + 1)]);
        } else {
          const int a = (I - 1) / 2, b = (J - 1) / 2;
          fd[idx] = 0.5 * (cd[lattice_index(mc, a + 1, b)] +
                           cd[lattice_index(mc, a, b + 1)]);
        }
      }
    }
  }
}

// Exact transpose of prolongate: coarse dof value = fine value at its image
// plus half the values at the six midpoints of its incident coarse edges,
// with every fine dof counted once globally. rf's non-owner copies are
// zeroed in place; the result has zero Dirichlet rows.
inline void restrict_residual(GridFunction& rf, GridFunction& rc) {
  const int mf = rf.level();
  const int mc = rc.level();
  if (mf != mc + 1)
    throw Error("restrict_residual: source must be one finer than the target");
  zero_nonowner_copies(rf);
  const int nc = lattice_n(mc);
  for (std::size_t t = 0; t < rf.macros(); ++t) {
    const auto& fd = rf.data(int(t));
    auto& cd = rc.data(int(t));
    std::int64_t idx = 0;
    for (int b = 0; b <= nc; ++b) {
      for (int a = 0; a <= nc - b; ++a, ++idx) {
        const int I = 2 * a, J = 2 * b;
        double acc = fd[lattice_index(mf, I, J)];
        for (Dir d : kOffDiagDirs) {
          const auto off = offset_of(d);
          const int fi = I + off.di, fj = J + off.dj;
          if (lattice_valid(mf, fi, fj))
            acc += 0.5 * fd[lattice_index(mf, fi, fj)];
        }
        cd[idx] = acc;
      }
    }
  }
  reduce_interfaces_add(rc);
  zero_dirichlet(rc);
}

// ---------------------------------------------------------------------------
// Geometric multigrid
// ---------------------------------------------------------------------------

enum class CoarseSolverKind { direct, cg };

struct MultigridOptions {
  int nu1 = 2;
  int nu2 = 2;
  int m_coarse = 2;
  CoarseSolverKind coarse_solver = CoarseSolverKind::direct;
  double rel_tol = 1e-11;
  int max_cycles = 100;
  double coarse_rel_tol = 1e-12;
};

struct SolveStats {
  bool converged = false;
  int cycles = 0;
  double initial_residual = 0.0;
  double final_residual = 0.0;
  std::vector<double> residuals;  // after each cycle

  // Geometric-mean residual contraction per cycle.
  double mean_contraction() const {
    if (residuals.empty() || initial_residual <= 0.0) return 0.0;
    const double total = residuals.back() / initial_residual;
    return std::pow(total, 1.0 / double(residuals.size()));
  }
};

// V-cycle hierarchy with rediscretized coarse operators. The operator of
// every level comes from op_builder so surrogate setups can adapt their
// sampling level per grid; smoothing is the hybrid interface-Jacobi /
// interior-Gauss-Seidel sweep of Operator::smooth_sweep.
class Multigrid {
public:
  Multigrid(std::shared_ptr<const MacroMesh> mesh, int m_fine,
            const MultigridOptions& opt,
            const std::function<Operator(LevelPtr)>& op_builder)
      : opt_(opt) {
    if (opt.m_coarse < 0 || m_fine < opt.m_coarse)
      throw ConfigError("multigrid needs m_coarse <= m_fine");
    const int nlev = m_fine - opt.m_coarse + 1;
    levels_.reserve(nlev);
    for (int m = opt.m_coarse; m <= m_fine; ++m) {
      Level lvl;
      lvl.ctx = build_level(mesh, m);
      lvl.op.emplace(op_builder(lvl.ctx));
      lvl.r = GridFunction(lvl.ctx);
      const bool below_finest = m < m_fine;
      if (below_finest) {
        lvl.u = GridFunction(lvl.ctx);
        lvl.f = GridFunction(lvl.ctx);
      }
      levels_.push_back(std::move(lvl));
    }
    if (opt_.coarse_solver == CoarseSolverKind::direct) factor_coarse();
  }

  int num_levels() const { return int(levels_.size()); }
  const LevelPtr& ctx(int l) const { return levels_[l].ctx; }
  const LevelPtr& fine_ctx() const { return levels_.back().ctx; }
  const Operator& op(int l) const { return *levels_[l].op; }
  const Operator& fine_op() const { return *levels_.back().op; }

  // Swap in new per-level operators (same levels and storage); refactors the
  // coarse system. Used by nonlinear drivers that refit coefficients.
  void rebuild_operators(const std::function<Operator(LevelPtr)>& op_builder) {
    for (auto& lvl : levels_) lvl.op.emplace(op_builder(lvl.ctx));
    if (opt_.coarse_solver == CoarseSolverKind::direct) factor_coarse();
  }

  // One V(nu1, nu2) cycle on the finest-level system A u = f with
  // homogeneous Dirichlet data (u and f zero on the domain boundary).
  void v_cycle(GridFunction& u, const GridFunction& f) {
    const int top = int(levels_.size()) - 1;
    if (top == 0) {
      coarse_solve(u, f);
      return;
    }
    descend(top, u, f);
  }

  // Cycle until ||f - A u|| <= rel_tol * ||f|| (or max_cycles; non-convergence
  // is reported through the flag, the best iterate stays in u).
  SolveStats solve(GridFunction& u, const GridFunction& f) {
    SolveStats stats;
    GridFunction& r = levels_.back().r;
    residual(fine_op(), u, f, r);
    stats.initial_residual = norm2(r);
    const double target = opt_.rel_tol * norm2(f);
    double rn = stats.initial_residual;
    if (rn <= target) {
      stats.converged = true;
      stats.final_residual = rn;
      return stats;
    }
    for (int c = 0; c < opt_.max_cycles; ++c) {
      v_cycle(u, f);
      residual(fine_op(), u, f, r);
      rn = norm2(r);
      stats.residuals.push_back(rn);
      stats.cycles = c + 1;
      if (rn <= target || !std::isfinite(rn)) break;
    }
    stats.final_residual = rn;
    stats.converged = std::isfinite(rn) && rn <= target;
    return stats;
  }

private:
  struct Level {
    LevelPtr ctx;
    std::optional<Operator> op;
    GridFunction u, f, r;
  };

  void descend(int l, GridFunction& u, const GridFunction& f) {
    Level& L = levels_[l];
    const Operator& A = *L.op;
    for (int s = 0; s < opt_.nu1; ++s) A.smooth_sweep(u, f);
    residual(A, u, f, L.r);
    Level& C = levels_[l - 1];
    restrict_residual(L.r, C.f);
    C.u.set_zero();
    if (l - 1 == 0)
      coarse_solve(C.u, C.f);
    else
      descend(l - 1, C.u, C.f);
    prolongate(C.u, L.r);
    axpy(1.0, L.r, u);
    for (int s = 0; s < opt_.nu2; ++s) A.smooth_sweep(u, f);
  }

  void factor_coarse() {
    const LevelContext& ctx = *levels_.front().ctx;
    const Eigen::SparseMatrix<double> A =
        assemble(*levels_.front().op, ApplyMode::constrained);
    free_of_global_.assign(ctx.n_global, -1);
    std::int64_t nf = 0;
    for (std::size_t t = 0; t < ctx.global_id.size(); ++t)
      for (std::int64_t k = 0; k < ctx.points_per_macro; ++k)
        if (ctx.owned[t][k] && !ctx.dirichlet[t][k])
          free_of_global_[ctx.global_id[t][k]] = nf++;
    Eigen::MatrixXd Aff = Eigen::MatrixXd::Zero(nf, nf);
    for (int oc = 0; oc < A.outerSize(); ++oc) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(A, oc); it; ++it) {
        const std::int64_t fr = free_of_global_[it.row()];
        const std::int64_t fc = free_of_global_[it.col()];
        if (fr >= 0 && fc >= 0) Aff(fr, fc) = it.value();
      }
    }
    coarse_free_ = Aff;
    coarse_ldlt_.compute(Aff);
    if (coarse_ldlt_.info() != Eigen::Success)
      throw SolveError("coarse-grid factorization failed");
  }

  void coarse_solve(GridFunction& u, const GridFunction& f) {
    if (opt_.coarse_solver == CoarseSolverKind::cg) {
      coarse_cg(u, f);
      return;
    }
    const LevelContext& ctx = *levels_.front().ctx;
    const Eigen::VectorXd b = to_global(f);
    const std::int64_t nf = coarse_free_.rows();
    Eigen::VectorXd bf(nf);
    for (std::int64_t g = 0; g < ctx.n_global; ++g)
      if (free_of_global_[g] >= 0) bf[free_of_global_[g]] = b[g];
    const Eigen::VectorXd xf = coarse_ldlt_.solve(bf);
    const double resid = (coarse_free_ * xf - bf).norm();
    if (resid > 1e-12 * std::max(1.0, bf.norm()))
      throw SolveError("coarse direct solve residual " + std::to_string(resid) +
                       " exceeds tolerance");
    Eigen::VectorXd x(ctx.n_global);
    for (std::int64_t g = 0; g < ctx.n_global; ++g)
      x[g] = free_of_global_[g] >= 0 ? xf[free_of_global_[g]] : b[g];
    from_global(x, u);
  }

  // Matrix-free conjugate gradients on the constrained coarse system; all
  // iterates have zero Dirichlet rows.
  void coarse_cg(GridFunction& u, const GridFunction& f) {
    const Operator& A = *levels_.front().op;
    const LevelPtr& ctx = levels_.front().ctx;
    u.set_zero();
    GridFunction r(ctx), p(ctx), Ap(ctx);
    copy(f, r);
    zero_dirichlet(r);
    copy(r, p);
    double rr = dot(r, r);
    const double tol2 =
        opt_.coarse_rel_tol * opt_.coarse_rel_tol * std::max(rr, 0.0);
    const std::int64_t maxit = 10 * ctx->n_global + 100;
    for (std::int64_t it = 0; it < maxit && rr > tol2 && rr > 0.0; ++it) {
      A.apply(p, Ap, ApplyMode::constrained);
      const double pAp = dot(p, Ap);
      if (pAp <= 0.0)
        throw SolveError("coarse CG: operator not positive definite");
      const double alpha = rr / pAp;
      axpy(alpha, p, u);
      axpy(-alpha, Ap, r);
      const double rr_new = dot(r, r);
      const double beta = rr_new / rr;
      rr = rr_new;
      scale(p, beta);
      axpy(1.0, r, p);
    }
    if (rr > tol2)
      throw SolveError("coarse CG did not reach its tolerance");
  }

  MultigridOptions opt_;
  std::vector<Level> levels_;
  Eigen::MatrixXd coarse_free_;
  Eigen::LDLT<Eigen::MatrixXd> coarse_ldlt_;
  std::vector<std::int64_t> free_of_global_;
};

}  // namespace sfem

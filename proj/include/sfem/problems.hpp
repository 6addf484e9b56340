#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "sfem/analysis.hpp"
#include "sfem/multigrid.hpp"

namespace sfem {

// ---------------------------------------------------------------------------
// Manufactured benchmark problems
// ---------------------------------------------------------------------------

// A diffusion problem -div(K grad u) = f with known solution. `dirichlet`
// is the trace of `exact`; `exact_grad` feeds the H1 error norm.
struct BenchmarkProblem {
  std::string name;
  CoefficientField field;
  std::function<double(const Vec2&)> rhs;
  std::function<double(const Vec2&)> exact;
  std::function<Vec2(const Vec2&)> exact_grad;
  std::function<double(const Vec2&)> dirichlet;
};

// Scalar coefficient with mixed exponential/oscillatory content on the unit
// square. The solution sin(x) sinh(y) is harmonic, so f = -grad k . grad u.
inline BenchmarkProblem scalar_benchmark() {
  constexpr double pi = 3.14159265358979323846;
  BenchmarkProblem p;
  p.name = "scalar";
  p.field = scalar_coefficient([](const Vec2& x) {
    return std::exp(x.x() * x.y()) + std::sin(3.0 * pi * x.x() * x.y()) +
           std::cos(pi * x.x() * x.x() * x.y()) + 1.0;
  });
  p.exact = [](const Vec2& x) { return std::sin(x.x()) * std::sinh(x.y()); };
  p.exact_grad = [](const Vec2& x) {
    return Vec2(std::cos(x.x()) * std::sinh(x.y()),
                std::sin(x.x()) * std::cosh(x.y()));
  };
  p.rhs = [](const Vec2& v) {
    const double x = v.x(), y = v.y();
    const double kx = y * std::exp(x * y) +
                      3.0 * pi * y * std::cos(3.0 * pi * x * y) -
                      2.0 * pi * x * y * std::sin(pi * x * x * y);
    const double ky = x * std::exp(x * y) +
                      3.0 * pi * x * std::cos(3.0 * pi * x * y) -
                      pi * x * x * std::sin(pi * x * x * y);
    const double ux = std::cos(x) * std::sinh(y);
    const double uy = std::sin(x) * std::cosh(y);
    return -(kx * ux + ky * uy);
  };
  p.dirichlet = p.exact;
  return p;
}

// Uniformly elliptic polynomial tensor used by the mapped-domain benchmark.
inline Mat2 benchmark_tensor(const Vec2& v) {
  const double x2 = v.x() * v.x(), y2 = v.y() * v.y();
  Mat2 K;
  K(0, 0) = 3.0 * x2 + 2.0 * y2 + 1.0;
  K(0, 1) = -(x2 + y2);
  K(1, 0) = K(0, 1);
  K(1, 1) = 4.0 * x2 + 5.0 * y2 + 1.0;
  return K;
}

// f = -div(benchmark_tensor . grad(sin X sinh Y)) on the physical square.
inline double benchmark_tensor_rhs(const Vec2& v) {
  const double X = v.x(), Y = v.y();
  const double sX = std::sin(X), cX = std::cos(X);
  const double sY = std::sinh(Y), cY = std::cosh(Y);
  return -6.0 * X * cX * sY - (X * X + 3.0 * Y * Y) * sX * sY +
         2.0 * X * sX * cY + 2.0 * (X * X + Y * Y) * cX * cY +
         2.0 * Y * cX * sY - 10.0 * Y * sX * cY;
}

// Shear of the unit square: phi(x, y) = (x, y + a (2y - 1) sin^2(2 pi x)).
// The identity for a = 0; invertible for |a| < 1/2.
inline DomainMap square_perturbation_map(double a) {
  constexpr double pi = 3.14159265358979323846;
  DomainMap map;
  map.phi = [a](const Vec2& x) {
    const double s = std::sin(2.0 * pi * x.x());
    return Vec2(x.x(), x.y() + a * (2.0 * x.y() - 1.0) * s * s);
  };
  map.jacobian = [a](const Vec2& x) {
    const double s = std::sin(2.0 * pi * x.x());
    Mat2 J;
    J(0, 0) = 1.0;
    J(0, 1) = 0.0;
    J(1, 0) = 2.0 * pi * a * (2.0 * x.y() - 1.0) * std::sin(4.0 * pi * x.x());
    J(1, 1) = 1.0 + 2.0 * a * s * s;
    return J;
  };
  return map;
}

// Anisotropic tensor benchmark, optionally pulled back from the sheared
// square onto the reference square (a = 0 gives the physical problem
// unchanged): K0 = J^-1 K(phi) J^-T |det J|, f0 = f(phi) |det J|,
// u0 = u(phi), grad u0 = J^T (grad u)(phi).
inline BenchmarkProblem tensor_benchmark(double a = 0.0) {
  BenchmarkProblem p;
  p.name = a == 0.0 ? "tensor" : "tensor-mapped";
  const DomainMap map = square_perturbation_map(a);
  p.field = pullback_tensor(tensor_coefficient(&benchmark_tensor), map);
  p.exact = [map](const Vec2& x) {
    const Vec2 X = map.phi(x);
    return std::sin(X.x()) * std::sinh(X.y());
  };
  p.exact_grad = [map](const Vec2& x) -> Vec2 {
    const Vec2 X = map.phi(x);
    const Vec2 g(std::cos(X.x()) * std::sinh(X.y()),
                 std::sin(X.x()) * std::cosh(X.y()));
    return map.jacobian(x).transpose() * g;
  };
  p.rhs = [map](const Vec2& x) {
    const Mat2 J = map.jacobian(x);
    const double det = J(0, 0) * J(1, 1) - J(0, 1) * J(1, 0);
    return benchmark_tensor_rhs(map.phi(x)) * std::abs(det);
  };
  p.dirichlet = p.exact;
  return p;
}

// Largest relative deviation between the stated right-hand side and a
// central-difference divergence of the analytic flux K grad u, sampled at
// seeded random points of (0.05, 0.95)^2. Near-zero rhs values are compared
// against a floor of 1% of the largest sampled magnitude.
inline double rhs_fd_max_rel(const BenchmarkProblem& prob, int npoints,
                             std::uint64_t seed, double step = 1e-5) {
  if (!prob.field.scalar && !prob.field.tensor)
    throw Error("rhs_fd_max_rel: analytic coefficient required");
  auto flux = [&prob](const Vec2& x) -> Vec2 {
    const Vec2 g = prob.exact_grad(x);
    if (prob.field.kind == CoeffKind::scalar) return prob.field.scalar(x) * g;
    return prob.field.tensor(x) * g;
  };
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.05, 0.95);
  std::vector<Vec2> pts(npoints);
  double fmax = 0.0;
  for (auto& x : pts) {
    const double a = unif(rng), b = unif(rng);
    x = Vec2(a, b);
    fmax = std::max(fmax, std::abs(prob.rhs(x)));
  }
  double worst = 0.0;
  for (const auto& x : pts) {
    const double div =
        (flux(x + Vec2(step, 0)).x() - flux(x - Vec2(step, 0)).x() +
         flux(x + Vec2(0, step)).y() - flux(x - Vec2(0, step)).y()) /
        (2.0 * step);
    const double f = prob.rhs(x);
    worst = std::max(worst, std::abs(-div - f) /
                                std::max(std::abs(f), 0.01 * fmax));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Single benchmark solve
// ---------------------------------------------------------------------------

// Discretization and solver choices for one linear benchmark solve.
struct SolverSetup {
  OperatorKind kind = OperatorKind::surrogate;
  int q = 2;
  // Sampling level per grid level; the result is clamped to [2, m]. Defaults
  // to m_ls = m (sampling every interior point).
  std::function<int(int)> m_ls_of;
  bool zero_row_sum = true;
  bool symmetric_pairing = true;
  InterfaceMode interface_mode = InterfaceMode::pairs_exact;
  int quad_degree = 0;  // 0: max(2, q)
  int rhs_quad_degree = 4;
  MultigridOptions mg;

  int resolved_quad_degree() const {
    return quad_degree > 0 ? quad_degree : std::max(2, q);
  }
  int m_ls_at(int m) const {
    const int want = m_ls_of ? m_ls_of(m) : m;
    return std::max(2, std::min(m, want));
  }
};

struct BenchmarkRun {
  GridFunction u;  // solution including boundary values
  SolveStats stats;
  ErrorNorms err;
  std::int64_t dofs = 0;
  double fit_seconds = 0.0;    // stencil sampling + polynomial fitting
  double build_seconds = 0.0;  // hierarchy construction (fitting included)
  double solve_seconds = 0.0;
  bool fallback_exact = false;
  double max_sign_violation = 0.0;
};

// Builds a term operator for one grid level according to `s`.
inline Operator build_level_operator(const LevelPtr& ctx,
                                     const std::vector<TermSpec>& terms,
                                     const SolverSetup& s,
                                     OperatorDiagnostics* diag = nullptr) {
  if (s.kind == OperatorKind::exact)
    return Operator::exact(ctx, terms, s.resolved_quad_degree());
  SurrogateConfig cfg;
  cfg.q = s.q;
  cfg.m_ls = s.m_ls_at(ctx->m);
  cfg.zero_row_sum = s.zero_row_sum;
  cfg.symmetric_pairing = s.symmetric_pairing;
  return Operator::surrogate(ctx, terms, cfg, s.interface_mode,
                             s.resolved_quad_degree(), diag);
}

// Assembles the hierarchy, lifts the boundary data, and runs V-cycles until
// ||r|| <= rel_tol ||f||. Fit time excludes mesh/level setup shared by both
// operator kinds.
inline BenchmarkRun solve_benchmark(std::shared_ptr<const MacroMesh> mesh,
                                    int m, const BenchmarkProblem& prob,
                                    const SolverSetup& s) {
  BenchmarkRun run;
  // Coarse grids may not carry enough interior lattice points for the
  // requested fit and legitimately fall back to exact assembly; the
  // reported fallback / sign-violation flags describe the fine level only,
  // while fit time accumulates over the whole hierarchy.
  OperatorDiagnostics fine_diag;
  OperatorDiagnostics coarse_diag;
  const std::vector<TermSpec> terms{{1.0, Form::stiffness, prob.field, {}}};
  const double t0 = monotonic_seconds();
  Multigrid mg(std::move(mesh), m, s.mg, [&](const LevelPtr& ctx) {
    return build_level_operator(ctx, terms, s,
                                ctx->m == m ? &fine_diag : &coarse_diag);
  });
  run.build_seconds = monotonic_seconds() - t0;
  for (const auto* d : {&fine_diag, &coarse_diag})
    for (const auto& mac : d->by_macro)
      run.fit_seconds += mac.sampling_seconds + mac.fitting_seconds;
  run.fallback_exact = fine_diag.fallback_exact;
  run.max_sign_violation = fine_diag.max_sign_violation();

  const LevelPtr& ctx = mg.fine_ctx();
  GridFunction lift = boundary_lift(ctx, prob.dirichlet);
  GridFunction f = load_vector(ctx, prob.rhs, s.rhs_quad_degree);
  homogenize_rhs(mg.fine_op(), lift, f);

  run.u = GridFunction(ctx);
  const double t1 = monotonic_seconds();
  run.stats = mg.solve(run.u, f);
  run.solve_seconds = monotonic_seconds() - t1;

  axpy(1.0, lift, run.u);
  run.err = error_norms(run.u, prob.exact, prob.exact_grad);
  run.dofs = ctx->n_global;
  return run;
}

// ---------------------------------------------------------------------------
// Mesh-refinement convergence study
// ---------------------------------------------------------------------------

// One study row: macro mesh refined k times, lattice depth m_total - k, so
// the fine grid spacing stays fixed while the macro size H shrinks.
struct StudyRow {
  int k = 0;
  int m = 0;
  double H = 0.0;
  std::int64_t dofs = 0;
  ErrorNorms err;           // operator under study
  ErrorNorms err_standard;  // exact-operator reference (when run)
  double fit_seconds = 0.0;
  double solve_seconds = 0.0;
  double standard_solve_seconds = 0.0;
  SolveStats stats;
  SolveStats standard_stats;
  bool fallback_exact = false;
  double max_sign_violation = 0.0;
};

struct StudyOptions {
  int macro_levels = 3;  // number of rows
  int m_total = 8;       // row k solves at lattice depth m_total - k
  SolverSetup setup;
  bool run_standard = true;  // reference solve with the exact operator
};

inline std::vector<StudyRow> convergence_study(
    std::shared_ptr<const MacroMesh> base, const BenchmarkProblem& prob,
    const StudyOptions& o) {
  if (o.macro_levels < 1) throw ConfigError("study needs at least one row");
  std::vector<StudyRow> rows;
  std::shared_ptr<const MacroMesh> mesh = std::move(base);
  for (int k = 0; k < o.macro_levels; ++k) {
    if (k > 0) mesh = std::make_shared<MacroMesh>(refine_macro_mesh(*mesh));
    StudyRow row;
    row.k = k;
    row.m = o.m_total - k;
    if (row.m < std::max(2, o.setup.mg.m_coarse))
      throw ConfigError("study row " + std::to_string(k) +
                        " underflows the coarse grid: m = " +
                        std::to_string(row.m));
    row.H = mesh->mesh_size;

    BenchmarkRun sub = solve_benchmark(mesh, row.m, prob, o.setup);
    row.dofs = sub.dofs;
    row.err = sub.err;
    row.fit_seconds = sub.fit_seconds;
    row.solve_seconds = sub.solve_seconds;
    row.stats = sub.stats;
    row.fallback_exact = sub.fallback_exact;
    row.max_sign_violation = sub.max_sign_violation;

    if (o.run_standard) {
      SolverSetup ref = o.setup;
      ref.kind = OperatorKind::exact;
      BenchmarkRun std_run = solve_benchmark(mesh, row.m, prob, ref);
      row.err_standard = std_run.err;
      row.standard_solve_seconds = std_run.solve_seconds;
      row.standard_stats = std_run.stats;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

// Flattens study rows into the CSV schema. eoc fields stay empty on the
// first row; rtts (relative time to solution) is fit + solve time over the
// exact-operator solve time, or 0 when no reference solve was run.
inline std::vector<ConvergenceRow> study_table(
    const std::vector<StudyRow>& rows, bool use_standard_errors = false) {
  std::vector<ConvergenceRow> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const StudyRow& r = rows[i];
    const ErrorNorms& e = use_standard_errors ? r.err_standard : r.err;
    ConvergenceRow c;
    c.H_ratio = r.H / rows.front().H;
    c.rel_l2 = e.l2_rel;
    c.rel_h1 = e.h1_rel;
    c.dofs = r.dofs;
    c.rtts = r.standard_solve_seconds > 0.0
                 ? (r.fit_seconds + r.solve_seconds) / r.standard_solve_seconds
                 : 0.0;
    if (i > 0) {
      const ErrorNorms& p =
          use_standard_errors ? rows[i - 1].err_standard : rows[i - 1].err;
      const double dh = std::log(rows[i - 1].H / r.H);
      c.eoc_l2 = std::log(p.l2_rel / e.l2_rel) / dh;
      c.eoc_h1 = std::log(p.h1_rel / e.h1_rel) / dh;
    }
    out.push_back(c);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sampling-level study
// ---------------------------------------------------------------------------

// Convergence of the surrogate solution as the sampling spacing H_LS grows
// relative to the grid spacing h: every study row samples at m_LS = m - c.
struct SamplingStudyRow {
  int offset = 0;          // c: levels between grid and sampling lattice
  double h_ls_over_h = 1;  // 2^c
  double eoc_l2 = 0.0;
  double eoc_h1 = 0.0;
  double rel_l2_first = 0.0;  // coarsest-H row
  double rel_l2_last = 0.0;   // finest-H row
};

inline std::vector<SamplingStudyRow> sampling_level_study(
    std::shared_ptr<const MacroMesh> base, const BenchmarkProblem& prob,
    const StudyOptions& base_options, const std::vector<int>& offsets) {
  std::vector<SamplingStudyRow> out;
  for (int c : offsets) {
    StudyOptions o = base_options;
    o.setup.kind = OperatorKind::surrogate;
    o.setup.m_ls_of = [c](int m) { return m - c; };
    o.run_standard = false;
    const std::vector<StudyRow> rows = convergence_study(base, prob, o);
    const std::vector<ConvergenceRow> table = study_table(rows);
    SamplingStudyRow s;
    s.offset = c;
    s.h_ls_over_h = std::ldexp(1.0, c);
    s.eoc_l2 = table.back().eoc_l2.value_or(0.0);
    s.eoc_h1 = table.back().eoc_h1.value_or(0.0);
    s.rel_l2_first = table.front().rel_l2;
    s.rel_l2_last = table.back().rel_l2;
    out.push_back(s);
  }
  return out;
}

// ---------------------------------------------------------------------------
// p-Laplacian heat flow
// ---------------------------------------------------------------------------

// Value of a grid function at a macro-mesh vertex.
inline double vertex_value(const GridFunction& u, int vertex) {
  const LevelContext& ctx = *u.ctx();
  const auto& tris = ctx.mesh->vertex_tris.at(vertex);
  if (tris.empty()) throw Error("vertex_value: isolated vertex");
  const int t = tris.front();
  const MacroTriangle& tri = ctx.mesh->tris[t];
  for (int c = 0; c < 3; ++c) {
    if (tri.v[c] != vertex) continue;
    const auto [i, j] = corner_lattice_point(ctx.m, c);
    return u.data(t)[lattice_index(ctx.m, i, j)];
  }
  throw Error("vertex_value: vertex not on its incident triangle");
}

// Index of the vertex closest to a point (used to find the disk center).
inline int nearest_vertex(const MacroMesh& mesh, const Vec2& x) {
  int best = 0;
  double dist = std::numeric_limits<double>::max();
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
    const double d = (mesh.vertices[v] - x).norm();
    if (d < dist) {
      dist = d;
      best = v;
    }
  }
  return best;
}

// Implicit Euler + Picard for  du/dt - div(|grad u|^(p-2) grad u) = f  with
// homogeneous Dirichlet data. Each Picard step freezes the coefficient at
// the previous iterate and solves
//   (M + dt A(u_prev)) u = M u_old + dt M f
// with a fixed number of V-cycles; the stiffness term is refit every
// iteration while the mass surrogate is fitted once and reused.
struct PLaplacianOptions {
  double p = 3.0;
  double dt = 1e-2;
  double t_end = 1.0;
  double f_const = 4.5;
  std::function<double(const Vec2&)> initial;  // default 0.1 (1 - |x|^2)
  double picard_tol = 1e-3;                    // on ||du|| / ||u||
  int picard_max = 50;
  int cycles_per_solve = 5;
  SolverSetup setup;  // interface_mode should stay rows_exact for surrogates
  std::function<void(int step, int iters, double increment, double center)>
      on_step;

  PLaplacianOptions() {
    setup.q = 6;
    setup.interface_mode = InterfaceMode::rows_exact;
    setup.m_ls_of = [](int m) { return m - 2; };
    setup.quad_degree = 2;
  }
};

struct PLaplacianStepInfo {
  int step = 0;
  int picard_iters = 0;
  double last_increment = 0.0;
  double center_value = 0.0;
};

struct PLaplacianResult {
  GridFunction u;  // final state
  std::vector<PLaplacianStepInfo> steps;
  double max_sign_violation = 0.0;
  double fit_seconds = 0.0;
  double total_seconds = 0.0;
  int center_vertex = 0;
};

inline PLaplacianResult plaplacian_run(std::shared_ptr<const MacroMesh> mesh,
                                       int m, const PLaplacianOptions& o) {
  const double t_begin = monotonic_seconds();
  PLaplacianResult res;
  res.center_vertex = nearest_vertex(*mesh, Vec2(0.0, 0.0));

  const std::function<double(const Vec2&)> u_init =
      o.initial ? o.initial
                : [](const Vec2& x) { return 0.1 * (1.0 - x.squaredNorm()); };

  // Per-level |grad u|^(p-2) fields for the next operator build and the
  // once-fitted mass surrogates, both keyed by lattice depth.
  std::map<int, std::shared_ptr<const ElementwiseCoefficient>> grad_fields;
  std::map<int, std::vector<MacroSurrogate>> mass_fits;
  double fit_acc = 0.0;
  double sign_acc = 0.0;

  auto builder = [&](const LevelPtr& ctx) {
    std::shared_ptr<const ElementwiseCoefficient> w;
    if (auto it = grad_fields.find(ctx->m); it != grad_fields.end()) {
      w = it->second;
    } else {
      GridFunction u0(ctx);
      u0.set_nodal(u_init);
      zero_dirichlet(u0);
      w = gradient_magnitude_field(u0, o.p);
    }
    std::vector<TermSpec> terms{
        {1.0, Form::mass, constant_coefficient(1.0), {}},
        {o.dt, Form::stiffness, cellwise_coefficient(w), {}}};
    if (o.setup.kind == OperatorKind::surrogate) {
      if (auto it = mass_fits.find(ctx->m); it != mass_fits.end())
        terms[0].prefit = it->second;
    }
    OperatorDiagnostics diag;
    Operator op = build_level_operator(ctx, terms, o.setup, &diag);
    for (const auto& mac : diag.by_macro)
      fit_acc += mac.sampling_seconds + mac.fitting_seconds;
    sign_acc = std::max(sign_acc, diag.max_sign_violation());
    if (o.setup.kind == OperatorKind::surrogate &&
        op.kind() == OperatorKind::surrogate &&
        mass_fits.find(ctx->m) == mass_fits.end())
      mass_fits.emplace(ctx->m, op.term_surrogates(0));
    return op;
  };

  Multigrid mg(mesh, m, o.setup.mg, builder);
  const LevelPtr& fine = mg.fine_ctx();

  // Standalone mass operator for the right-hand side M u_old + dt M f. The
  // surrogate run reuses the mass fit of the system operator so both sides
  // see the same mass approximation.
  std::vector<TermSpec> mass_terms{
      {1.0, Form::mass, constant_coefficient(1.0), {}}};
  if (o.setup.kind == OperatorKind::surrogate) {
    if (auto it = mass_fits.find(fine->m); it != mass_fits.end())
      mass_terms[0].prefit = it->second;
  }
  const Operator mass_op = build_level_operator(fine, mass_terms, o.setup);

  // State, Picard iterate, and scratch storage per level for injection.
  GridFunction u_old(fine);
  u_old.set_nodal(u_init);
  zero_dirichlet(u_old);
  std::vector<GridFunction> u_lv;
  for (int l = 0; l < mg.num_levels(); ++l) u_lv.emplace_back(mg.ctx(l));

  // Constant-in-time mass forcing M f (surrogate mass in surrogate runs).
  GridFunction f_nodal(fine), Mf(fine);
  f_nodal.fill(o.f_const);
  mass_op.apply(f_nodal, Mf, ApplyMode::extended);
  zero_dirichlet(Mf);

  auto refresh_grad_fields = [&](const GridFunction& u_ref) {
    const int top = mg.num_levels() - 1;
    copy(u_ref, u_lv[top]);
    for (int l = top - 1; l >= 0; --l) inject(u_lv[l + 1], u_lv[l]);
    for (int l = 0; l <= top; ++l)
      grad_fields[mg.ctx(l)->m] = gradient_magnitude_field(u_lv[l], o.p);
  };

  const int nsteps = int(std::llround(o.t_end / o.dt));
  GridFunction b(fine), Mu(fine), u_it(fine), u_new(fine), diff(fine);
  for (int step = 1; step <= nsteps; ++step) {
    mass_op.apply(u_old, Mu, ApplyMode::extended);
    copy(Mu, b);
    axpy(o.dt, Mf, b);
    zero_dirichlet(b);

    copy(u_old, u_it);
    double incr = 0.0;
    int iters = 0;
    for (int l = 1; l <= o.picard_max; ++l) {
      refresh_grad_fields(u_it);
      mg.rebuild_operators(builder);
      copy(u_it, u_new);
      for (int c = 0; c < o.cycles_per_solve; ++c) mg.v_cycle(u_new, b);
      copy(u_new, diff);
      axpy(-1.0, u_it, diff);
      const double denom = norm2(u_new);
      incr = denom > 0.0 ? norm2(diff) / denom : norm2(diff);
      copy(u_new, u_it);
      iters = l;
      if (incr <= o.picard_tol) break;
      if (l == o.picard_max)
        throw SolveError(
            "p-laplacian: Picard stalled at step " + std::to_string(step) +
            " after " + std::to_string(l) + " iterations, increment " +
            std::to_string(incr) + ", state norm " + std::to_string(denom));
    }
    copy(u_it, u_old);

    PLaplacianStepInfo info;
    info.step = step;
    info.picard_iters = iters;
    info.last_increment = incr;
    info.center_value = vertex_value(u_old, res.center_vertex);
    if (o.on_step)
      o.on_step(step, iters, incr, info.center_value);
    res.steps.push_back(info);
  }

  res.u = std::move(u_old);
  res.max_sign_violation = sign_acc;
  res.fit_seconds = fit_acc;
  res.total_seconds = monotonic_seconds() - t_begin;
  return res;
}

// Euclidean relative difference over all grid points; both functions must
// live on structurally identical levels (separately built hierarchies over
// the same mesh compare fine).
inline double relative_nodal_diff(const GridFunction& a,
                                  const GridFunction& b) {
  const LevelContext& ca = *a.ctx();
  const LevelContext& cb = *b.ctx();
  if (ca.m != cb.m || ca.n_global != cb.n_global ||
      ca.mesh->tris.size() != cb.mesh->tris.size())
    throw Error("relative_nodal_diff: incompatible levels");
  GridFunction d(a.ctx());
  copy(a, d);
  axpy(-1.0, b, d);
  const double na = norm2(a);
  return na > 0.0 ? norm2(d) / na : norm2(d);
}

// ---------------------------------------------------------------------------
// Matrix-vector throughput benchmark
// ---------------------------------------------------------------------------

struct MvpBenchResult {
  int m = 0;
  int q = 0;
  std::int64_t dofs = 0;
  double standard_seconds = 0.0;  // median apply time
  double surrogate_seconds = 0.0;
  double speedup = 0.0;  // standard / surrogate
  double setup_seconds = 0.0;
  double max_rel_diff = 0.0;  // surrogate apply vs its assembled matrix
  bool checked = false;       // correctness comparison was run (m <= 8)
};

// Median apply times of the exact and surrogate operators on one level.
// One warm-up apply per operator is excluded from the medians.
inline MvpBenchResult bench_mvp(std::shared_ptr<const MacroMesh> mesh, int m,
                                const BenchmarkProblem& prob,
                                const SolverSetup& setup, int reps = 5) {
  if (reps < 5) throw ConfigError("bench_mvp: need at least 5 repetitions");
  MvpBenchResult res;
  res.m = m;
  res.q = setup.q;

  const LevelPtr ctx = build_level(std::move(mesh), m);
  res.dofs = ctx->n_global;
  const std::vector<TermSpec> terms{{1.0, Form::stiffness, prob.field, {}}};
  const Operator exact_op =
      Operator::exact(ctx, terms, setup.resolved_quad_degree());

  OperatorDiagnostics diag;
  SolverSetup surr = setup;
  surr.kind = OperatorKind::surrogate;
  const double t0 = monotonic_seconds();
  const Operator surr_op = build_level_operator(ctx, terms, surr, &diag);
  res.setup_seconds = monotonic_seconds() - t0;

  GridFunction u(ctx), v(ctx);
  u.set_nodal([](const Vec2& x) {
    return std::sin(2.3 * x.x() + 0.7) * std::cos(1.9 * x.y()) + 0.3 * x.x();
  });

  auto median_apply = [&](const Operator& op) {
    op.apply(u, v, ApplyMode::constrained);  // warm-up
    std::vector<double> times(reps);
    for (int r = 0; r < reps; ++r) {
      const double t = monotonic_seconds();
      op.apply(u, v, ApplyMode::constrained);
      times[r] = monotonic_seconds() - t;
    }
    std::sort(times.begin(), times.end());
    const int h = reps / 2;
    return reps % 2 == 1 ? times[h] : 0.5 * (times[h - 1] + times[h]);
  };

  res.standard_seconds = median_apply(exact_op);
  res.surrogate_seconds = median_apply(surr_op);
  res.speedup = res.surrogate_seconds > 0.0
                    ? res.standard_seconds / res.surrogate_seconds
                    : 0.0;

  if (m <= 8) {
    res.checked = true;
    const Eigen::SparseMatrix<double> A =
        assemble(surr_op, ApplyMode::constrained);
    surr_op.apply(u, v, ApplyMode::constrained);
    const Eigen::VectorXd ref = A * to_global(u);
    const Eigen::VectorXd got = to_global(v);
    const double scale = std::max(1e-300, ref.cwiseAbs().maxCoeff());
    res.max_rel_diff = (got - ref).cwiseAbs().maxCoeff() / scale;
  }
  return res;
}

}  // namespace sfem

// Acceptance checks for the surrogate-operator library. Each criterion is
// self-contained, prints exactly one [PASS]/[FAIL] line with its measured
// numbers, and pins its tolerances in code. Run a single criterion with
// `acceptance --criterion N`, or everything by default.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <sfem/sfem.hpp>

namespace {

using namespace sfem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string sci(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.3e", v);
  return buf;
}

std::string fixed2(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::shared_ptr<MacroMesh> square2() {
  return std::make_shared<MacroMesh>(make_unit_square_mesh(2));
}

std::shared_ptr<MacroMesh> square4() {
  return std::make_shared<MacroMesh>(make_unit_square_mesh(4));
}

std::shared_ptr<MacroMesh> disk16() {
  return std::make_shared<MacroMesh>(make_disk_mesh(16));
}

std::vector<TermSpec> stiffness_terms(const CoefficientField& f) {
  return {{1.0, Form::stiffness, f, {}}};
}

double sparse_max_diff(const Eigen::SparseMatrix<double>& a,
                       const Eigen::SparseMatrix<double>& b) {
  const Eigen::SparseMatrix<double> d = a - b;
  return max_abs_entry(d);
}

// --------------------------------------------------------------------------
// 1. Stencil entries of a degree-q coefficient are themselves polynomials of
//    degree q in the row's base point, so a degree-q fit must reproduce the
//    assembled operator to rounding.
Outcome criterion1() {
  const auto mesh = square2();
  bool pass = true;
  std::string detail = "m=5, m_ls=3, tol 1e-11 rel:";
  for (int q = 1; q <= 3; ++q) {
    const CoefficientField field = scalar_coefficient([q](const Vec2& v) {
      const double x = v.x(), y = v.y();
      double k = 1.2 + 0.5 * x - 0.3 * y;
      if (q >= 2) k += 0.8 * x * x - 0.4 * x * y + 0.6 * y * y;
      if (q >= 3)
        k += 0.3 * x * x * x - 0.2 * x * x * y + 0.25 * x * y * y -
             0.15 * y * y * y;
      return k;
    });
    const LevelPtr ctx = build_level(mesh, 5);
    const auto terms = stiffness_terms(field);
    const int qd = std::max(2, q);
    const Operator exact_op = Operator::exact(ctx, terms, qd);
    SurrogateConfig cfg;
    cfg.q = q;
    cfg.m_ls = 3;
    OperatorDiagnostics diag;
    const Operator surr_op = Operator::surrogate(
        ctx, terms, cfg, InterfaceMode::pairs_exact, qd, &diag);
    if (diag.fallback_exact) {
      pass = false;
      detail += " q=" + std::to_string(q) + " fell back to exact;";
      continue;
    }
    const auto A = assemble(exact_op, ApplyMode::extended);
    const auto S = assemble(surr_op, ApplyMode::extended);
    const double scale = max_abs_entry(A);
    const double rel = sparse_max_diff(A, S) / scale;
    pass = pass && rel <= 1e-11;
    detail += " q=" + std::to_string(q) + " rel=" + sci(rel);
  }
  return {pass, detail};
}

// --------------------------------------------------------------------------
// 2. The matrix-free apply agrees with the assembled matrix column by column
//    (every unit vector) on small levels of both mesh families.
Outcome criterion2() {
  const BenchmarkProblem prob = scalar_benchmark();
  const auto terms = stiffness_terms(prob.field);
  bool pass = true;
  std::string detail = "unit-vector probe, tol 1e-13 rel:";
  const std::vector<std::pair<const char*, std::shared_ptr<MacroMesh>>>
      meshes{{"square", square4()}, {"disk", disk16()}};
  for (const auto& [name, mesh] : meshes) {
    double worst = 0.0;
    for (int m = 2; m <= 4; ++m) {
      const LevelPtr ctx = build_level(mesh, m);
      SolverSetup s;
      s.q = 2;
      const Operator op = build_level_operator(ctx, terms, s);
      const auto A = assemble(op, ApplyMode::constrained);
      const double scale = max_abs_entry(A);
      GridFunction u(ctx), v(ctx);
      Eigen::VectorXd x(ctx->n_global);
      for (std::int64_t j = 0; j < ctx->n_global; ++j) {
        x.setZero();
        x[j] = 1.0;
        from_global(x, u);
        op.apply(u, v, ApplyMode::constrained);
        const Eigen::VectorXd got = to_global(v);
        const Eigen::VectorXd col = A.col(j);
        worst = std::max(worst, (got - col).cwiseAbs().maxCoeff() / scale);
      }
    }
    pass = pass && worst <= 1e-13;
    detail += std::string(" ") + name + " m=2..4 rel=" + sci(worst);
  }
  return {pass, detail};
}

// --------------------------------------------------------------------------
// 3. Sorted eigenvalues shift by no more than the perturbation norm: 1000
//    seeded random symmetric pairs plus the assembled standard/surrogate
//    benchmark pair, inf-norm and sparsity-scaled max-norm bounds.
Outcome criterion3() {
  std::mt19937_64 rng(424242u);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  int violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int d = 2 + int(rng() % 19ull);
    Eigen::MatrixXd r(d, d), p(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        r(i, j) = unif(rng);
        p(i, j) = unif(rng);
      }
    const Eigen::MatrixXd a = 0.5 * (r + r.transpose());
    const Eigen::MatrixXd b = a + 0.005 * (p + p.transpose());
    if (!spectral_bound_check(a, b).pass()) ++violations;
  }

  const BenchmarkProblem prob = scalar_benchmark();
  const auto terms = stiffness_terms(prob.field);
  const LevelPtr ctx = build_level(square2(), 4);
  const Operator exact_op = Operator::exact(ctx, terms, 2);
  SurrogateConfig cfg;
  cfg.q = 2;
  cfg.m_ls = 3;
  const Operator surr_op =
      Operator::surrogate(ctx, terms, cfg, InterfaceMode::pairs_exact, 2);
  const Eigen::MatrixXd M(assemble(exact_op, ApplyMode::extended));
  const Eigen::MatrixXd N(assemble(surr_op, ApplyMode::extended));
  const SpectralReport rep = spectral_bound_check(M, N);

  const bool pass = violations == 0 && rep.pass();
  return {pass,
          "1000 random pairs dims 2..20: " + std::to_string(violations) +
              " violations; benchmark pair m=4 (" +
              std::to_string(M.rows()) + " dofs): gap " + sci(rep.max_gap) +
              " vs inf-bound " + sci(rep.norm_inf_diff) + " and sparse bound " +
              sci(rep.row_nonzeros * rep.norm_max_diff) +
              (rep.pass() ? " [ok]" : " [violated]")};
}

// --------------------------------------------------------------------------
// 4. With the fine grid held fixed, halving the macro size must shrink the
//    largest interior stencil deviation at order q+1 (fit over a domain of
//    size H with a degree-q polynomial).
Outcome criterion4() {
  const BenchmarkProblem prob = scalar_benchmark();
  const auto terms = stiffness_terms(prob.field);
  bool pass = true;
  std::string detail = "rows m=7,6,5 on H, H/2, H/4 macros:";
  for (int q = 1; q <= 2; ++q) {
    std::shared_ptr<const MacroMesh> mesh = square2();
    double diffs[3] = {0.0, 0.0, 0.0};
    for (int k = 0; k < 3; ++k) {
      if (k > 0) mesh = std::make_shared<MacroMesh>(refine_macro_mesh(*mesh));
      const int m = 7 - k;
      const LevelPtr ctx = build_level(mesh, m);
      const int qd = std::max(2, q);
      const Operator exact_op = Operator::exact(ctx, terms, qd);
      SurrogateConfig cfg;
      cfg.q = q;
      cfg.m_ls = m;
      const Operator surr_op = Operator::surrogate(
          ctx, terms, cfg, InterfaceMode::pairs_exact, qd);
      diffs[k] = max_norm_diff(exact_op, surr_op).max_abs;
    }
    // Least-squares slope over three halvings = endpoint log-ratio / 2.
    const double slope = std::log2(diffs[0] / diffs[2]) / 2.0;
    const bool in_band = slope >= q + 0.6 && slope <= q + 1.4;
    pass = pass && in_band;
    detail += " q=" + std::to_string(q) + ": " + sci(diffs[0]) + " -> " +
              sci(diffs[1]) + " -> " + sci(diffs[2]) + ", slope " +
              fixed2(slope) + " (want " + std::to_string(q + 1) + "+-0.4)";
    if (q == 1) detail += ";";
  }
  return {pass, detail};
}

// --------------------------------------------------------------------------
// 5. Macro-refinement study of the scalar benchmark at a fixed fine grid:
//    the surrogate-induced error must decay at order q+2 in L2 and q+1 in
//    H1 for q=1, and order q+1 in H1 for q=2.
Outcome criterion5() {
  bool pass = true;
  std::string detail = "3 rows, m_total=8, m_ls=m:";
  for (int q = 1; q <= 2; ++q) {
    StudyOptions o;
    o.macro_levels = 3;
    o.m_total = 8;
    o.setup.kind = OperatorKind::surrogate;
    o.setup.q = q;
    o.run_standard = false;
    const auto rows = convergence_study(square2(), scalar_benchmark(), o);
    for (const StudyRow& r : rows)
      if (!r.stats.converged) {
        pass = false;
        detail += " q=" + std::to_string(q) + " row " + std::to_string(r.k) +
                  " did not converge;";
      }
    const auto table = study_table(rows);
    const double el2 = table.back().eoc_l2.value_or(0.0);
    const double eh1 = table.back().eoc_h1.value_or(0.0);
    if (q == 1) {
      pass = pass && el2 >= 2.7 && el2 <= 3.3 && eh1 >= 1.7 && eh1 <= 2.3;
      detail += " q=1: eoc_l2 " + fixed2(el2) + " (want 3.0+-0.3), eoc_h1 " +
                fixed2(eh1) + " (want 2.0+-0.3);";
    } else {
      pass = pass && eh1 >= 2.6 && eh1 <= 3.4;
      detail += " q=2: eoc_h1 " + fixed2(eh1) + " (want 3.0+-0.4)";
    }
  }
  return {pass, detail};
}

// --------------------------------------------------------------------------
// 6. Sampling-lattice coarsening trades accuracy for setup cost gracefully:
//    near-optimal rates when sampling every interior point, gradual
//    degradation up to a 64x coarser sampling lattice.
Outcome criterion6() {
  StudyOptions base;
  base.macro_levels = 2;
  base.m_total = 10;
  base.setup.q = 1;
  base.run_standard = false;
  const std::vector<int> offsets{0, 1, 2, 3, 4, 5, 6};
  const auto rows =
      sampling_level_study(square2(), scalar_benchmark(), base, offsets);

  bool pass = rows.front().eoc_l2 >= 2.7 && rows.back().eoc_l2 >= 1.7;
  std::string detail = "q=1, rows m=10,9, eoc_l2 by H_LS/h:";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i > 0 && rows[i].eoc_l2 > rows[i - 1].eoc_l2 + 0.1) pass = false;
    detail += " " + std::to_string(int(rows[i].h_ls_over_h)) + "x=" +
              fixed2(rows[i].eoc_l2);
  }
  detail += " (want >=2.7 at 1x, >=1.7 at 64x, non-increasing +-0.1)";
  return {pass, detail};
}

// --------------------------------------------------------------------------
// 7. The pulled-back tensor benchmark at a=0 is bit-for-bit the physical
//    problem, and the sheared variant still converges at the expected H1
//    order for q=1.
Outcome criterion7() {
  BenchmarkProblem plain;
  plain.name = "tensor-direct";
  plain.field = tensor_coefficient(&benchmark_tensor);
  plain.exact = [](const Vec2& x) {
    return std::sin(x.x()) * std::sinh(x.y());
  };
  plain.exact_grad = [](const Vec2& x) {
    return Vec2(std::cos(x.x()) * std::sinh(x.y()),
                std::sin(x.x()) * std::cosh(x.y()));
  };
  plain.rhs = [](const Vec2& x) { return benchmark_tensor_rhs(x); };
  plain.dirichlet = plain.exact;

  SolverSetup s;
  s.q = 2;
  const auto mesh = square2();
  const BenchmarkRun direct = solve_benchmark(mesh, 5, plain, s);
  const BenchmarkRun mapped = solve_benchmark(mesh, 5, tensor_benchmark(0.0), s);
  const double dl2 = std::abs(direct.err.l2_rel - mapped.err.l2_rel);
  const double dh1 = std::abs(direct.err.h1_rel - mapped.err.h1_rel);
  bool pass = direct.stats.converged && mapped.stats.converged &&
              dl2 <= 1e-12 && dh1 <= 1e-12;
  std::string detail = "a=0 vs direct tensor at m=5: |d l2|=" + sci(dl2) +
                       ", |d h1|=" + sci(dh1) + " (tol 1e-12)";

  StudyOptions o;
  o.macro_levels = 3;
  o.m_total = 8;
  o.setup.kind = OperatorKind::surrogate;
  o.setup.q = 1;
  o.run_standard = false;
  const auto rows = convergence_study(square2(), tensor_benchmark(0.1), o);
  for (const StudyRow& r : rows) pass = pass && r.stats.converged;
  const auto table = study_table(rows);
  const double eh1 = table.back().eoc_h1.value_or(0.0);
  pass = pass && eh1 >= 1.6 && eh1 <= 2.4;
  detail += "; sheared map a=0.1, q=1: eoc_h1 " + fixed2(eh1) +
            " (want 2.0+-0.4)";
  return {pass, detail};
}

// --------------------------------------------------------------------------
// 8. V-cycle counts to a 1e-11 residual reduction are insensitive to both
//    the fine-grid depth and the standard/surrogate choice.
Outcome criterion8() {
  const auto mesh = square2();
  const BenchmarkProblem prob = scalar_benchmark();
  int cyc_exact[3] = {0, 0, 0}, cyc_surr[3] = {0, 0, 0};
  bool pass = true;
  for (int i = 0; i < 3; ++i) {
    const int m = 5 + i;
    SolverSetup e;
    e.kind = OperatorKind::exact;
    const BenchmarkRun re = solve_benchmark(mesh, m, prob, e);
    SolverSetup s;
    s.q = 2;
    s.m_ls_of = [](int mm) { return mm - 2; };
    const BenchmarkRun rs = solve_benchmark(mesh, m, prob, s);
    pass = pass && re.stats.converged && rs.stats.converged;
    cyc_exact[i] = re.stats.cycles;
    cyc_surr[i] = rs.stats.cycles;
    pass = pass && std::abs(cyc_exact[i] - cyc_surr[i]) <= 3;
  }
  auto spread = [](const int* c) {
    return *std::max_element(c, c + 3) - *std::min_element(c, c + 3);
  };
  pass = pass && spread(cyc_exact) <= 3 && spread(cyc_surr) <= 3;
  std::string detail = "cycles to rel 1e-11, m=5,6,7: standard";
  for (int i = 0; i < 3; ++i)
    detail += " " + std::to_string(cyc_exact[i]);
  detail += ", surrogate";
  for (int i = 0; i < 3; ++i)
    detail += " " + std::to_string(cyc_surr[i]);
  detail += " (pairwise and spread <= 3)";
  return {pass, detail};
}

// --------------------------------------------------------------------------
// 9. Assembled surrogate hygiene: zero row sums at interior lattice points
//    (the closure) and exact symmetry under paired fitting.
Outcome criterion9() {
  const BenchmarkProblem prob = scalar_benchmark();
  const auto terms = stiffness_terms(prob.field);
  const LevelPtr ctx = build_level(square2(), 5);
  SurrogateConfig cfg;
  cfg.q = 2;
  cfg.m_ls = 3;
  const Operator surr_op =
      Operator::surrogate(ctx, terms, cfg, InterfaceMode::pairs_exact, 2);
  const auto S = assemble(surr_op, ApplyMode::extended);
  const double scale = max_abs_entry(S);

  const Eigen::SparseMatrix<double> St = S.transpose();
  const double asym = sparse_max_diff(S, St) / scale;

  const Eigen::VectorXd row_sum =
      S * Eigen::VectorXd::Ones(S.cols());
  double worst = 0.0;
  const int n = ctx->n();
  for (std::size_t t = 0; t < ctx->mesh->tris.size(); ++t)
    for (int j = 1; j <= n - 2; ++j)
      for (int i = 1; i <= n - j - 1; ++i) {
        const auto g = ctx->global_id[t][lattice_index(ctx->m, i, j)];
        worst = std::max(worst, std::abs(row_sum[g]) / scale);
      }

  const bool pass = asym <= 1e-12 && worst <= 1e-12;
  return {pass, "m=5, q=2, m_ls=3: interior row sums " + sci(worst) +
                    ", asymmetry " + sci(asym) + " (tol 1e-12 rel)"};
}

// --------------------------------------------------------------------------
// 10. Degenerate-diffusion heat flow (p=3) on the polygonal disk: Picard
//     converges every implicit step, the center heats monotonically toward
//     the steady profile, and the surrogate run tracks the standard one.
Outcome criterion10() {
  const auto mesh = disk16();
  PLaplacianOptions o;  // p=3, dt=1e-2, T=1, q=6, m_ls=m-2, rows-exact
  const PLaplacianResult surr = plaplacian_run(mesh, 6, o);
  PLaplacianOptions oe = o;
  oe.setup.kind = OperatorKind::exact;
  const PLaplacianResult standard = plaplacian_run(mesh, 6, oe);

  bool pass = surr.steps.size() == 100 && standard.steps.size() == 100;
  double worst_increment = 0.0, worst_dip = 0.0;
  int max_iters = 0;
  for (std::size_t k = 0; k < surr.steps.size(); ++k) {
    const auto& s = surr.steps[k];
    worst_increment = std::max(worst_increment, s.last_increment);
    max_iters = std::max(max_iters, s.picard_iters);
    if (k > 0)
      worst_dip = std::max(
          worst_dip, surr.steps[k - 1].center_value - s.center_value);
  }
  const double center0 = surr.steps.front().center_value;
  const double center_end = surr.steps.back().center_value;
  // Monotone up to the Picard tolerance, which bounds the solver wobble.
  pass = pass && worst_increment < 1e-3;
  pass = pass && worst_dip <= 1e-3 && center_end > center0;
  pass = pass && center_end >= 0.9 && center_end <= 1.05;
  const double diff = relative_nodal_diff(standard.u, surr.u);
  pass = pass && diff <= 1e-2;
  return {pass,
          "100 steps, max picard " + std::to_string(max_iters) +
              ", max increment " + sci(worst_increment) +
              " (tol 1e-3), center " + fixed2(center0) + " -> " +
              fixed2(center_end) + " (want 0.9..1.05, dips <= 1e-3: " +
              sci(worst_dip) + "), rel diff to standard " + sci(diff) +
              " (tol 1e-2)"};
}

// --------------------------------------------------------------------------
// 11. Throughput: the fitted operator applies at least twice as fast as the
//     on-the-fly operator on a large level, while agreeing with its own
//     assembled matrix.
Outcome criterion11() {
  const auto mesh = square2();
  const BenchmarkProblem prob = scalar_benchmark();
  bool pass = true;
  std::string detail = "m=8 (66049 dofs), median of 5 applies:";
  for (int q = 1; q <= 4; ++q) {
    SolverSetup s;
    s.q = q;
    const MvpBenchResult r = bench_mvp(mesh, 8, prob, s, 5);
    const bool ok =
        r.speedup >= 2.0 && (!r.checked || r.max_rel_diff <= 1e-11);
    pass = pass && ok;
    detail += " q=" + std::to_string(q) + ": " + fixed2(r.speedup) + "x";
    if (r.checked && r.max_rel_diff > 1e-11)
      detail += " (apply mismatch " + sci(r.max_rel_diff) + ")";
  }
  detail += " (want >= 2.0x each)";
  return {pass, detail};
}

struct Entry {
  int id;
  const char* name;
  Outcome (*fn)();
};

const Entry kEntries[] = {
    {1, "polynomial-coefficient surrogates reproduce the assembled operator",
     criterion1},
    {2, "matrix-free apply matches the assembled matrix on unit vectors",
     criterion2},
    {3, "eigenvalue shifts obey the perturbation bounds", criterion3},
    {4, "stencil fit error decays at order q+1 in the macro size",
     criterion4},
    {5, "benchmark errors converge at the expected orders", criterion5},
    {6, "accuracy degrades gracefully with coarser sampling lattices",
     criterion6},
    {7, "pulled-back tensor benchmarks behave like their physical twins",
     criterion7},
    {8, "multigrid cycle counts are level- and operator-independent",
     criterion8},
    {9, "assembled surrogates keep zero row sums and exact symmetry",
     criterion9},
    {10, "p-laplacian flow is stable, monotone, and accurate", criterion10},
    {11, "surrogate applies are at least twice as fast as on-the-fly",
     criterion11},
};

}  // namespace

int main(int argc, char** argv) {
  int selected = 0;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--criterion" && i + 1 < argc) {
      selected = std::atoi(argv[++i]);
    } else if (arg.rfind("--criterion=", 0) == 0) {
      selected = std::atoi(arg.c_str() + 12);
    } else {
      std::fprintf(stderr, "usage: acceptance [--criterion N]\n");
      return 2;
    }
  }
  if (selected < 0 || selected > 11) {
    std::fprintf(stderr, "acceptance: criterion must be in 1..11\n");
    return 2;
  }

  bool all_pass = true;
  for (const Entry& e : kEntries) {
    if (selected != 0 && e.id != selected) continue;
    Outcome out;
    try {
      out = e.fn();
    } catch (const std::exception& ex) {
      out.pass = false;
      out.detail = std::string("exception: ") + ex.what();
    }
    std::printf("[%s] criterion %d: %s (%s)\n", out.pass ? "PASS" : "FAIL",
                e.id, e.name, out.detail.c_str());
    std::fflush(stdout);
    all_pass = all_pass && out.pass;
  }
  return all_pass ? 0 : 1;
}

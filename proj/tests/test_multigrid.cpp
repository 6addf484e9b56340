#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <memory>
#include <random>

#include <Eigen/Dense>

#include <sfem/mesh.hpp>
#include <sfem/multigrid.hpp>

using namespace sfem;

namespace {

CoefficientField smooth_coefficient() {
  return scalar_coefficient([](const Vec2& x) {
    return 1.5 + std::sin(2.0 * x.x()) * std::cos(2.0 * x.y());
  });
}

std::function<Operator(LevelPtr)> exact_builder() {
  return [](LevelPtr ctx) {
    std::vector<TermSpec> terms(1);
    terms[0].form = Form::stiffness;
    terms[0].field = smooth_coefficient();
    return Operator::exact(std::move(ctx), std::move(terms), 2);
  };
}

GridFunction random_consistent(const LevelPtr& ctx, unsigned seed,
                               bool zero_boundary) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  Eigen::VectorXd x(ctx->n_global);
  for (std::int64_t k = 0; k < ctx->n_global; ++k) x[k] = unif(rng);
  GridFunction g(ctx);
  from_global(x, g);
  if (zero_boundary) zero_dirichlet(g);
  return g;
}

}  // namespace

TEST_CASE("restriction is the exact adjoint of prolongation") {
  for (const auto& mesh :
       {std::make_shared<MacroMesh>(make_disk_mesh(6)),
        std::make_shared<MacroMesh>(make_unit_square_mesh(4))}) {
    for (int mc : {2, 3}) {
      const LevelPtr cc = build_level(mesh, mc);
      const LevelPtr cf = build_level(mesh, mc + 1);
      for (unsigned trial = 0; trial < 50; ++trial) {
        const GridFunction uc = random_consistent(cc, 1000 + trial, true);
        GridFunction rf = random_consistent(cf, 2000 + trial, false);
        GridFunction uf(cf), rc(cc);
        prolongate(uc, uf);
        const double s1 = dot(uf, rf);
        restrict_residual(rf, rc);
        const double s2 = dot(uc, rc);
        REQUIRE(s1 == Catch::Approx(s2).margin(1e-11 * (1.0 + std::abs(s1))));
      }
    }
  }
}

TEST_CASE("restriction zeroes Dirichlet rows and non-owner copies") {
  const auto mesh = std::make_shared<MacroMesh>(make_disk_mesh(6));
  const LevelPtr cc = build_level(mesh, 2);
  const LevelPtr cf = build_level(mesh, 3);
  GridFunction rf = random_consistent(cf, 5, false);
  GridFunction rc(cc);
  restrict_residual(rf, rc);
  for (const auto& cls : cf->classes)
    for (std::size_t k = 1; k < cls.size(); ++k)
      REQUIRE(rf.at(cls[k].tri, cls[k].idx) == 0.0);
  for (std::size_t t = 0; t < rc.macros(); ++t)
    for (std::size_t k = 0; k < rc.data(int(t)).size(); ++k)
      if (cc->dirichlet[t][k]) REQUIRE(rc.data(int(t))[k] == 0.0);
}

TEST_CASE("prolongation reproduces linear functions") {
  const auto mesh = std::make_shared<MacroMesh>(make_disk_mesh(8));
  const LevelPtr cc = build_level(mesh, 2);
  const LevelPtr cf = build_level(mesh, 3);
  const auto lin = [](const Vec2& x) {
    return 0.7 - 1.3 * x.x() + 2.1 * x.y();
  };
  GridFunction uc(cc);
  uc.set_nodal(lin);
  GridFunction uf(cf), ref(cf);
  prolongate(uc, uf);
  ref.set_nodal(lin);
  for (std::size_t t = 0; t < uf.macros(); ++t)
    for (std::size_t k = 0; k < uf.data(int(t)).size(); ++k)
      REQUIRE(uf.data(int(t))[k] ==
              Catch::Approx(ref.data(int(t))[k]).margin(1e-13));
  // Aliased copies of the prolonged function agree bitwise.
  for (const auto& cls : cf->classes) {
    const double v = uf.at(cls.front().tri, cls.front().idx);
    for (const auto& a : cls) REQUIRE(uf.at(a.tri, a.idx) == v);
  }
}

TEST_CASE("injection copies fine values at coarse images") {
  const auto mesh = std::make_shared<MacroMesh>(make_disk_mesh(6));
  const LevelPtr cc = build_level(mesh, 2);
  const LevelPtr cf = build_level(mesh, 3);
  GridFunction uf(cf);
  uf.set_nodal([](const Vec2& x) { return std::sin(x.x()) + x.y() * x.y(); });
  GridFunction uc(cc);
  inject(uf, uc);
  const int nc = lattice_n(2);
  for (std::size_t t = 0; t < uc.macros(); ++t) {
    std::int64_t idx = 0;
    for (int b = 0; b <= nc; ++b)
      for (int a = 0; a <= nc - b; ++a, ++idx)
        REQUIRE(uc.data(int(t))[idx] ==
                uf.data(int(t))[lattice_index(3, 2 * a, 2 * b)]);
  }
  GridFunction bad(build_level(mesh, 4));
  REQUIRE_THROWS_AS(inject(bad, uc), Error);
  REQUIRE_THROWS_AS(prolongate(uc, bad), Error);
  GridFunction rc(cc);
  REQUIRE_THROWS_AS(restrict_residual(bad, rc), Error);
}

TEST_CASE("V-cycles contract the residual at textbook rates") {
  const auto mesh = std::make_shared<MacroMesh>(make_unit_square_mesh(4));
  MultigridOptions opt;
  opt.m_coarse = 2;
  opt.rel_tol = 1e-11;
  Multigrid mg(mesh, 4, opt, exact_builder());
  REQUIRE(mg.num_levels() == 3);

  GridFunction f = load_vector(mg.fine_ctx(),
                               [](const Vec2& x) { return x.x() + 1.0; });
  zero_dirichlet(f);
  GridFunction u(mg.fine_ctx());
  const SolveStats stats = mg.solve(u, f);
  REQUIRE(stats.converged);
  REQUIRE(stats.cycles <= 25);
  REQUIRE(stats.mean_contraction() < 0.35);
  REQUIRE(stats.final_residual <= opt.rel_tol * norm2(f));
  REQUIRE(std::int64_t(stats.residuals.size()) == stats.cycles);
}

TEST_CASE("cycle counts are level independent") {
  const auto mesh = std::make_shared<MacroMesh>(make_unit_square_mesh(4));
  MultigridOptions opt;
  opt.m_coarse = 2;
  opt.rel_tol = 1e-10;
  int lo = 1000, hi = 0;
  for (int m_fine : {4, 5, 6}) {
    Multigrid mg(mesh, m_fine, opt, exact_builder());
    GridFunction f = load_vector(mg.fine_ctx(),
                                 [](const Vec2& x) { return x.y() - 0.25; });
    zero_dirichlet(f);
    GridFunction u(mg.fine_ctx());
    const SolveStats stats = mg.solve(u, f);
    REQUIRE(stats.converged);
    lo = std::min(lo, stats.cycles);
    hi = std::max(hi, stats.cycles);
  }
  REQUIRE(hi - lo <= 3);
}

TEST_CASE("multigrid solution matches a dense direct solve") {
  const auto mesh = std::make_shared<MacroMesh>(make_disk_mesh(6));
  MultigridOptions opt;
  opt.m_coarse = 2;
  opt.rel_tol = 1e-12;
  Multigrid mg(mesh, 3, opt, exact_builder());
  GridFunction f = load_vector(mg.fine_ctx(),
                               [](const Vec2& x) { return std::cos(x.x()); });
  zero_dirichlet(f);
  GridFunction u(mg.fine_ctx());
  const SolveStats stats = mg.solve(u, f);
  REQUIRE(stats.converged);

  const Eigen::MatrixXd A =
      Eigen::MatrixXd(assemble(mg.fine_op(), ApplyMode::constrained));
  const Eigen::VectorXd y = A.lu().solve(to_global(f));
  REQUIRE((to_global(u) - y).cwiseAbs().maxCoeff() <
          1e-9 * std::max(1.0, y.cwiseAbs().maxCoeff()));
}

TEST_CASE("non-convergence within the cycle budget is reported") {
  const auto mesh = std::make_shared<MacroMesh>(make_unit_square_mesh(4));
  MultigridOptions opt;
  opt.m_coarse = 2;
  opt.rel_tol = 1e-13;
  opt.max_cycles = 1;
  Multigrid mg(mesh, 4, opt, exact_builder());
  GridFunction f = load_vector(mg.fine_ctx(),
                               [](const Vec2&) { return 1.0; });
  zero_dirichlet(f);
  GridFunction u(mg.fine_ctx());
  const SolveStats stats = mg.solve(u, f);
  REQUIRE(stats.initial_residual == Catch::Approx(norm2(f)).epsilon(1e-14));
  REQUIRE_FALSE(stats.converged);
  REQUIRE(stats.cycles == 1);
  REQUIRE(stats.final_residual > opt.rel_tol * norm2(f));
}

TEST_CASE("direct and CG coarse solvers agree") {
  const auto mesh = std::make_shared<MacroMesh>(make_unit_square_mesh(4));
  MultigridOptions opt;
  opt.m_coarse = 2;
  opt.rel_tol = 1e-11;
  Multigrid direct(mesh, 4, opt, exact_builder());
  opt.coarse_solver = CoarseSolverKind::cg;
  Multigrid cg(mesh, 4, opt, exact_builder());

  GridFunction f = load_vector(direct.fine_ctx(),
                               [](const Vec2& x) { return x.x() * x.y(); });
  zero_dirichlet(f);
  GridFunction ud(direct.fine_ctx()), uc(cg.fine_ctx());
  const SolveStats sd = direct.solve(ud, f);
  const SolveStats sc = cg.solve(uc, f);
  REQUIRE(sd.converged);
  REQUIRE(sc.converged);
  REQUIRE(std::abs(sd.cycles - sc.cycles) <= 1);
  double gap = 0.0, scale = 0.0;
  for (std::size_t t = 0; t < ud.macros(); ++t)
    for (std::size_t k = 0; k < ud.data(int(t)).size(); ++k) {
      gap = std::max(gap,
                     std::abs(ud.data(int(t))[k] - uc.data(int(t))[k]));
      scale = std::max(scale, std::abs(ud.data(int(t))[k]));
    }
  REQUIRE(gap < 1e-9 * std::max(1.0, scale));
}

TEST_CASE("rebuilding operators from the same builder changes nothing") {
  const auto mesh = std::make_shared<MacroMesh>(make_disk_mesh(6));
  MultigridOptions opt;
  opt.m_coarse = 2;
  Multigrid mg(mesh, 3, opt, exact_builder());
  GridFunction f = load_vector(mg.fine_ctx(),
                               [](const Vec2& x) { return x.y(); });
  zero_dirichlet(f);
  GridFunction u1(mg.fine_ctx());
  const SolveStats s1 = mg.solve(u1, f);
  mg.rebuild_operators(exact_builder());
  GridFunction u2(mg.fine_ctx());
  const SolveStats s2 = mg.solve(u2, f);
  REQUIRE(s1.cycles == s2.cycles);
  REQUIRE(s1.final_residual == s2.final_residual);
  for (std::size_t t = 0; t < u1.macros(); ++t)
    REQUIRE(u1.data(int(t)) == u2.data(int(t)));
}

TEST_CASE("single-level hierarchies go straight to the coarse solver") {
  const auto mesh = std::make_shared<MacroMesh>(make_unit_square_mesh(2));
  MultigridOptions opt;
  opt.m_coarse = 3;
  Multigrid mg(mesh, 3, opt, exact_builder());
  REQUIRE(mg.num_levels() == 1);
  GridFunction f = load_vector(mg.fine_ctx(), [](const Vec2&) { return 1.0; });
  zero_dirichlet(f);
  GridFunction u(mg.fine_ctx());
  const SolveStats stats = mg.solve(u, f);
  REQUIRE(stats.converged);
  REQUIRE(stats.cycles == 1);
  REQUIRE_THROWS_AS(Multigrid(mesh, 2, MultigridOptions{.m_coarse = 3},
                              exact_builder()),
                    ConfigError);
}

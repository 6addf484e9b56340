// Experiment runner: configuration-driven benchmark solves, convergence and
// sampling studies, the p-Laplacian time stepper, spectral bound checks, and
// the matrix-vector throughput benchmark. Every run echoes its resolved
// configuration and writes CSV artifacts into the output directory.

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <sfem/sfem.hpp>

namespace {

using namespace sfem;

// Mirrors messages to stdout and the run log in the output directory.
class Logger {
 public:
  void open(const std::string& path) {
    file_.open(path);
    if (!file_) throw Error("cannot open log file '" + path + "'");
    t0_ = monotonic_seconds();
  }

  void line(const std::string& msg) {
    char head[32];
    std::snprintf(head, sizeof(head), "[%9.3f] ", monotonic_seconds() - t0_);
    std::cout << head << msg << "\n";
    if (file_) file_ << head << msg << "\n";
  }

  void flush() {
    std::cout.flush();
    if (file_) file_.flush();
  }

 private:
  std::ofstream file_;
  double t0_ = 0.0;
};

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << text;
}

// Plain-text point dump (x y value per line), owned points only.
void dump_point_values(const std::string& path, const GridFunction& u) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  const LevelContext& ctx = *u.ctx();
  const int n = ctx.n();
  char buf[96];
  for (std::size_t t = 0; t < u.macros(); ++t) {
    const MacroTriangle& tri = ctx.mesh->tris[t];
    const auto& owned = ctx.owned[t];
    const auto& data = u.data(int(t));
    for (int j = 0; j <= n; ++j)
      for (int i = 0; i + j <= n; ++i) {
        const std::int64_t c = lattice_index(ctx.m, i, j);
        if (!owned[c]) continue;
        const Vec2 x = tri.lattice_coord(ctx.m, i, j);
        std::snprintf(buf, sizeof(buf), "%.12e %.12e %.12e\n", x.x(), x.y(),
                      data[c]);
        out << buf;
      }
  }
}

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), pattern, v);
  return buf;
}

// Per-row timing table shared by solve/convergence runs.
void write_study_timing(const std::string& path,
                        const std::vector<StudyRow>& rows) {
  std::string text =
      "row,m,dofs,fit_seconds,solve_seconds,standard_solve_seconds,cycles,"
      "standard_cycles,rtts\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const StudyRow& r = rows[i];
    const double rtts = r.standard_solve_seconds > 0.0
                            ? (r.fit_seconds + r.solve_seconds) /
                                  r.standard_solve_seconds
                            : 0.0;
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%zu,%d,%lld,%.6e,%.6e,%.6e,%d,%d,%.6e\n",
                  i, r.m, static_cast<long long>(r.dofs), r.fit_seconds,
                  r.solve_seconds, r.standard_solve_seconds, r.stats.cycles,
                  r.standard_stats.cycles, rtts);
    text += buf;
  }
  write_text_file(path, text);
}

void log_study_rows(Logger& log, const std::vector<StudyRow>& rows) {
  for (const StudyRow& r : rows) {
    log.line("row k=" + std::to_string(r.k) + " m=" + std::to_string(r.m) +
             " dofs=" + std::to_string(r.dofs) +
             " rel_l2=" + fmt("%.6e", r.err.l2_rel) +
             " rel_h1=" + fmt("%.6e", r.err.h1_rel) +
             " cycles=" + std::to_string(r.stats.cycles) +
             (r.stats.converged ? "" : " (NOT CONVERGED)") +
             (r.fallback_exact ? " (exact fallback)" : ""));
    if (r.max_sign_violation > 0.0)
      log.line("  positive off-diagonal surrogate value, magnitude " +
               fmt("%.3e", r.max_sign_violation));
  }
}

// Applies the deterministic-mode rtts policy: timings vary between reruns,
// so results.csv carries rtts only when the run asked for timing.
void finalize_rtts(std::vector<ConvergenceRow>& table, const Config& cfg) {
  for (auto& row : table) {
    if (cfg.deterministic)
      row.rtts = 0.0;
    else if (cfg.op == "exact")
      row.rtts = 1.0;
  }
}

int run_solve(const Config& cfg, Logger& log, bool with_reference) {
  const auto mesh = resolve_mesh(cfg);
  const BenchmarkProblem prob = resolve_benchmark(cfg);
  StudyOptions o;
  o.macro_levels = cfg.macro_levels;
  o.m_total = cfg.m;
  o.setup = make_solver_setup(cfg);
  const bool surrogate_subject = o.setup.kind == OperatorKind::surrogate;
  o.run_standard =
      with_reference || (!cfg.deterministic && surrogate_subject);

  log.line("benchmark '" + prob.name + "' on mesh '" + cfg.mesh + "', " +
           std::to_string(o.macro_levels) + " macro level(s), m=" +
           std::to_string(cfg.m) + ", operator=" + cfg.op);
  const std::vector<StudyRow> rows = convergence_study(mesh, prob, o);
  log_study_rows(log, rows);

  std::vector<ConvergenceRow> table = study_table(rows);
  finalize_rtts(table, cfg);
  write_convergence_csv(cfg.out_dir + "/results.csv", table);
  if (with_reference && surrogate_subject) {
    std::vector<ConvergenceRow> ref = study_table(rows, true);
    finalize_rtts(ref, cfg);
    write_convergence_csv(cfg.out_dir + "/results_standard.csv", ref);
  }
  write_study_timing(cfg.out_dir + "/timing.csv", rows);

  if (cfg.dump_solution) {
    BenchmarkRun run = solve_benchmark(mesh, cfg.m, prob, o.setup);
    dump_point_values(cfg.out_dir + "/solution.xyz", run.u);
    log.line("wrote " + cfg.out_dir + "/solution.xyz");
  }

  for (const StudyRow& r : rows)
    if (!r.stats.converged || (o.run_standard && !r.standard_stats.converged)) {
      log.line("solver did not reach the residual target");
      return 5;
    }
  return 0;
}

int run_sampling_study(const Config& cfg, Logger& log) {
  const auto mesh = resolve_mesh(cfg);
  const BenchmarkProblem prob = resolve_benchmark(cfg);
  const std::vector<int> offsets = parse_offsets(cfg.offsets);

  StudyOptions base;
  base.macro_levels = cfg.macro_levels;
  base.m_total = cfg.m;
  base.setup = make_solver_setup(cfg);
  base.setup.kind = OperatorKind::surrogate;
  base.run_standard = false;

  std::string summary = "offset,h_ls_over_h,eoc_l2,eoc_h1,rel_l2_first,rel_l2_last\n";
  std::vector<SamplingStudyRow> rows;
  for (int c : offsets) {
    StudyOptions o = base;
    o.setup.m_ls_of = [c](int m) { return m - c; };
    log.line("sampling offset " + std::to_string(c) +
             " (H_LS = " + fmt("%g", std::ldexp(1.0, c)) + " h)");
    const std::vector<StudyRow> study = convergence_study(mesh, prob, o);
    log_study_rows(log, study);
    std::vector<ConvergenceRow> table = study_table(study);
    finalize_rtts(table, cfg);
    write_convergence_csv(
        cfg.out_dir + "/results_offset" + std::to_string(c) + ".csv", table);

    SamplingStudyRow s;
    s.offset = c;
    s.h_ls_over_h = std::ldexp(1.0, c);
    s.eoc_l2 = table.back().eoc_l2.value_or(0.0);
    s.eoc_h1 = table.back().eoc_h1.value_or(0.0);
    s.rel_l2_first = table.front().rel_l2;
    s.rel_l2_last = table.back().rel_l2;
    rows.push_back(s);

    char buf[192];
    std::snprintf(buf, sizeof(buf), "%d,%.10g,%.6f,%.6f,%.12e,%.12e\n",
                  s.offset, s.h_ls_over_h, s.eoc_l2, s.eoc_h1, s.rel_l2_first,
                  s.rel_l2_last);
    summary += buf;
    log.line("offset " + std::to_string(c) + ": eoc_l2 = " +
             fmt("%.3f", s.eoc_l2) + ", eoc_h1 = " + fmt("%.3f", s.eoc_h1));
  }
  write_text_file(cfg.out_dir + "/results.csv", summary);
  write_text_file(cfg.out_dir + "/timing.csv", "metric,value\n");
  return 0;
}

int run_plaplacian(const Config& cfg, Logger& log) {
  const auto mesh = resolve_mesh(cfg);
  PLaplacianOptions o;
  o.p = cfg.p;
  o.dt = cfg.dt;
  o.t_end = cfg.t_end;
  o.f_const = cfg.f_const;
  o.picard_tol = cfg.picard_tol;
  o.picard_max = cfg.picard_max;
  o.cycles_per_solve = cfg.cycles_per_solve;
  o.setup = make_solver_setup(cfg);
  o.on_step = [&log, &cfg](int step, int iters, double incr, double center) {
    if (step % 10 == 0 || step * cfg.dt >= cfg.t_end)
      log.line("step " + std::to_string(step) + ": picard=" +
               std::to_string(iters) + " increment=" + fmt("%.3e", incr) +
               " center=" + fmt("%.6f", center));
  };

  log.line("p-laplacian on '" + cfg.mesh + "', p=" + fmt("%g", cfg.p) +
           ", dt=" + fmt("%g", cfg.dt) + ", T=" + fmt("%g", cfg.t_end) +
           ", operator=" + cfg.op);
  const PLaplacianResult res = plaplacian_run(mesh, cfg.m, o);

  std::string table = "step,t,picard_iters,increment,center_value\n";
  for (const auto& s : res.steps) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%d,%.10g,%d,%.12e,%.12e\n", s.step,
                  s.step * cfg.dt, s.picard_iters, s.last_increment,
                  s.center_value);
    table += buf;
  }
  write_text_file(cfg.out_dir + "/results.csv", table);
  if (res.max_sign_violation > 0.0)
    log.line("positive off-diagonal surrogate value observed, magnitude " +
             fmt("%.3e", res.max_sign_violation));
  log.line("final center value " +
           fmt("%.6f", res.steps.back().center_value));

  std::string timing = "metric,value\n";
  timing += "fit_seconds," + fmt("%.6e", res.fit_seconds) + "\n";
  timing += "total_seconds," + fmt("%.6e", res.total_seconds) + "\n";
  timing +=
      "max_sign_violation," + fmt("%.6e", res.max_sign_violation) + "\n";

  if (cfg.dump_solution)
    dump_point_values(cfg.out_dir + "/solution.xyz", res.u);

  // Surrogate runs are compared against the standard operator at T_end.
  if (o.setup.kind == OperatorKind::surrogate) {
    PLaplacianOptions ref = o;
    ref.on_step = nullptr;
    ref.setup.kind = OperatorKind::exact;
    log.line("reference run with the exact operator");
    const PLaplacianResult std_res = plaplacian_run(mesh, cfg.m, ref);
    const double diff = relative_nodal_diff(std_res.u, res.u);
    log.line("relative difference to the standard solution at T_end: " +
             fmt("%.3e", diff));
    timing += "standard_total_seconds," + fmt("%.6e", std_res.total_seconds) +
              "\n";
    timing += "final_rel_diff," + fmt("%.6e", diff) + "\n";
    if (cfg.dump_solution)
      dump_point_values(cfg.out_dir + "/solution_standard.xyz", std_res.u);
  }
  write_text_file(cfg.out_dir + "/timing.csv", timing);
  return 0;
}

int run_spectrum_check(const Config& cfg, Logger& log) {
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  int failures = 0;
  double worst_margin = -1e300;  // max over trials of gap - bound
  log.line("random symmetric pairs: " + std::to_string(cfg.trials) +
           " trials, dims 2.." + std::to_string(cfg.dim) + ", seed " +
           std::to_string(cfg.seed));
  for (int trial = 0; trial < cfg.trials; ++trial) {
    const int d = 2 + int(rng() % std::uint64_t(cfg.dim - 1));
    Eigen::MatrixXd A(d, d), B(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        A(i, j) = unif(rng);
        B(i, j) = unif(rng);
      }
    A = ((A + A.transpose()) / 2).eval();
    B = ((B + B.transpose()) / 2).eval();
    const SpectralReport rep = spectral_bound_check(A, B);
    worst_margin = std::max(worst_margin, rep.max_gap - rep.norm_inf_diff);
    if (!rep.pass()) ++failures;
  }
  log.line("failures: " + std::to_string(failures) +
           ", worst gap minus inf-norm bound: " + fmt("%.3e", worst_margin));

  // Assembled benchmark pair: exact vs surrogate operator (raw rows, which
  // keep both matrices symmetric).
  const int m_pair = std::min(cfg.m, 4);
  const auto mesh = resolve_mesh(cfg);
  const BenchmarkProblem prob = resolve_benchmark(cfg);
  SolverSetup setup = make_solver_setup(cfg);
  const LevelPtr ctx = build_level(mesh, m_pair);
  const std::vector<TermSpec> terms{{1.0, Form::stiffness, prob.field, {}}};
  const Operator a_true =
      Operator::exact(ctx, terms, setup.resolved_quad_degree());
  setup.kind = OperatorKind::surrogate;
  const Operator a_surr = build_level_operator(ctx, terms, setup);
  const Eigen::MatrixXd M =
      Eigen::MatrixXd(assemble(a_true, ApplyMode::extended));
  const Eigen::MatrixXd N =
      Eigen::MatrixXd(assemble(a_surr, ApplyMode::extended));
  const SpectralReport rep = spectral_bound_check(M, N);
  log.line("benchmark pair at m=" + std::to_string(m_pair) + " (" +
           std::to_string(M.rows()) + " dofs): max eigenvalue gap " +
           fmt("%.3e", rep.max_gap) + ", inf-norm bound " +
           fmt("%.3e", rep.norm_inf_diff) + ", scaled max-norm bound " +
           fmt("%.3e", rep.row_nonzeros * rep.norm_max_diff) +
           (rep.pass() ? " [ok]" : " [VIOLATED]"));
  if (!rep.pass()) ++failures;

  std::string out = "case,count,failures\n";
  out += "random," + std::to_string(cfg.trials) + "," +
         std::to_string(failures - (rep.pass() ? 0 : 1)) + "\n";
  out += "benchmark,1," + std::string(rep.pass() ? "0" : "1") + "\n";
  write_text_file(cfg.out_dir + "/results.csv", out);
  write_text_file(cfg.out_dir + "/timing.csv", "metric,value\n");
  if (failures > 0) {
    log.line("spectral bound check FAILED");
    return 1;
  }
  log.line("spectral bound check passed");
  return 0;
}

int run_bench_mvp(const Config& cfg, Logger& log) {
  const auto mesh = resolve_mesh(cfg);
  const BenchmarkProblem prob = resolve_benchmark(cfg);
  SolverSetup setup = make_solver_setup(cfg);
  log.line("matrix-vector benchmark: m=" + std::to_string(cfg.m) + ", q=" +
           std::to_string(cfg.q) + ", reps=" + std::to_string(cfg.reps));
  const MvpBenchResult r = bench_mvp(mesh, cfg.m, prob, setup, cfg.reps);

  if (r.checked) {
    log.line("apply vs assembled surrogate: max relative difference " +
             fmt("%.3e", r.max_rel_diff));
    if (r.max_rel_diff > 1e-11)
      throw SolveError("surrogate apply deviates from its assembled matrix "
                       "by " +
                       fmt("%.3e", r.max_rel_diff));
  }
  if (r.standard_seconds < 0.05)
    log.line("note: standard apply takes " +
             fmt("%.1f", r.standard_seconds * 1e3) +
             " ms (< 50 ms); consider a larger m for stable timings");
  log.line("standard apply:  " + fmt("%.3f", r.standard_seconds * 1e3) +
           " ms median");
  log.line("surrogate apply: " + fmt("%.3f", r.surrogate_seconds * 1e3) +
           " ms median");
  log.line("speedup: " + fmt("%.2f", r.speedup) + "x");

  char buf[256];
  std::snprintf(buf, sizeof(buf), "%d,%d,%lld,%.6e,%.6e,%.3f\n", r.m, r.q,
                static_cast<long long>(r.dofs), r.standard_seconds,
                r.surrogate_seconds, r.speedup);
  write_text_file(cfg.out_dir + "/results.csv",
                  "m,q,dofs,standard_seconds,surrogate_seconds,speedup\n" +
                      std::string(buf));

  std::string timing = "metric,value\n";
  timing += "setup_seconds," + fmt("%.6e", r.setup_seconds) + "\n";
  timing += "standard_apply_seconds," + fmt("%.6e", r.standard_seconds) + "\n";
  timing +=
      "surrogate_apply_seconds," + fmt("%.6e", r.surrogate_seconds) + "\n";
  timing += "speedup," + fmt("%.6e", r.speedup) + "\n";
  timing += "standard_throughput_dofs_per_second," +
            fmt("%.6e", r.standard_seconds > 0.0
                            ? double(r.dofs) / r.standard_seconds
                            : 0.0) +
            "\n";
  timing += "surrogate_throughput_dofs_per_second," +
            fmt("%.6e", r.surrogate_seconds > 0.0
                            ? double(r.dofs) / r.surrogate_seconds
                            : 0.0) +
            "\n";
  timing += "max_rel_diff," + fmt("%.6e", r.max_rel_diff) + "\n";
  write_text_file(cfg.out_dir + "/timing.csv", timing);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"surrogate-stencil finite element experiments"};
  app.require_subcommand(1);

  struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;  // key=value, applied in order
  };

  // Convenience flags shared by the subcommands; each one maps onto a config
  // key and is applied before the free-form key=value overrides.
  auto add_common = [](CLI::App* sub, CommonArgs& args) {
    sub->add_option("-c,--config", args.config_path,
                    "config file (key=value lines)");
    auto opt = [sub, &args](const std::string& flag, const std::string& key,
                            const std::string& help) {
      sub->add_option_function<std::string>(
          flag,
          [&args, key](const std::string& v) {
            args.overrides.push_back(key + "=" + v);
          },
          help);
    };
    opt("--benchmark", "benchmark", "benchmark name");
    opt("--mesh", "mesh", "mesh file or built-in name");
    opt("--m", "m", "lattice refinement depth");
    opt("--q", "q", "surrogate polynomial degree");
    opt("--m-ls", "m_ls", "sampling lattice depth");
    opt("--operator", "operator", "operator kind: surrogate or exact");
    opt("--levels", "macro_levels", "macro refinement rows");
    opt("--seed", "seed", "random seed");
    opt("--dim", "dim", "largest random matrix dimension");
    opt("--trials", "trials", "number of random trials");
    opt("--reps", "reps", "timing repetitions");
    opt("--out", "out_dir", "output directory");
    sub->add_option("overrides", args.overrides,
                    "additional key=value config overrides");
  };

  CommonArgs args;
  CLI::App* cmd_solve =
      app.add_subcommand("solve", "benchmark solve, one row per macro level");
  CLI::App* cmd_conv = app.add_subcommand(
      "convergence", "benchmark study incl. exact-operator reference table");
  CLI::App* cmd_sampling = app.add_subcommand(
      "sampling-study", "surrogate error decay vs sampling spacing");
  CLI::App* cmd_plap = app.add_subcommand(
      "plaplacian", "implicit p-Laplacian heat flow with Picard refits");
  CLI::App* cmd_spectrum = app.add_subcommand(
      "spectrum-check", "eigenvalue perturbation bound checks");
  CLI::App* cmd_bench = app.add_subcommand(
      "bench-mvp", "matrix-free apply throughput, standard vs surrogate");
  for (CLI::App* sub :
       {cmd_solve, cmd_conv, cmd_sampling, cmd_plap, cmd_spectrum, cmd_bench})
    add_common(sub, args);

  CLI11_PARSE(app, argc, argv);

  Logger log;
  try {
    Config cfg = load_config(args.config_path, args.overrides);
    validate_config(cfg);
    const int requested_threads = cfg.threads;
    cfg.threads = 1;  // serial build

    std::filesystem::create_directories(cfg.out_dir);
    write_text_file(cfg.out_dir + "/config.echo", echo_config(cfg));
    log.open(cfg.out_dir + "/run.log");
    if (requested_threads > 1)
      log.line("threads=" + std::to_string(requested_threads) +
               " requested; this build is serial, running with 1");

    int rc = 0;
    if (cmd_solve->parsed()) rc = run_solve(cfg, log, false);
    else if (cmd_conv->parsed()) rc = run_solve(cfg, log, true);
    else if (cmd_sampling->parsed()) rc = run_sampling_study(cfg, log);
    else if (cmd_plap->parsed()) rc = run_plaplacian(cfg, log);
    else if (cmd_spectrum->parsed()) rc = run_spectrum_check(cfg, log);
    else if (cmd_bench->parsed()) rc = run_bench_mvp(cfg, log);
    log.flush();
    return rc;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const MeshError& e) {
    std::cerr << "mesh error: " << e.what() << "\n";
    return 3;
  } catch (const FitError& e) {
    std::cerr << "fit error: " << e.what() << "\n";
    return 4;
  } catch (const SolveError& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

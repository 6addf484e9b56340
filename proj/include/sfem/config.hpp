#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "sfem/problems.hpp"

namespace sfem {

// Flat key=value run configuration shared by all CLI subcommands. A config
// file provides defaults; command-line key=value arguments override it.
// Unknown keys are rejected so typos surface as errors.
struct Config {
  // problem and discretization
  std::string benchmark = "scalar";  // scalar | tensor | tensor-mapped
  std::string mesh = "unit-square-4";  // built-in name or mesh file path
  int m = 6;              // lattice refinement depth of the finest row
  int macro_levels = 3;   // rows of a convergence study
  std::string op = "surrogate";  // surrogate | exact
  int q = 2;              // surrogate polynomial degree
  int m_ls = 0;           // sampling level; 0 means m_ls = m
  int m_ls_offset = -1;   // >= 0: m_ls = m - offset per level (wins over m_ls)
  bool zero_row_sum = true;
  bool symmetric_pairing = true;
  std::string interface_mode = "pairs-exact";  // pairs-exact | rows-exact
  int quad_degree = 0;    // 0: max(2, q)
  int rhs_quad_degree = 4;

  // multigrid
  int nu1 = 2;
  int nu2 = 2;
  int m_coarse = 2;
  std::string coarse_solver = "direct";  // direct | cg
  double rel_tol = 1e-11;
  int max_cycles = 100;

  // run control
  std::uint64_t seed = 12345;
  bool deterministic = true;
  int threads = 1;  // default from SFEM_THREADS; clamped to 1 (serial build)
  std::string out_dir = "out";
  bool dump_solution = false;  // write plain-text x y value point dumps

  // p-Laplacian time stepping
  double p = 3.0;
  double dt = 1e-2;
  double t_end = 1.0;
  double picard_tol = 1e-3;
  int picard_max = 50;
  int cycles_per_solve = 5;
  double f_const = 4.5;

  // mapped tensor benchmark
  double map_a = 0.1;

  // matrix-vector benchmark
  int reps = 5;

  // sampling study: comma-separated sampling offsets (m_ls = m - offset)
  std::string offsets = "0,2,4,6";

  // spectrum check
  int dim = 20;
  int trials = 1000;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline int to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long r = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return int(r);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected integer, got '" +
                      v + "'");
  }
}

inline std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const unsigned long long r = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return std::uint64_t(r);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key +
                      "': expected unsigned integer, got '" + v + "'");
  }
}

inline double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected number, got '" + v +
                      "'");
  }
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError("config key '" + key + "': expected boolean, got '" + v +
                    "'");
}

}  // namespace detail

// Applies one key=value assignment.
inline void config_set(Config& c, const std::string& key,
                       const std::string& value) {
  using detail::to_bool;
  using detail::to_double;
  using detail::to_int;
  using detail::to_u64;
  if (key == "benchmark") c.benchmark = value;
  else if (key == "mesh") c.mesh = value;
  else if (key == "m") c.m = to_int(key, value);
  else if (key == "macro_levels") c.macro_levels = to_int(key, value);
  else if (key == "operator") c.op = value;
  else if (key == "q") c.q = to_int(key, value);
  else if (key == "m_ls") c.m_ls = to_int(key, value);
  else if (key == "m_ls_offset") c.m_ls_offset = to_int(key, value);
  else if (key == "zero_row_sum") c.zero_row_sum = to_bool(key, value);
  else if (key == "symmetric_pairing")
    c.symmetric_pairing = to_bool(key, value);
  else if (key == "interface_mode") c.interface_mode = value;
  else if (key == "quad_degree") c.quad_degree = to_int(key, value);
  else if (key == "rhs_quad_degree") c.rhs_quad_degree = to_int(key, value);
  else if (key == "nu1") c.nu1 = to_int(key, value);
  else if (key == "nu2") c.nu2 = to_int(key, value);
  else if (key == "m_coarse") c.m_coarse = to_int(key, value);
  else if (key == "coarse_solver") c.coarse_solver = value;
  else if (key == "rel_tol") c.rel_tol = to_double(key, value);
  else if (key == "max_cycles") c.max_cycles = to_int(key, value);
  else if (key == "seed") c.seed = to_u64(key, value);
  else if (key == "deterministic") c.deterministic = to_bool(key, value);
  else if (key == "threads") c.threads = to_int(key, value);
  else if (key == "out_dir") c.out_dir = value;
  else if (key == "dump_solution") c.dump_solution = to_bool(key, value);
  else if (key == "p") c.p = to_double(key, value);
  else if (key == "dt") c.dt = to_double(key, value);
  else if (key == "t_end") c.t_end = to_double(key, value);
  else if (key == "picard_tol") c.picard_tol = to_double(key, value);
  else if (key == "picard_max") c.picard_max = to_int(key, value);
  else if (key == "cycles_per_solve")
    c.cycles_per_solve = to_int(key, value);
  else if (key == "f_const") c.f_const = to_double(key, value);
  else if (key == "map_a") c.map_a = to_double(key, value);
  else if (key == "reps") c.reps = to_int(key, value);
  else if (key == "offsets") c.offsets = value;
  else if (key == "dim") c.dim = to_int(key, value);
  else if (key == "trials") c.trials = to_int(key, value);
  else throw ConfigError("unknown config key '" + key + "'");
}

// Parses "key=value" with surrounding whitespace allowed.
inline void config_set_assignment(Config& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError("expected key=value, got '" + assignment + "'");
  const std::string key = detail::trim(assignment.substr(0, eq));
  const std::string value = detail::trim(assignment.substr(eq + 1));
  if (key.empty())
    throw ConfigError("empty key in assignment '" + assignment + "'");
  config_set(c, key, value);
}

// Reads a config file ('#' comments, blank lines allowed) over the defaults,
// then applies command-line overrides in order.
inline Config load_config(const std::string& path,
                          const std::vector<std::string>& overrides = {}) {
  Config c;
  if (const char* env = std::getenv("SFEM_THREADS")) {
    const std::string v(env);
    if (!v.empty()) c.threads = detail::to_int("SFEM_THREADS", v);
  }
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      try {
        config_set_assignment(c, line);
      } catch (const ConfigError& e) {
        throw ConfigError(path + ":" + std::to_string(lineno) + ": " +
                          e.what());
      }
    }
  }
  for (const auto& a : overrides) config_set_assignment(c, a);
  return c;
}

inline void validate_config(const Config& c) {
  auto fail = [](const std::string& key, const std::string& msg) {
    throw ConfigError("config key '" + key + "': " + msg);
  };
  if (c.benchmark != "scalar" && c.benchmark != "tensor" &&
      c.benchmark != "tensor-mapped")
    fail("benchmark", "must be scalar, tensor, or tensor-mapped");
  if (c.op != "surrogate" && c.op != "exact")
    fail("operator", "must be surrogate or exact");
  if (c.interface_mode != "pairs-exact" && c.interface_mode != "rows-exact")
    fail("interface_mode", "must be pairs-exact or rows-exact");
  if (c.coarse_solver != "direct" && c.coarse_solver != "cg")
    fail("coarse_solver", "must be direct or cg");
  if (c.q < 1 || c.q > 8) fail("q", "must be in 1..8");
  if (c.m < 2) fail("m", "must be at least 2");
  if (c.macro_levels < 1) fail("macro_levels", "must be positive");
  if (c.m_ls != 0 && (c.m_ls < 2 || c.m_ls > c.m))
    fail("m_ls", "must be 0 (match m) or in 2..m");
  if (c.quad_degree < 0 || c.quad_degree > 8)
    fail("quad_degree", "must be in 0..8 (0 selects max(2, q))");
  if (c.rhs_quad_degree < 1 || c.rhs_quad_degree > 8)
    fail("rhs_quad_degree", "must be in 1..8");
  if (c.nu1 < 0 || c.nu2 < 0) fail("nu1", "smoothing counts must be >= 0");
  if (c.m_coarse < 2) fail("m_coarse", "must be at least 2");
  if (c.m_coarse > c.m) fail("m_coarse", "must not exceed m");
  if (!(c.rel_tol > 0.0)) fail("rel_tol", "must be positive");
  if (c.max_cycles < 1) fail("max_cycles", "must be positive");
  if (c.threads < 1) fail("threads", "must be positive");
  if (c.out_dir.empty()) fail("out_dir", "must not be empty");
  if (!(c.p > 1.0)) fail("p", "must exceed 1");
  if (!(c.dt > 0.0)) fail("dt", "must be positive");
  if (!(c.t_end >= c.dt)) fail("t_end", "must be at least dt");
  if (!(c.picard_tol > 0.0)) fail("picard_tol", "must be positive");
  if (c.picard_max < 1) fail("picard_max", "must be positive");
  if (c.cycles_per_solve < 1) fail("cycles_per_solve", "must be positive");
  if (c.reps < 5) fail("reps", "must be at least 5");
  if (c.dim < 2 || c.dim > 2000) fail("dim", "must be in 2..2000");
  if (c.trials < 1) fail("trials", "must be positive");
  if (std::abs(c.map_a) >= 0.5)
    fail("map_a", "must satisfy |a| < 0.5 (invertible map)");
}

inline std::vector<int> parse_offsets(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = detail::trim(item);
    if (item.empty()) continue;
    const int v = detail::to_int("offsets", item);
    if (v < 0) throw ConfigError("config key 'offsets': entries must be >= 0");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("config key 'offsets': empty list");
  return out;
}

// ---------------------------------------------------------------------------
// Resolution into driver options
// ---------------------------------------------------------------------------

inline std::shared_ptr<const MacroMesh> resolve_mesh(const Config& c) {
  if (c.mesh == "unit-square-2")
    return std::make_shared<MacroMesh>(make_unit_square_mesh(2));
  if (c.mesh == "unit-square-4")
    return std::make_shared<MacroMesh>(make_unit_square_mesh(4));
  if (c.mesh == "disk-16") return std::make_shared<MacroMesh>(make_disk_mesh(16));
  return std::make_shared<MacroMesh>(read_mesh_file(c.mesh));
}

inline BenchmarkProblem resolve_benchmark(const Config& c) {
  if (c.benchmark == "scalar") return scalar_benchmark();
  if (c.benchmark == "tensor") return tensor_benchmark(0.0);
  return tensor_benchmark(c.map_a);
}

inline SolverSetup make_solver_setup(const Config& c) {
  SolverSetup s;
  s.kind = c.op == "exact" ? OperatorKind::exact : OperatorKind::surrogate;
  s.q = c.q;
  if (c.m_ls_offset >= 0) {
    const int off = c.m_ls_offset;
    s.m_ls_of = [off](int m) { return m - off; };
  } else if (c.m_ls > 0) {
    const int v = c.m_ls;
    s.m_ls_of = [v](int) { return v; };
  }
  s.zero_row_sum = c.zero_row_sum;
  s.symmetric_pairing = c.symmetric_pairing;
  s.interface_mode = c.interface_mode == "rows-exact"
                         ? InterfaceMode::rows_exact
                         : InterfaceMode::pairs_exact;
  s.quad_degree = c.quad_degree;
  s.rhs_quad_degree = c.rhs_quad_degree;
  s.mg.nu1 = c.nu1;
  s.mg.nu2 = c.nu2;
  s.mg.m_coarse = c.m_coarse;
  s.mg.coarse_solver = c.coarse_solver == "cg" ? CoarseSolverKind::cg
                                               : CoarseSolverKind::direct;
  s.mg.rel_tol = c.rel_tol;
  s.mg.max_cycles = c.max_cycles;
  return s;
}

// ---------------------------------------------------------------------------
// Canonical echo of the resolved configuration
// ---------------------------------------------------------------------------

inline std::string echo_config(const Config& c) {
  auto num = [](double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  auto boolean = [](bool b) { return b ? "true" : "false"; };
  std::map<std::string, std::string> kv;
  kv["benchmark"] = c.benchmark;
  kv["mesh"] = c.mesh;
  kv["m"] = std::to_string(c.m);
  kv["macro_levels"] = std::to_string(c.macro_levels);
  kv["operator"] = c.op;
  kv["q"] = std::to_string(c.q);
  kv["m_ls"] = std::to_string(c.m_ls);
  kv["m_ls_offset"] = std::to_string(c.m_ls_offset);
  kv["zero_row_sum"] = boolean(c.zero_row_sum);
  kv["symmetric_pairing"] = boolean(c.symmetric_pairing);
  kv["interface_mode"] = c.interface_mode;
  kv["quad_degree"] = std::to_string(c.quad_degree);
  kv["rhs_quad_degree"] = std::to_string(c.rhs_quad_degree);
  kv["nu1"] = std::to_string(c.nu1);
  kv["nu2"] = std::to_string(c.nu2);
  kv["m_coarse"] = std::to_string(c.m_coarse);
  kv["coarse_solver"] = c.coarse_solver;
  kv["rel_tol"] = num(c.rel_tol);
  kv["max_cycles"] = std::to_string(c.max_cycles);
  kv["seed"] = std::to_string(c.seed);
  kv["deterministic"] = boolean(c.deterministic);
  kv["threads"] = std::to_string(c.threads);
  kv["out_dir"] = c.out_dir;
  kv["dump_solution"] = boolean(c.dump_solution);
  kv["p"] = num(c.p);
  kv["dt"] = num(c.dt);
  kv["t_end"] = num(c.t_end);
  kv["picard_tol"] = num(c.picard_tol);
  kv["picard_max"] = std::to_string(c.picard_max);
  kv["cycles_per_solve"] = std::to_string(c.cycles_per_solve);
  kv["f_const"] = num(c.f_const);
  kv["map_a"] = num(c.map_a);
  kv["reps"] = std::to_string(c.reps);
  kv["offsets"] = c.offsets;
  kv["dim"] = std::to_string(c.dim);
  kv["trials"] = std::to_string(c.trials);
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

}  // namespace sfem

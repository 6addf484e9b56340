#pragma once

#include <Eigen/Sparse>

#include "sfem/grid_function.hpp"
#include "sfem/surrogate.hpp"

namespace sfem {

enum class OperatorKind { exact, surrogate };

// Branch selection on macro-boundary rows of a surrogate operator:
//   pairs_exact: an entry stays exact only when both of its lattice points lie
//                on the macro boundary; entries coupling into the interior are
//                evaluated from the polynomials (keeps the assembled matrix
//                exactly symmetric together with paired fits).
//   rows_exact:  every entry of a macro-boundary row is exact.
enum class InterfaceMode { pairs_exact, rows_exact };

// extended: raw operator rows everywhere (needed for boundary lifts).
// constrained: rows at domain-boundary points replaced by identity.
enum class ApplyMode { extended, constrained };

// One scaled bilinear form; operators act as sum_k scale_k * form_k.
struct TermSpec {
  double scale = 1.0;
  Form form = Form::stiffness;
  CoefficientField field;
  // Optional prefitted surrogates (per macro) reused instead of refitting,
  // e.g. the mass term of a time-stepping operator that is rebuilt every
  // nonlinear iteration.
  std::vector<MacroSurrogate> prefit;
};

struct OperatorDiagnostics {
  std::vector<MacroFitDiagnostics> by_macro;
  bool fallback_exact = false;  // sampling level too coarse for the fit

  double max_sign_violation() const {
    double v = 0.0;
    for (const auto& mac : by_macro)
      for (const auto& f : mac.fits) v = std::max(v, f.sign_violation);
    return v;
  }
};

// Matrix-free operator on one level. Interior rows come from on-the-fly
// quadrature (exact kind) or polynomial evaluation (surrogate kind); rows at
// macro-boundary points are computed per macro as partial element sums and
// summed across the interface, which reproduces the exact global row.
class Operator {
public:
  static Operator exact(LevelPtr ctx, std::vector<TermSpec> terms,
                        int quad_degree) {
    Operator op(std::move(ctx), std::move(terms), quad_degree);
    op.kind_ = OperatorKind::exact;
    op.build_btable();
    op.build_class_data();
    return op;
  }

  static Operator surrogate(LevelPtr ctx, std::vector<TermSpec> terms,
                            const SurrogateConfig& cfg, InterfaceMode imode,
                            int quad_degree,
                            OperatorDiagnostics* diag = nullptr) {
    Operator op(std::move(ctx), std::move(terms), quad_degree);
    op.imode_ = imode;
    op.cfg_ = cfg;
    if (cfg.q < 1 || cfg.q > 8)
      throw ConfigError("surrogate degree must be in 1..8, got " +
                        std::to_string(cfg.q));
    if (cfg.m_ls < 2 || cfg.m_ls > op.ctx_->m)
      throw ConfigError("sampling level m_ls = " + std::to_string(cfg.m_ls) +
                        " outside 2.." + std::to_string(op.ctx_->m));
    bool fittable = true;
    for (const auto& t : op.terms_) {
      const bool closure = cfg.zero_row_sum && t.form == Form::stiffness;
      if (!sampling_supports_fit(cfg.m_ls, cfg.q, cfg.symmetric_pairing,
                                 closure))
        fittable = false;
    }
    if (!fittable) {
      // Too few admissible sampling points for the requested degree: degrade
      // to the exact operator (callers see it in the diagnostics).
      op.kind_ = OperatorKind::exact;
      if (diag) diag->fallback_exact = true;
      op.build_btable();
      op.build_class_data();
      return op;
    }
    op.kind_ = OperatorKind::surrogate;
    const int ntri = int(op.ctx_->mesh->tris.size());
    if (diag && diag->by_macro.empty()) diag->by_macro.resize(ntri);
    op.surr_.resize(op.terms_.size());
    for (std::size_t k = 0; k < op.terms_.size(); ++k) {
      TermSpec& term = op.terms_[k];
      if (!term.prefit.empty()) {
        if (int(term.prefit.size()) != ntri || term.prefit.front().m != op.ctx_->m)
          throw ConfigError("prefitted surrogate does not match the level");
        op.surr_[k] = std::move(term.prefit);
        term.prefit.clear();
        continue;
      }
      op.surr_[k].reserve(ntri);
      for (int t = 0; t < ntri; ++t)
        op.surr_[k].push_back(
            fit_macro_surrogate(op.pa_[t], term.form, term.field, cfg,
                                diag ? &diag->by_macro[t] : nullptr));
    }
    op.build_btable();
    op.build_class_data();
    return op;
  }

  const LevelPtr& ctx() const { return ctx_; }
  OperatorKind kind() const { return kind_; }
  InterfaceMode interface_mode() const { return imode_; }
  const std::vector<TermSpec>& terms() const { return terms_; }
  const PatchAssembler& assembler(int t) const { return pa_[t]; }
  const std::vector<MacroSurrogate>& term_surrogates(std::size_t k) const {
    return surr_[k];
  }

  // Combined row (sum of scaled terms) at an interior point by direct
  // evaluation; the streaming kernels below are what apply/smooth use.
  void interior_row(int t, int i, int j, StencilRow& out) const {
    out.w.fill(0.0);
    StencilRow tmp;
    for (std::size_t k = 0; k < terms_.size(); ++k) {
      if (kind_ == OperatorKind::surrogate) {
        tmp = surrogate_stencil_at(surr_[k][t], i, j);
      } else {
        pa_[t].row(terms_[k].form, terms_[k].field, i, j, tmp);
      }
      for (int d = 0; d < kNumDirs; ++d) out.w[d] += terms_[k].scale * tmp.w[d];
    }
  }

  // Partial row of macro t at one of its boundary lattice points: element
  // contributions of this macro only.
  const std::array<double, kNumDirs>& boundary_row(int t, int i, int j) const {
    return btable_[t][boundary_position(ctx_->m, i, j)];
  }

  // v = A u (u must hold identical values in all interface aliases; v does on
  // return).
  void apply(const GridFunction& u, GridFunction& v, ApplyMode mode) const {
    const int ntri = int(btable_.size());
    const int m = ctx_->m;
    for (int t = 0; t < ntri; ++t) {
      const std::vector<double>& ud = u.data(t);
      std::vector<double>& vd = v.data(t);
      stream_macro_rows(t, [&](int i, int j, const StencilRow& row) {
        const std::int64_t c = lattice_index(m, i, j);
        const std::int64_t nn = lattice_index(m, i, j + 1);
        const std::int64_t ss = lattice_index(m, i, j - 1);
        vd[c] = row.w[int(Dir::C)] * ud[c] + row.w[int(Dir::E)] * ud[c + 1] +
                row.w[int(Dir::W)] * ud[c - 1] + row.w[int(Dir::N)] * ud[nn] +
                row.w[int(Dir::NW)] * ud[nn - 1] + row.w[int(Dir::S)] * ud[ss] +
                row.w[int(Dir::SE)] * ud[ss + 1];
      });
      for_each_boundary_lattice_point(
          m, [&](int i, int j, std::int64_t idx, int pos) {
            const auto& bt = btable_[t][pos];
            double acc = 0.0;
            for (int d = 0; d < kNumDirs; ++d) {
              if (bt[d] == 0.0) continue;
              const auto off = kDirOffset[d];
              acc += bt[d] * ud[lattice_index(m, i + off.di, j + off.dj)];
            }
            vd[idx] = acc;
          });
    }
    reduce_interfaces_add(v);
    if (mode == ApplyMode::constrained) {
      for (int t = 0; t < ntri; ++t) {
        const auto& mask = ctx_->dirichlet[t];
        const auto& ud = u.data(t);
        auto& vd = v.data(t);
        for (std::size_t k = 0; k < ud.size(); ++k)
          if (mask[k]) vd[k] = ud[k];
      }
    }
  }

  // One hybrid sweep: Jacobi proposals for the free interface classes from
  // the current iterate, lexicographic Gauss-Seidel over macro interiors,
  // then the interface updates are committed to every alias.
  void smooth_sweep(GridFunction& u, const GridFunction& f) const {
    const auto& classes = ctx_->classes;
    std::vector<double> prop(classes.size(), 0.0);
    for (std::size_t c = 0; c < classes.size(); ++c) {
      if (!class_free_[c]) continue;
      double r = 0.0;
      for (std::size_t k = 0; k < classes[c].size(); ++k)
        r += partial_row_dot(classes[c][k].tri, class_pos_[c][k], u);
      const auto& o = classes[c].front();
      prop[c] =
          u.at(o.tri, o.idx) + (f.at(o.tri, o.idx) - r) / class_diag_[c];
    }
    const int ntri = int(btable_.size());
    const int m = ctx_->m;
    for (int t = 0; t < ntri; ++t) {
      std::vector<double>& ud = u.data(t);
      const std::vector<double>& fd = f.data(t);
      stream_macro_rows(t, [&](int i, int j, const StencilRow& row) {
        const std::int64_t c = lattice_index(m, i, j);
        const std::int64_t nn = lattice_index(m, i, j + 1);
        const std::int64_t ss = lattice_index(m, i, j - 1);
        const double off =
            row.w[int(Dir::E)] * ud[c + 1] + row.w[int(Dir::W)] * ud[c - 1] +
            row.w[int(Dir::N)] * ud[nn] + row.w[int(Dir::NW)] * ud[nn - 1] +
            row.w[int(Dir::S)] * ud[ss] + row.w[int(Dir::SE)] * ud[ss + 1];
        ud[c] = (fd[c] - off) / row.w[int(Dir::C)];
      });
    }
    for (std::size_t c = 0; c < classes.size(); ++c) {
      if (!class_free_[c]) continue;
      for (const auto& a : classes[c]) u.at(a.tri, a.idx) = prop[c];
    }
  }

  double class_diag(std::size_t c) const { return class_diag_[c]; }
  bool class_is_free(std::size_t c) const { return class_free_[c] != 0; }

private:
  Operator(LevelPtr ctx, std::vector<TermSpec> terms, int quad_degree)
      : ctx_(std::move(ctx)),
        terms_(std::move(terms)),
        rule_(&quadrature_rule(quad_degree)) {
    if (terms_.empty()) throw ConfigError("operator needs at least one term");
    const auto& tris = ctx_->mesh->tris;
    pa_.reserve(tris.size());
    for (std::size_t t = 0; t < tris.size(); ++t)
      pa_.emplace_back(tris[t], int(t), ctx_->m, *rule_);
  }

  // Stream combined interior rows of macro t in lexicographic order. The
  // surrogate path advances one forward-difference evaluator per direction
  // and term along each row.
  template <typename F>
  void stream_macro_rows(int t, F&& fn) const {
    const int n = ctx_->n();
    StencilRow row;
    if (kind_ == OperatorKind::exact) {
      StencilRow tmp;
      for (int j = 1; j <= n - 2; ++j) {
        for (int i = 1; i <= n - j - 1; ++i) {
          row.w.fill(0.0);
          for (std::size_t k = 0; k < terms_.size(); ++k) {
            pa_[t].row(terms_[k].form, terms_[k].field, i, j, tmp);
            for (int d = 0; d < kNumDirs; ++d)
              row.w[d] += terms_[k].scale * tmp.w[d];
          }
          fn(i, j, row);
        }
      }
      return;
    }
    const double h = 1.0 / double(n);
    const Vec2 step(h, 0.0);
    struct TermEvals {
      std::array<DiffChain, kNumDirs> chain;  // stored directions only
      std::array<RowEvaluator, kNumDirs> ev;
      bool pairing = false;
      bool closure = false;
      double scale = 1.0;
    };
    std::vector<TermEvals> evs(terms_.size());
    for (std::size_t k = 0; k < terms_.size(); ++k) {
      const MacroSurrogate& s = surr_[k][t];
      TermEvals& te = evs[k];
      te.pairing = s.pairing;
      te.closure = s.closure;
      te.scale = terms_[k].scale;
      if (s.pairing) {
        for (Dir d : {Dir::E, Dir::N, Dir::NW})
          te.chain[int(d)] = make_diff_chain(s.stored(d), step);
      } else {
        for (Dir d : kOffDiagDirs)
          te.chain[int(d)] = make_diff_chain(s.stored(d), step);
      }
      if (!te.closure)
        te.chain[int(Dir::C)] = make_diff_chain(s.stored(Dir::C), step);
    }
    for (int j = 1; j <= n - 2; ++j) {
      const double y = j * h;
      for (TermEvals& te : evs) {
        if (te.pairing) {
          te.ev[int(Dir::E)] = RowEvaluator(te.chain[int(Dir::E)], Vec2(h, y));
          te.ev[int(Dir::N)] = RowEvaluator(te.chain[int(Dir::N)], Vec2(h, y));
          te.ev[int(Dir::NW)] =
              RowEvaluator(te.chain[int(Dir::NW)], Vec2(h, y));
          te.ev[int(Dir::W)] =
              RowEvaluator(te.chain[int(Dir::E)], Vec2(0.0, y));
          te.ev[int(Dir::S)] =
              RowEvaluator(te.chain[int(Dir::N)], Vec2(h, y - h));
          te.ev[int(Dir::SE)] =
              RowEvaluator(te.chain[int(Dir::NW)], Vec2(2.0 * h, y - h));
        } else {
          for (Dir d : kOffDiagDirs)
            te.ev[int(d)] = RowEvaluator(te.chain[int(d)], Vec2(h, y));
        }
        if (!te.closure)
          te.ev[int(Dir::C)] = RowEvaluator(te.chain[int(Dir::C)], Vec2(h, y));
      }
      for (int i = 1; i <= n - j - 1; ++i) {
        row.w.fill(0.0);
        for (TermEvals& te : evs) {
          double sum = 0.0;
          for (Dir d : kOffDiagDirs) {
            const double v = te.ev[int(d)].value();
            sum += v;
            row.w[int(d)] += te.scale * v;
          }
          row.w[int(Dir::C)] +=
              te.scale * (te.closure ? -sum : te.ev[int(Dir::C)].value());
        }
        fn(i, j, row);
        for (TermEvals& te : evs) {
          for (Dir d : kOffDiagDirs) te.ev[int(d)].advance();
          if (!te.closure) te.ev[int(Dir::C)].advance();
        }
      }
    }
  }

  // Partial element rows at macro-boundary points, one compact table per
  // macro. Surrogate operators in pairs_exact mode replace the entries whose
  // second point is interior by the polynomial value at the row point.
  void build_btable() {
    const int m = ctx_->m;
    const int n = ctx_->n();
    const int ntri = int(pa_.size());
    btable_.assign(ntri, std::vector<std::array<double, kNumDirs>>(
                             boundary_point_count(m),
                             std::array<double, kNumDirs>{}));
    bpoint_.assign(ntri, {});
    const bool fitted_entries = kind_ == OperatorKind::surrogate &&
                                imode_ == InterfaceMode::pairs_exact;
    Mat3 M;
    for (int t = 0; t < ntri; ++t) {
      auto& table = btable_[t];
      // Per-term exact entries are kept separate while entries coupling into
      // the interior are swapped for fitted values: zero-row-sum terms must
      // charge that swap against the diagonal, or the macro-boundary band
      // acquires an O(fit error) potential that ruins both coercivity and
      // the averaging property of the fit residual.
      std::vector<std::vector<std::array<double, kNumDirs>>> per_term;
      if (fitted_entries)
        per_term.assign(terms_.size(),
                        std::vector<std::array<double, kNumDirs>>(
                            boundary_point_count(m),
                            std::array<double, kNumDirs>{}));
      for (std::size_t k = 0; k < terms_.size(); ++k) {
        const TermSpec& term = terms_[k];
        pa_[t].for_each_boundary_element(
            [&](bool upper, int a, int b) {
              pa_[t].element_matrix(term.form, term.field, upper, a, b, M);
              const auto pts = pa_[t].element_points(upper, a, b);
              for (int r = 0; r < 3; ++r) {
                const auto [ri, rj] = pts[r];
                if (lattice_interior(m, ri, rj)) continue;
                const int pos = boundary_position(m, ri, rj);
                auto& brow = table[pos];
                for (int c = 0; c < 3; ++c) {
                  const auto [ci, cj] = pts[c];
                  const Dir d = dir_between(ri, rj, ci, cj);
                  brow[int(d)] += term.scale * M(r, c);
                  if (fitted_entries)
                    per_term[k][pos][int(d)] += term.scale * M(r, c);
                }
              }
            });
      }
      if (fitted_entries) {
        for_each_boundary_lattice_point(
            m, [&](int i, int j, std::int64_t, int pos) {
              auto& brow = table[pos];
              for (Dir d : kOffDiagDirs) {
                const auto off = offset_of(d);
                if (!lattice_interior(m, i + off.di, j + off.dj)) continue;
                double w = 0.0;
                for (std::size_t k = 0; k < terms_.size(); ++k) {
                  const double v = terms_[k].scale * surr_[k][t].value(d, i, j);
                  w += v;
                  if (surr_[k][t].closure)
                    brow[int(Dir::C)] -= v - per_term[k][pos][int(d)];
                }
                brow[int(d)] = w;
              }
            });
      }
      bpoint_[t].resize(boundary_point_count(m));
      for_each_boundary_lattice_point(
          m, [&](int i, int j, std::int64_t idx, int pos) {
            bpoint_[t][pos] = {std::int32_t(i), std::int32_t(j),
                               std::int32_t(idx)};
          });
    }
    (void)n;
  }

  static Dir dir_between(int ri, int rj, int ci, int cj) {
    const int di = ci - ri, dj = cj - rj;
    for (int d = 0; d < kNumDirs; ++d)
      if (kDirOffset[d].di == di && kDirOffset[d].dj == dj) return Dir(d);
    throw Error("element couples non-neighboring lattice points");
  }

  void build_class_data() {
    const auto& classes = ctx_->classes;
    class_pos_.resize(classes.size());
    class_diag_.assign(classes.size(), 0.0);
    class_free_.assign(classes.size(), 0);
    // Per-macro lattice-index -> boundary-position lookup.
    std::vector<std::vector<std::pair<std::int32_t, int>>> idx2pos(
        bpoint_.size());
    for (std::size_t t = 0; t < bpoint_.size(); ++t) {
      idx2pos[t].reserve(bpoint_[t].size());
      for (std::size_t p = 0; p < bpoint_[t].size(); ++p)
        idx2pos[t].emplace_back(bpoint_[t][p].idx, int(p));
      std::sort(idx2pos[t].begin(), idx2pos[t].end());
    }
    for (std::size_t c = 0; c < classes.size(); ++c) {
      class_pos_[c].clear();
      double diag = 0.0;
      for (const auto& a : classes[c]) {
        const auto& v = idx2pos[a.tri];
        const auto it = std::lower_bound(
            v.begin(), v.end(), std::make_pair(a.idx, 0),
            [](const auto& x, const auto& y) { return x.first < y.first; });
        if (it == v.end() || it->first != a.idx)
          throw Error("alias class member is not a boundary lattice point");
        class_pos_[c].push_back(it->second);
        diag += btable_[a.tri][it->second][int(Dir::C)];
      }
      class_diag_[c] = diag;
      const auto& o = classes[c].front();
      class_free_[c] = ctx_->dirichlet[o.tri][o.idx] ? 0 : 1;
    }
  }

  double partial_row_dot(int t, int pos, const GridFunction& u) const {
    const auto& bt = btable_[t][pos];
    const auto& p = bpoint_[t][pos];
    const auto& ud = u.data(t);
    const int m = ctx_->m;
    double acc = 0.0;
    for (int d = 0; d < kNumDirs; ++d) {
      if (bt[d] == 0.0) continue;
      const auto off = kDirOffset[d];
      acc += bt[d] * ud[lattice_index(m, p.i + off.di, p.j + off.dj)];
    }
    return acc;
  }

  struct BPoint {
    std::int32_t i = 0, j = 0, idx = 0;
  };

  LevelPtr ctx_;
  std::vector<TermSpec> terms_;
  const TriangleQuadrature* rule_;
  OperatorKind kind_ = OperatorKind::exact;
  InterfaceMode imode_ = InterfaceMode::pairs_exact;
  SurrogateConfig cfg_;
  std::vector<PatchAssembler> pa_;
  std::vector<std::vector<MacroSurrogate>> surr_;  // [term][macro]
  std::vector<std::vector<std::array<double, kNumDirs>>> btable_;
  std::vector<std::vector<BPoint>> bpoint_;
  std::vector<std::vector<int>> class_pos_;
  std::vector<double> class_diag_;
  std::vector<std::uint8_t> class_free_;
};

// ---------------------------------------------------------------------------
// Assembled form (tests, coarse solves, spectral analysis)
// ---------------------------------------------------------------------------

// Global sparse matrix with the same action as op.apply(mode): per-element
// accumulation for the exact kind, direct stencil evaluation for the
// surrogate kind. Duplicate interface contributions sum, mirroring the
// interface reduction of the matrix-free path.
inline Eigen::SparseMatrix<double> assemble(const Operator& op,
                                            ApplyMode mode) {
  const LevelContext& ctx = *op.ctx();
  const int m = ctx.m;
  const int n = lattice_n(m);
  const int ntri = int(ctx.mesh->tris.size());
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(std::size_t(ctx.n_global) * 8);

  if (mode == ApplyMode::constrained) {
    for (int t = 0; t < ntri; ++t)
      for (std::int64_t k = 0; k < ctx.points_per_macro; ++k)
        if (ctx.owned[t][k] && ctx.dirichlet[t][k])
          trip.emplace_back(ctx.global_id[t][k], ctx.global_id[t][k], 1.0);
  }
  const auto row_is_dirichlet = [&](int t, std::int64_t idx) {
    return mode == ApplyMode::constrained && ctx.dirichlet[t][idx];
  };

  if (op.kind() == OperatorKind::exact) {
    Mat3 M;
    for (int t = 0; t < ntri; ++t) {
      const PatchAssembler& pa = op.assembler(t);
      for (const auto& term : op.terms()) {
        const auto emit = [&](bool upper, int a, int b) {
          pa.element_matrix(term.form, term.field, upper, a, b, M);
          const auto pts = pa.element_points(upper, a, b);
          std::int64_t pidx[3];
          std::int32_t gid[3];
          for (int r = 0; r < 3; ++r) {
            pidx[r] = lattice_index(m, pts[r].first, pts[r].second);
            gid[r] = ctx.global_id[t][pidx[r]];
          }
          for (int r = 0; r < 3; ++r) {
            if (row_is_dirichlet(t, pidx[r])) continue;
            for (int c = 0; c < 3; ++c)
              trip.emplace_back(gid[r], gid[c], term.scale * M(r, c));
          }
        };
        for (int b = 0; b <= n - 1; ++b)
          for (int a = 0; a <= n - 1 - b; ++a) emit(false, a, b);
        for (int b = 0; b <= n - 2; ++b)
          for (int a = 0; a <= n - 2 - b; ++a) emit(true, a, b);
      }
    }
  } else {
    StencilRow row;
    for (int t = 0; t < ntri; ++t) {
      for (int j = 1; j <= n - 2; ++j) {
        for (int i = 1; i <= n - j - 1; ++i) {
          op.interior_row(t, i, j, row);
          const std::int32_t gr =
              ctx.global_id[t][lattice_index(m, i, j)];
          for (int d = 0; d < kNumDirs; ++d) {
            const auto off = kDirOffset[d];
            const std::int32_t gc =
                ctx.global_id[t][lattice_index(m, i + off.di, j + off.dj)];
            trip.emplace_back(gr, gc, row.w[d]);
          }
        }
      }
      for_each_boundary_lattice_point(
          m, [&](int i, int j, std::int64_t idx, int) {
            if (row_is_dirichlet(t, idx)) return;
            const auto& bt = op.boundary_row(t, i, j);
            const std::int32_t gr = ctx.global_id[t][idx];
            for (int d = 0; d < kNumDirs; ++d) {
              if (bt[d] == 0.0) continue;
              const auto off = kDirOffset[d];
              const std::int32_t gc =
                  ctx.global_id[t][lattice_index(m, i + off.di, j + off.dj)];
              trip.emplace_back(gr, gc, bt[d]);
            }
          });
    }
  }

  Eigen::SparseMatrix<double> A(ctx.n_global, ctx.n_global);
  A.setFromTriplets(trip.begin(), trip.end());
  return A;
}

// Owner copies -> global vector.
inline Eigen::VectorXd to_global(const GridFunction& g) {
  const LevelContext& ctx = *g.ctx();
  Eigen::VectorXd x(ctx.n_global);
  for (std::size_t t = 0; t < g.macros(); ++t)
    for (std::int64_t k = 0; k < ctx.points_per_macro; ++k)
      if (ctx.owned[t][k]) x[ctx.global_id[t][k]] = g.at(int(t), k);
  return x;
}

// Global vector -> all alias copies.
inline void from_global(const Eigen::VectorXd& x, GridFunction& g) {
  const LevelContext& ctx = *g.ctx();
  for (std::size_t t = 0; t < g.macros(); ++t)
    for (std::int64_t k = 0; k < ctx.points_per_macro; ++k)
      g.at(int(t), k) = x[ctx.global_id[t][k]];
}

// r = f - A u (constrained rows: r = f - u there).
inline void residual(const Operator& A, const GridFunction& u,
                     const GridFunction& f, GridFunction& r) {
  A.apply(u, r, ApplyMode::constrained);
  for (std::size_t t = 0; t < r.macros(); ++t) {
    const auto& fd = f.data(int(t));
    auto& rd = r.data(int(t));
    for (std::size_t k = 0; k < rd.size(); ++k) rd[k] = fd[k] - rd[k];
  }
}

// Load vector b_i = integral of f * phi_i by per-element quadrature.
inline GridFunction load_vector(const LevelPtr& ctx,
                                const std::function<double(const Vec2&)>& f,
                                int quad_degree = 4) {
  GridFunction b(ctx);
  const TriangleQuadrature& rule = quadrature_rule(quad_degree);
  const int m = ctx->m;
  const int n = lattice_n(m);
  const std::size_t nq = rule.points.size();
  for (std::size_t t = 0; t < ctx->mesh->tris.size(); ++t) {
    const MacroTriangle& tri = ctx->mesh->tris[t];
    const Vec2 e1 = tri.A.col(0) / double(n);
    const Vec2 e2 = tri.A.col(1) / double(n);
    const double det = e1.x() * e2.y() - e1.y() * e2.x();
    // Per shape class: physical quadrature offsets from the (a,b) lattice
    // anchor and det-weighted basis values.
    struct QP {
      Vec2 off;
      double wphi[3];
    };
    std::array<std::vector<QP>, 2> qp;  // lower, upper
    for (int s = 0; s < 2; ++s) {
      Mat2 J;
      if (s == 0) {
        J.col(0) = e1;
        J.col(1) = e2;
      } else {
        J.col(0) = e2;
        J.col(1) = e2 - e1;
      }
      Vec2 shift = Vec2::Zero();
      if (s == 1) shift = e1;
      qp[s].resize(nq);
      for (std::size_t q = 0; q < nq; ++q) {
        const double x = rule.points[q].x(), y = rule.points[q].y();
        qp[s][q].off = shift + J * rule.points[q];
        const double w = rule.weights[q] * det;
        qp[s][q].wphi[0] = w * (1.0 - x - y);
        qp[s][q].wphi[1] = w * x;
        qp[s][q].wphi[2] = w * y;
      }
    }
    auto& bd = b.data(int(t));
    const auto accumulate = [&](bool upper, int a, int bb) {
      const Vec2 anchor = tri.b + double(a) * e1 + double(bb) * e2;
      const auto& shape = qp[upper ? 1 : 0];
      double val[3] = {0.0, 0.0, 0.0};
      for (std::size_t q = 0; q < nq; ++q) {
        const double fv = f(anchor + shape[q].off);
        val[0] += fv * shape[q].wphi[0];
        val[1] += fv * shape[q].wphi[1];
        val[2] += fv * shape[q].wphi[2];
      }
      if (upper) {
        bd[lattice_index(m, a + 1, bb)] += val[0];
        bd[lattice_index(m, a + 1, bb + 1)] += val[1];
        bd[lattice_index(m, a, bb + 1)] += val[2];
      } else {
        bd[lattice_index(m, a, bb)] += val[0];
        bd[lattice_index(m, a + 1, bb)] += val[1];
        bd[lattice_index(m, a, bb + 1)] += val[2];
      }
    };
    for (int bb = 0; bb <= n - 1; ++bb)
      for (int a = 0; a <= n - 1 - bb; ++a) accumulate(false, a, bb);
    for (int bb = 0; bb <= n - 2; ++bb)
      for (int a = 0; a <= n - 2 - bb; ++a) accumulate(true, a, bb);
  }
  reduce_interfaces_add(b);
  return b;
}

// Nodal boundary lift: g on the domain boundary, zero elsewhere.
inline GridFunction boundary_lift(const LevelPtr& ctx,
                                  const std::function<double(const Vec2&)>& g) {
  GridFunction u(ctx);
  set_dirichlet(u, g);
  return u;
}

// Turn f into the right-hand side of the homogenized problem: subtract the
// extended action on the lift and zero the Dirichlet rows. Solving A w =
// f_hom with zero boundary and adding the lift yields the original solution.
inline void homogenize_rhs(const Operator& A, const GridFunction& lift,
                           GridFunction& f) {
  GridFunction Au(A.ctx());
  A.apply(lift, Au, ApplyMode::extended);
  axpy(-1.0, Au, f);
  zero_dirichlet(f);
}

}  // namespace sfem

#pragma once

// Extension of dbar-closed slice forms: data build, weighted minimal-norm solve,
// f_delta assembly and the delta-schedule limit.
//
// The unknown is w = z_1 u. A grid field u is finite at every node, so w vanishes on the
// slice plane z_1 = 0; the solve minimises ||w|| over {w : dbar w = beta, w|_{z_1=0} = 0},
// which is the weighted problem min int |z_1|^2 |u|^2 subject to dbar(z_1 u) = z_1 alpha.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dbarx/form_algebra.hpp"
#include "dbarx/grid.hpp"
#include "dbarx/operators.hpp"
#include "dbarx/profiles.hpp"
#include "dbarx/spectral.hpp"

namespace dbarx {

class SolverError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A (0,q)-form on the slice D^0, tangential components only.
class SliceForm {
public:
  SliceForm() = default;
  SliceForm(int n, int q, std::size_t slice_nodes) : data_(n, q, slice_nodes) {}

  int dim() const { return data_.dim(); }
  int degree() const { return data_.degree(); }
  std::size_t nodes() const { return data_.nodes(); }
  const FormField& field() const { return data_; }

  void set(const MultiIndex& K, CArray values) {
    if (K.contains(1)) throw std::invalid_argument("SliceForm: component " + K.str() + " contains index 1");
    data_.set(K, std::move(values));
  }
  std::span<const cplx> get(const MultiIndex& K) const { return data_.get(K); }
  const std::map<MultiIndex, CArray>& stored() const { return data_.stored(); }

  /// Sample each tangential component from f_K(z') on the masked slice nodes.
  static SliceForm sample(const Grid& g, int q,
                          const std::function<cplx(const MultiIndex&, std::span<const cplx>)>& coef) {
    SliceForm f(g.n(), q, g.slice_size());
    for (const auto& K : tangential_multiindices(g.n(), q)) {
      CArray v(g.slice_size(), cplx{});
      bool any = false;
      for (std::size_t s = 0; s < g.slice_size(); ++s) {
        const std::size_t node = g.slice_to_node(s);
        if (!g.mask()[node]) continue;
        v[s] = coef(K, g.point(node));
        any = any || v[s] != cplx{};
      }
      if (any) f.set(K, std::move(v));
    }
    return f;
  }

private:
  FormField data_;
};

inline double slice_norm(const Grid& g, const SliceForm& f) { return l2_norm(f.field(), g.slice_volume()); }

/// Replicate each slice component along the z_1 plane; components containing 1 stay zero.
inline FormField lift_slice_form(const SliceForm& f, const Grid& g) {
  if (f.dim() != g.n() || f.nodes() != g.slice_size()) throw std::invalid_argument("lift_slice_form: grid mismatch");
  FormField out(g.n(), f.degree(), g.size());
  const std::size_t inner = g.stride(1);
  for (const auto& [K, vals] : f.stored()) {
    CArray& o = out.at(K);
    for (std::size_t node = 0; node < g.size(); ++node)
      if (g.mask()[node]) o[node] = vals[node % inner];
  }
  return out;
}

/// Restrict to z_1 = 0 and keep the components without index 1.
inline SliceForm trace(const FormField& field, const Grid& g) {
  if (field.nodes() != g.size()) throw std::invalid_argument("trace: grid mismatch");
  if (g.slice_nodes().empty()) throw std::invalid_argument("trace: slice plane missing");
  SliceForm out(g.n(), field.degree(), g.slice_size());
  for (const auto& [K, vals] : field.stored()) {
    if (K.contains(1)) continue;
    CArray v(g.slice_size(), cplx{});
    for (std::size_t s = 0; s < g.slice_size(); ++s) v[s] = vals[g.slice_to_node(s)];
    out.set(K, std::move(v));
  }
  return out;
}

/// Relative slice L^2 error ||trace - f|| / ||f|| (absolute when f = 0).
inline double trace_error(const Grid& g, const SliceForm& tr, const SliceForm& f) {
  FormField diff = field_axpy(-1.0, f.field(), tr.field());
  const double e = l2_norm(diff, g.slice_volume());
  const double nf = slice_norm(g, f);
  return nf > 0 ? e / nf : e;
}

/// beta = (dbar chi_delta) ^ f = z_1 alpha_delta. chi must depend on z_1 only.
inline FormField build_beta(const OperatorBundle& b, const FormField& f_lifted, std::span<const cplx> chi) {
  const int q = f_lifted.degree();
  if (q + 1 > b.n()) throw std::invalid_argument("build_beta: degree overflow");
  const CArray dchi = b.dzbar_stencil(1).apply(b.grid(), chi);
  FormField beta = b.zero(q + 1);
  for (const auto& [K, vals] : f_lifted.stored()) {
    if (K.contains(1)) continue;
    const auto [sign, H] = insert_index(1, K);
    CArray& o = beta.at(H);
    for (std::size_t k = 0; k < vals.size(); ++k) o[k] = double(sign) * dchi[k] * vals[k];
  }
  return beta;
}

/// Which slice values of w are pinned to zero in the minimal-norm solve.
enum class SliceConstraint {
  none,        // plain minimal-norm solution of dbar w = beta
  tangential,  // components without index 1
  full         // all components: w = z_1 u with u finite
};

struct SolveOptions {
  double tol = 1e-7;
  int max_iter = 20000;
  SliceConstraint constraint = SliceConstraint::full;
  enum class Preconditioner { none, jacobi, spectral } preconditioner = Preconditioner::spectral;
  // Reused across solves on the same bundle when set; built on demand otherwise.
  const HodgePseudoInverse* spectral = nullptr;
};

struct SolveResult {
  FormField w;
  double residual_dbar = 0;       // ||dbar w - beta|| / ||beta||
  double residual_theta = 0;      // ||theta w|| / ||w|| off the slice strip |z_1| <= h
  double residual_theta_full = 0; // same over the whole domain
  int iterations = 0;
  bool converged = true;
  bool inconsistent = false;      // beta not dbar-closed: outside the range of dbar
  double norm_w = 0, norm_beta = 0;
};

namespace detail {

inline void axpy_inplace(double a, const FormField& x, FormField& y) {
  for (const auto& [K, xs] : x.stored()) {
    auto& o = y.at(K);
    for (std::size_t k = 0; k < xs.size(); ++k) o[k] += a * xs[k];
  }
}

inline void xpby_inplace(const FormField& x, double b, FormField& y) {
  for (const auto& [K, xs] : x.stored()) {
    auto& o = y.at(K);
    for (std::size_t k = 0; k < xs.size(); ++k) o[k] = xs[k] + b * o[k];
  }
}

inline bool pinned(const MultiIndex& K, SliceConstraint c) {
  return c == SliceConstraint::full || (c == SliceConstraint::tangential && !K.contains(1));
}

// Inverse diagonal of dbar P theta on (q+1)-forms, from per-plane stencil sums
//   (D D*)_pp = sum_m |D_pm|^2 w_p / w_m.
// Zero where the diagonal vanishes (those rows of the operator are empty).
inline FormField inverse_normal_diagonal(const OperatorBundle& b, int degree, SliceConstraint c) {
  const Grid& g = b.grid();
  const int n = g.n();
  const int centre = g.plane(1).center;
  std::vector<RArray> full(n), skip(n);
  for (int j = 1; j <= n; ++j) {
    const PlaneGrid& pg = g.plane(j);
    full[j - 1].assign(pg.size(), 0.0);
    skip[j - 1].assign(pg.size(), 0.0);
    const PlaneStencil& D = b.dzbar_stencil(j);
    for (int p = 0; p < pg.size(); ++p)
      for (const auto& t : D.row(p)) {
        const int m = p + t.offset;
        const double v = std::norm(t.coef) * pg.weight[p] / pg.weight[m];
        full[j - 1][p] += v;
        if (!(j == 1 && m == centre)) skip[j - 1][p] += v;
      }
  }
  FormField inv(n, degree, g.size());
  for (const auto& H : all_multiindices(n, degree)) {
    auto& out = inv.at(H);
    for (std::size_t node = 0; node < g.size(); ++node) {
      if (!g.mask()[node]) continue;
      double d = 0;
      const bool on_slice = g.digit(node, 1) == centre;
      for (int i : H) {
        const bool pin = pinned(remove_index(i, H).index, c);
        const int pi = g.digit(node, i);
        if (!pin) d += full[i - 1][pi];
        else if (i == 1) d += skip[0][pi];
        else if (!on_slice) d += full[i - 1][pi];
      }
      out[node] = d > 0 ? 1.0 / d : 0.0;
    }
  }
  return inv;
}

inline void zero_on_slice(const Grid& g, FormField& w, SliceConstraint c) {
  if (c == SliceConstraint::none) return;
  for (const auto& [K, vals] : w.stored()) {
    if (!pinned(K, c)) continue;
    auto& v = w.at(K);
    for (std::size_t node : g.slice_nodes()) v[node] = cplx{};
  }
}

}  // namespace detail

/// Nodes with |z_1| <= h_1: the slice plane and its stencil neighbours.
inline std::vector<std::uint8_t> slice_strip_mask(const Grid& g) {
  std::vector<std::uint8_t> m(g.size(), 0);
  const double h = g.h(1);
  for (std::size_t k = 0; k < g.size(); ++k)
    if (g.mask()[k] && std::abs(g.z(k, 1)) <= h * (1 + 1e-9)) m[k] = 1;
  return m;
}

/// Nodes whose plane neighbourhoods of Chebyshev radius `margin` are regular in every
/// coordinate: masked, full-cell weight, and centred stencils on both axes.
inline std::vector<std::uint8_t> interior_mask(const Grid& g, int margin) {
  std::vector<std::vector<std::uint8_t>> plane_ok(g.n());
  for (int j = 1; j <= g.n(); ++j) {
    const PlaneGrid& pg = g.plane(j);
    std::vector<std::uint8_t> regular(pg.size(), 0);
    for (int a = 0; a < pg.N; ++a)
      for (int b = 0; b < pg.N; ++b)
        regular[a * pg.N + b] = pg.inside(a, b) && pg.inside(a - 1, b) && pg.inside(a + 1, b) &&
                                pg.inside(a, b - 1) && pg.inside(a, b + 1) &&
                                std::abs(pg.weight[a * pg.N + b] - pg.h * pg.h) <= 1e-12 * pg.h * pg.h;
    auto reg = [&](int a, int b) { return a >= 0 && b >= 0 && a < pg.N && b < pg.N && regular[a * pg.N + b]; };
    plane_ok[j - 1].assign(pg.size(), 0);
    for (int a = 0; a < pg.N; ++a)
      for (int b = 0; b < pg.N; ++b) {
        bool ok = true;
        for (int da = -margin; da <= margin && ok; ++da)
          for (int db = -margin; db <= margin && ok; ++db) ok = reg(a + da, b + db);
        plane_ok[j - 1][a * pg.N + b] = ok;
      }
  }
  std::vector<std::uint8_t> m(g.size(), 0);
  for (std::size_t k = 0; k < g.size(); ++k) {
    bool ok = g.mask()[k] != 0;
    for (int j = 1; j <= g.n() && ok; ++j) ok = plane_ok[j - 1][g.digit(k, j)] != 0;
    m[k] = ok;
  }
  return m;
}

/// L^2 norm restricted to nodes where sel != 0 (sel empty: everywhere).
inline double masked_norm(const Grid& g, const FormField& u, std::span<const std::uint8_t> sel) {
  double total = 0;
  for (const auto& [K, v] : u.stored())
    total += detail::blocked_sum<double>(v.size(), [&](std::size_t k) {
      return (sel.empty() || sel[k]) ? std::norm(v[k]) * g.volume()[k] : 0.0;
    });
  return std::sqrt(total);
}

inline double masked_max(const FormField& u, std::span<const std::uint8_t> sel) {
  double m = 0;
  for (const auto& [K, v] : u.stored())
    for (std::size_t k = 0; k < v.size(); ++k)
      if (sel.empty() || sel[k]) m = std::max(m, std::abs(v[k]));
  return m;
}

/// Minimal-norm w with dbar w = beta under the slice constraint, via conjugate gradients on
/// (dbar P theta) s = beta and w = P theta s, where P zeroes the constrained slice values.
inline SolveResult solve_min_norm(const OperatorBundle& b, const FormField& beta, const SolveOptions& opt = {}) {
  const Grid& g = b.grid();
  const int q = beta.degree() - 1;
  if (q < 0) throw std::invalid_argument("solve_min_norm: beta must have degree >= 1");
  SolveResult res;
  res.w = b.zero(q);
  res.norm_beta = b.norm(beta);
  if (res.norm_beta == 0) {
    res.iterations = 0;
    return res;
  }
  if (beta.degree() < b.n()) {
    const double closed = b.norm(b.dbar(beta));
    res.inconsistent = closed > 1e-8 * res.norm_beta / g.h_max();
  }

  auto apply = [&](const FormField& s) {
    FormField t = b.theta(s);
    detail::zero_on_slice(g, t, opt.constraint);
    return b.dbar(t);
  };

  // Preconditioned CG in the volume-weighted inner product; the diagonal scaling
  // commutes with the quadrature weights so the preconditioned operator stays self-adjoint.
  using PC = SolveOptions::Preconditioner;
  FormField minv;
  if (opt.preconditioner != PC::none) minv = detail::inverse_normal_diagonal(b, q + 1, opt.constraint);
  std::unique_ptr<HodgePseudoInverse> own;
  const HodgePseudoInverse* spectral = opt.spectral;
  if (opt.preconditioner == PC::spectral && !spectral) {
    own = std::make_unique<HodgePseudoInverse>(b);
    spectral = own.get();
  }
  auto precondition = [&](const FormField& r) {
    if (opt.preconditioner == PC::none) return r;
    // The spectral part is blind to a thin band of near-kernel modes concentrated on
    // small cut cells; the additive diagonal keeps those visible to the iteration.
    FormField z = opt.preconditioner == PC::spectral ? spectral->apply(r) : b.zero(r.degree());
    for (const auto& [K, rs] : r.stored()) {
      auto& zs = z.at(K);
      auto ms = minv.get(K);
      for (std::size_t k = 0; k < zs.size(); ++k) zs[k] += rs[k] * ms[k].real();
    }
    return z;
  };

  FormField s = b.zero(q + 1);
  FormField r = beta;
  FormField z = precondition(r);
  FormField p = z;
  double rz = b.inner(r, z).real();
  double rr = b.inner(r, r).real();
  const double target = opt.tol * res.norm_beta;
  double best = std::sqrt(rr);
  int it = 0, restarts = 0;
  constexpr int max_restarts = 8;
  res.converged = false;
  while (it < opt.max_iter) {
    if (std::sqrt(rr) <= target) {
      // confirm against the true residual; restart from it if the recursion drifted
      r = field_axpy(-1.0, apply(s), beta);
      rr = b.inner(r, r).real();
      if (std::sqrt(rr) <= target || ++restarts > max_restarts) {
        res.converged = std::sqrt(rr) <= target;
        break;
      }
      z = precondition(r);
      p = z;
      rz = b.inner(r, z).real();
    }
    FormField Ap = apply(p);
    const double pAp = b.inner(p, Ap).real();
    if (!(pAp > 0)) break;
    const double alpha = rz / pAp;
    detail::axpy_inplace(alpha, p, s);
    detail::axpy_inplace(-alpha, Ap, r);
    rr = b.inner(r, r).real();
    best = std::min(best, std::sqrt(rr));
    z = precondition(r);
    const double rz_new = b.inner(r, z).real();
    detail::xpby_inplace(z, rz_new / rz, p);
    rz = rz_new;
    ++it;
  }
  if (!res.converged && std::sqrt(rr) <= target) res.converged = true;
  res.iterations = it;

  res.w = b.theta(s);
  detail::zero_on_slice(g, res.w, opt.constraint);
  res.norm_w = b.norm(res.w);
  FormField defect = field_axpy(-1.0, beta, b.dbar(res.w));
  res.residual_dbar = b.norm(defect) / res.norm_beta;
  if (q >= 1 && res.norm_w > 0) {
    FormField tw = b.theta(res.w);
    const auto strip = slice_strip_mask(g);
    std::vector<std::uint8_t> off(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) off[k] = g.mask()[k] && !strip[k];
    res.residual_theta = masked_norm(g, tw, off) / res.norm_w;
    res.residual_theta_full = b.norm(tw) / res.norm_w;
  }
  // A stagnating residual on a closed beta points at inconsistent data as well.
  if (!res.converged && best > 1e-3 * res.norm_beta) res.inconsistent = true;
  return res;
}

/// f_delta = chi_delta f - w.
inline FormField assemble_f_delta(const FormField& f_lifted, std::span<const cplx> chi, const FormField& w) {
  if (!f_lifted.compatible(w)) throw std::invalid_argument("assemble_f_delta: degree or grid mismatch");
  return field_axpy(-1.0, w, field_multiply(chi, f_lifted));
}

// ---------------------------------------------------------------------------------------

/// Feasibility rule for the cut-off annulus: delta >= h_1 (one cell between delta and 2 delta).
inline bool schedule_feasible(const Grid& g, double delta_min) { return delta_min >= g.h(1) * (1 - 1e-9); }

/// delta_k = delta0 * 2^-k while feasible.
inline std::vector<double> geometric_schedule(const Grid& g, double delta0 = 0.25) {
  std::vector<double> s;
  for (double d = delta0; schedule_feasible(g, d); d *= 0.5) s.push_back(d);
  return s;
}

struct Probe {
  std::string label;
  std::vector<cplx> point;
  std::size_t node = 0;
};

struct DeltaRecord {
  double delta = 0;
  double norm_f_delta = 0;
  double norm_w = 0;
  double norm_beta = 0;
  double norm_alpha = 0;          // ||beta / z_1|| over z_1 != 0
  double thm_ratio = 0;           // ||w|| / (delta ||alpha||)
  double c_empirical = 0;         // ||f_delta||_D / ||f||_{D^0}
  double trace_error = 0;         // tangential trace of f_delta against f
  double w_trace_tangential = 0;  // ||w_H|_{z_1=0}|| over H without 1
  double w_trace_normal = 0;      // same for H containing 1
  double residual_dbar = 0;
  double residual_theta = 0;
  double residual_theta_full = 0;
  double closedness = 0;          // ||dbar f_delta|| / (||f_lift|| + ||w||)
  double laplace_interior = 0;    // interior ||Delta f_delta|| / ||f_delta||
  double cauchy = -1;             // ||f_delta - f_previous delta||, -1 for the first entry
  int iterations = 0;
  bool converged = true;
  bool inconsistent = false;
  std::vector<std::vector<cplx>> probe_values;  // per probe, per tangential component
};

struct ExtensionReport {
  int n = 0, q = 0, resolution = 0;
  double tol = 0;
  double norm_f_slice = 0;
  bool intake_closed = true;
  double intake_residual = 0;
  std::vector<Probe> probes;
  std::vector<MultiIndex> probe_components;
  std::vector<DeltaRecord> records;
  FormField f_tilde;        // f_delta at the smallest delta
  FormField w_final;
  std::vector<FormField> f_deltas;  // only with ExtensionOptions::keep_all
  bool complete = true;     // false if some delta failed
  std::string failure;
};

struct ExtensionOptions {
  SolveOptions solve;
  int interior_margin = 3;
  bool keep_fields = true;
  bool keep_all = false;  // retain f_delta for every delta in ExtensionReport::f_deltas
};

/// Default probes: slice points z_1 = 0 and off-slice points with |z_1| = R_1/2.
inline std::vector<Probe> default_probes(const Grid& g) {
  std::vector<Probe> out;
  auto add = [&](std::string label, cplx z1, double frac) {
    std::vector<cplx> p(g.n(), cplx{});
    p[0] = z1;
    if (g.n() >= 2) p[1] = cplx(frac * g.plane(2).R, 0);
    Probe pr{std::move(label), p, nearest_node(g, p)};
    out.push_back(pr);
  };
  add("slice-0", 0.0, 0.0);
  add("slice-quarter", 0.0, 0.25);
  add("offslice-0", cplx(0.5 * g.plane(1).R, 0), 0.0);
  add("offslice-quarter", cplx(0.5 * g.plane(1).R, 0), 0.25);
  return out;
}

/// Relative dbar residual of a slice form on the slice (zero for top slice degree).
inline double slice_closedness(const OperatorBundle& b, const SliceForm& f) {
  if (f.degree() + 1 > b.n() - 1) return 0.0;
  const Grid& g = b.grid();
  FormField lift = lift_slice_form(f, g);
  const double nf = b.norm(lift);
  if (nf == 0) return 0.0;
  return b.norm(b.dbar(lift)) * g.h_max() / nf;
}

inline ExtensionReport run_extension(const SliceForm& f, const std::vector<double>& schedule, const Grid& g,
                                     const OperatorBundle& b, const ExtensionOptions& opt = {}) {
  if (schedule.empty()) throw ConfigError("run_extension: empty delta schedule");
  for (std::size_t k = 1; k < schedule.size(); ++k)
    if (!(schedule[k] < schedule[k - 1])) throw ConfigError("run_extension: schedule must be strictly decreasing");
  if (!schedule_feasible(g, schedule.back()))
    throw ConfigError("run_extension: delta_min below one grid cell of z_1");
  if (2 * schedule.front() >= g.plane(1).R) throw ConfigError("run_extension: 2*delta_max exceeds the z_1 radius");

  ExtensionReport rep;
  rep.n = g.n();
  rep.q = f.degree();
  rep.resolution = g.resolution();
  rep.tol = opt.solve.tol;
  rep.norm_f_slice = slice_norm(g, f);
  rep.intake_residual = slice_closedness(b, f);
  rep.intake_closed = rep.intake_residual <= 1e-8;
  rep.probes = default_probes(g);
  rep.probe_components = tangential_multiindices(g.n(), f.degree());
  if (!rep.intake_closed) {
    rep.complete = false;
    rep.failure = "slice form is not dbar-closed";
    return rep;
  }

  const FormField lift = lift_slice_form(f, g);
  const double norm_lift = b.norm(lift);
  const auto profile = CutoffProfile::plateau();
  const auto interior = interior_mask(g, opt.interior_margin);
  std::optional<FormField> previous;
  SolveOptions solve = opt.solve;
  std::unique_ptr<HodgePseudoInverse> spectral;
  if (solve.preconditioner == SolveOptions::Preconditioner::spectral && !solve.spectral) {
    spectral = std::make_unique<HodgePseudoInverse>(b);
    solve.spectral = spectral.get();
  }

  for (double delta : schedule) {
    DeltaRecord rec;
    rec.delta = delta;
    const CArray chi = sample_cutoff(profile, delta, g);
    const FormField beta = build_beta(b, lift, chi);
    SolveResult sol = solve_min_norm(b, beta, solve);
    FormField fd = assemble_f_delta(lift, chi, sol.w);

    rec.norm_beta = sol.norm_beta;
    rec.norm_w = sol.norm_w;
    rec.residual_dbar = sol.residual_dbar;
    rec.residual_theta = sol.residual_theta;
    rec.residual_theta_full = sol.residual_theta_full;
    rec.iterations = sol.iterations;
    rec.converged = sol.converged;
    rec.inconsistent = sol.inconsistent;
    rec.norm_f_delta = b.norm(fd);
    rec.c_empirical = rep.norm_f_slice > 0 ? rec.norm_f_delta / rep.norm_f_slice : 0.0;

    // alpha = beta / z_1 away from the slice plane
    double a2 = 0;
    for (const auto& [H, v] : beta.stored())
      a2 += detail::blocked_sum<double>(v.size(), [&](std::size_t k) {
        const cplx z1 = g.z(k, 1);
        return std::abs(z1) > 0 ? std::norm(v[k] / z1) * g.volume()[k] : 0.0;
      });
    rec.norm_alpha = std::sqrt(a2);
    rec.thm_ratio = rec.norm_alpha > 0 ? rec.norm_w / (delta * rec.norm_alpha) : 0.0;

    rec.trace_error = trace_error(g, trace(fd, g), f);
    double tt = 0, tn = 0;
    for (const auto& [K, v] : sol.w.stored())
      for (std::size_t s = 0; s < g.slice_size(); ++s) {
        const double e = std::norm(v[g.slice_to_node(s)]) * g.slice_volume()[s];
        (K.contains(1) ? tn : tt) += e;
      }
    rec.w_trace_tangential = std::sqrt(tt);
    rec.w_trace_normal = std::sqrt(tn);

    if (fd.degree() < g.n()) rec.closedness = b.norm(b.dbar(fd)) / std::max(norm_lift + sol.norm_w, 1e-300);
    const FormField lap = b.laplacian(fd);
    const double fi = masked_norm(g, fd, interior);
    rec.laplace_interior = fi > 0 ? masked_norm(g, lap, interior) / fi : 0.0;

    if (previous) rec.cauchy = b.norm(field_axpy(-1.0, *previous, fd));
    for (const auto& pr : rep.probes) {
      std::vector<cplx> vals;
      for (const auto& K : rep.probe_components) vals.push_back(fd.get(K)[pr.node]);
      rec.probe_values.push_back(std::move(vals));
    }
    rep.records.push_back(std::move(rec));
    if (!sol.converged || sol.inconsistent) {
      rep.complete = false;
      rep.failure = "solver " + std::string(sol.inconsistent ? "flagged inconsistent data" : "did not converge") +
                    " at delta=" + std::to_string(delta);
    }
    if (opt.keep_all) rep.f_deltas.push_back(fd);
    previous = std::move(fd);
    if (opt.keep_fields) rep.w_final = std::move(sol.w);
    if (!rep.complete) break;
  }
  if (previous) rep.f_tilde = std::move(*previous);
  return rep;
}

}  // namespace dbarx

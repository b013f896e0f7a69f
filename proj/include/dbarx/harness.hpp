#pragma once

// Command layer behind the dbarx tool: extend, verify, sweep, show.
// Commands return process exit codes; ConfigError and SnapshotError escape to the caller,
// which maps them to exit code 2.

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "dbarx/config.hpp"
#include "dbarx/extension.hpp"
#include "dbarx/operators.hpp"
#include "dbarx/snapshot.hpp"
#include "dbarx/verifiers.hpp"

namespace dbarx {

enum ExitCode : int { exit_ok = 0, exit_failed_check = 1, exit_config_error = 2, exit_solver_failure = 3 };

inline constexpr const char* threads_env = "DBARX_THREADS";

/// Thread count: the environment variable wins over the config value.
inline int resolve_threads(int configured) {
  if (const char* s = std::getenv(threads_env); s && *s) {
    char* end = nullptr;
    const long v = std::strtol(s, &end, 10);
    if (*end != '\0' || v < 1 || v > 4096) throw ConfigError(std::string(threads_env) + " must be a positive integer");
    return static_cast<int>(v);
  }
  return configured;
}

/// Shortest round-trip-safe text for a double; locale independent.
inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Runs job(i) for i in [0, count) on up to `threads` workers. Results must be stored by index.
template <class Job>
void parallel_for(std::size_t count, int threads, Job&& job) {
  const std::size_t workers = std::min<std::size_t>(std::max(threads, 1), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (std::size_t t = 0; t < workers; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) job(i);
    });
}

namespace detail {

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir + ": " + ec.message());
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  out << text;
}

inline std::string join(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

inline nlohmann::ordered_json cplx_json(cplx z) { return nlohmann::ordered_json::array({z.real(), z.imag()}); }

}  // namespace detail

// ---------------------------------------------------------------------------------------
// Records

/// A named check with its tolerance. Tags name the property under test, or "plumbing".
struct CheckRecord {
  std::string tag;
  bool pass = true;
  double value = 0;
  double tolerance = 0;
  std::string note;
};

inline nlohmann::ordered_json check_json(const CheckRecord& r) {
  return {{"tag", r.tag}, {"pass", r.pass}, {"value", r.value}, {"tolerance", r.tolerance}, {"note", r.note}};
}

inline nlohmann::ordered_json verifier_json(const VerifierRecord& r) {
  return {{"tag", r.tag},         {"pass", r.pass},           {"value", r.value},
          {"reference", r.reference}, {"tolerance", r.tolerance}, {"note", r.note}};
}

/// max over schedule <= 1.5 x median over schedule.
inline double norm_stability(const ExtensionReport& rep) {
  std::vector<double> v;
  for (const auto& r : rep.records) v.push_back(r.norm_f_delta);
  if (v.empty()) return 0;
  std::vector<double> s = v;
  std::sort(s.begin(), s.end());
  const double med = s.size() % 2 ? s[s.size() / 2] : 0.5 * (s[s.size() / 2 - 1] + s[s.size() / 2]);
  const double mx = s.back();
  if (mx == 0) return 0;
  return med > 0 ? mx / med : std::numeric_limits<double>::infinity();
}

/// Invariant checks applied to every extension run.
inline std::vector<CheckRecord> extension_checks(const ExtensionReport& rep) {
  std::vector<CheckRecord> out;
  const double tol10 = 10 * rep.tol;
  out.push_back({"slice-closedness", rep.intake_closed, rep.intake_residual, 1e-8, "dbar f on the slice, relative"});
  for (const auto& r : rep.records) {
    const std::string at = "delta=" + fmt_double(r.delta);
    out.push_back({"dbar-constraint", r.residual_dbar <= tol10, r.residual_dbar, tol10, at});
    out.push_back({"minimal-norm", r.residual_theta <= tol10, r.residual_theta, tol10, at + ", off the slice strip"});
    out.push_back({"plumbing", r.converged && !r.inconsistent, static_cast<double>(r.iterations), 0,
                   at + (r.converged ? ", converged" : ", not converged")});
  }
  out.push_back({"norm-stability", norm_stability(rep) <= 1.5, norm_stability(rep), 1.5, "max/median of ||f_delta||"});
  return out;
}

inline nlohmann::ordered_json report_json(const ExtensionReport& rep, const std::vector<CheckRecord>& checks) {
  using oj = nlohmann::ordered_json;
  oj j;
  j["n"] = rep.n;
  j["q"] = rep.q;
  j["resolution"] = rep.resolution;
  j["tol"] = rep.tol;
  j["norm_f_slice"] = rep.norm_f_slice;
  j["intake_closed"] = rep.intake_closed;
  j["intake_residual"] = rep.intake_residual;
  j["complete"] = rep.complete;
  j["failure"] = rep.failure;
  oj probes = oj::array();
  for (const auto& p : rep.probes) {
    oj pt = oj::array();
    for (auto z : p.point) pt.push_back(detail::cplx_json(z));
    probes.push_back({{"label", p.label}, {"point", pt}});
  }
  j["probes"] = probes;
  oj comps = oj::array();
  for (const auto& K : rep.probe_components) comps.push_back(K.indices());
  j["probe_components"] = comps;
  oj recs = oj::array();
  for (const auto& r : rep.records) {
    oj pv = oj::array();
    for (const auto& per : r.probe_values) {
      oj row = oj::array();
      for (auto z : per) row.push_back(detail::cplx_json(z));
      pv.push_back(row);
    }
    recs.push_back({{"delta", r.delta},
                    {"norm_f_delta", r.norm_f_delta},
                    {"norm_w", r.norm_w},
                    {"norm_beta", r.norm_beta},
                    {"norm_alpha", r.norm_alpha},
                    {"thm_ratio", r.thm_ratio},
                    {"c_empirical", r.c_empirical},
                    {"trace_error", r.trace_error},
                    {"w_trace_tangential", r.w_trace_tangential},
                    {"w_trace_normal", r.w_trace_normal},
                    {"residual_dbar", r.residual_dbar},
                    {"residual_theta", r.residual_theta},
                    {"residual_theta_full", r.residual_theta_full},
                    {"closedness", r.closedness},
                    {"laplace_interior", r.laplace_interior},
                    {"cauchy", r.cauchy},
                    {"iterations", r.iterations},
                    {"converged", r.converged},
                    {"inconsistent", r.inconsistent},
                    {"probe_values", pv}});
  }
  j["records"] = recs;
  oj cj = oj::array();
  for (const auto& c : checks) cj.push_back(check_json(c));
  j["checks"] = cj;
  return j;
}

inline const char* summary_header() {
  return "delta,norm_f_delta,norm_w,trace_error,residual_theta,residual_dbar,laplace_interior,c_empirical,thm_ratio,"
         "cauchy,iterations,converged\n";
}

inline std::string summary_csv(const ExtensionReport& rep) {
  std::string s = summary_header();
  for (const auto& r : rep.records) {
    for (double v : {r.delta, r.norm_f_delta, r.norm_w, r.trace_error, r.residual_theta, r.residual_dbar,
                     r.laplace_interior, r.c_empirical, r.thm_ratio, r.cauchy})
      s += fmt_double(v) + ",";
    s += std::to_string(r.iterations) + "," + (r.converged ? "1" : "0") + "\n";
  }
  return s;
}

// ---------------------------------------------------------------------------------------
// Shared setup

struct Workspace {
  Grid grid;
  OperatorBundle bundle;
  explicit Workspace(const ExperimentConfig& c) : grid(build_grid(c.domain, c.resolution)), bundle(grid) {}
};

inline ExtensionOptions extension_options(const ExperimentConfig& c) {
  ExtensionOptions o;
  o.solve = solve_options(c.solver);
  return o;
}

// ---------------------------------------------------------------------------------------
// extend

/// Runs the extension pipeline and writes report.json, summary.csv, config.json and the
/// f_tilde / w snapshots into out_dir.
inline int cmd_extend(const ExperimentConfig& c, std::ostream& log) {
  validate_config(c);
  detail::ensure_dir(c.out_dir);
  Workspace ws(c);
  const SliceForm f = make_slice_form(c, ws.grid);
  const ExtensionReport rep = run_extension(f, config_schedule(c), ws.grid, ws.bundle, extension_options(c));
  const auto checks = extension_checks(rep);

  detail::write_text(detail::join(c.out_dir, "config.json"), emit_config(c));
  detail::write_text(detail::join(c.out_dir, "report.json"), report_json(rep, checks).dump(2) + "\n");
  detail::write_text(detail::join(c.out_dir, "summary.csv"), summary_csv(rep));
  if (rep.f_tilde.nodes() == ws.grid.size()) write_snapshot(detail::join(c.out_dir, "f_tilde.snap"), ws.grid, rep.f_tilde);
  if (rep.w_final.nodes() == ws.grid.size()) write_snapshot(detail::join(c.out_dir, "w.snap"), ws.grid, rep.w_final);

  log << summary_csv(rep);
  if (!rep.complete) {
    log << "extend: incomplete run (" << rep.failure << "); artifacts in " << c.out_dir << " are partial\n";
    return rep.intake_closed ? exit_solver_failure : exit_failed_check;
  }
  int code = exit_ok;
  for (const auto& ch : checks)
    if (!ch.pass) {
      log << "extend: check failed: " << ch.tag << " value=" << fmt_double(ch.value) << " tol=" << fmt_double(ch.tolerance)
          << " (" << ch.note << ")\n";
      code = exit_failed_check;
    }
  return code;
}

// ---------------------------------------------------------------------------------------
// verify

namespace detail {

inline bool selected(const ExperimentConfig& c, const std::string& name) {
  if (c.verify.verifiers.empty()) return true;
  return std::find(c.verify.verifiers.begin(), c.verify.verifiers.end(), name) != c.verify.verifiers.end();
}

inline VerifierRecord skipped(std::string tag, std::string why) {
  VerifierRecord r;
  r.tag = std::move(tag);
  r.pass = true;
  r.note = "skipped: " + why;
  return r;
}

/// Random field supported on nodes at least `margin` cells inside the mask.
inline FormField random_interior_field(const Grid& g, int q, std::span<const std::uint8_t> interior, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  FormField u(g.n(), q, g.size());
  for (const auto& K : all_multiindices(g.n(), q)) {
    auto& v = u.at(K);
    for (std::size_t k = 0; k < g.size(); ++k)
      if (interior[k]) v[k] = cplx(nd(rng), nd(rng));
  }
  return u;
}

}  // namespace detail

/// dbar composed with dbar, assembled, and the adjointness defect on random pairs.
inline std::vector<VerifierRecord> operator_checks(const OperatorBundle& b, std::uint64_t seed, int pairs = 20) {
  const Grid& g = b.grid();
  std::vector<VerifierRecord> out;
  for (int q = 0; q + 2 <= g.n(); ++q) {
    const SparseMatrix A = assemble_sparse(b, q, false);
    const SparseMatrix B = assemble_sparse(b, q + 1, false);
    const SparseMatrix C = multiply(B, A);
    const double scale = A.max_abs() * B.max_abs();
    VerifierRecord r;
    r.tag = "dbar-squared";
    r.value = C.max_abs();
    r.reference = scale;
    r.tolerance = 1e-12 * scale;
    r.pass = r.value <= r.tolerance;
    r.note = "q=" + std::to_string(q) + ", max entry of the assembled composition";
    out.push_back(r);
  }
  const auto interior = interior_mask(g, 2);
  std::mt19937_64 rng(seed);
  for (int q = 0; q < g.n(); ++q) {
    double worst = 0;
    for (int k = 0; k < pairs; ++k) {
      const FormField u = detail::random_interior_field(g, q, interior, rng);
      const FormField v = detail::random_interior_field(g, q + 1, interior, rng);
      const FormField du = b.dbar(u);
      const cplx lhs = b.inner(du, v);
      const cplx rhs = b.inner(u, b.theta(v));
      const double scale = b.norm(du) * b.norm(v);
      worst = std::max(worst, scale > 0 ? std::abs(lhs - rhs) / scale : std::abs(lhs - rhs));
    }
    VerifierRecord r;
    r.tag = "adjointness";
    r.value = worst;
    r.tolerance = 1e-10;
    r.pass = worst <= r.tolerance;
    r.note = "q=" + std::to_string(q) + ", " + std::to_string(pairs) + " random interior pairs";
    out.push_back(r);
  }
  return out;
}

inline std::vector<VerifierRecord> residue_records(const VerifySpec& v) {
  std::vector<VerifierRecord> out;
  for (double e : v.residue_eps) {
    VerifierRecord r;
    r.tag = "residue-identity";
    const cplx val = residue_check(e, v.quad_res);
    r.value = val.real();
    r.reference = std::numbers::pi * e * e / 9;
    r.tolerance = 1e-4;
    const double rel = std::abs(val - r.reference) / r.reference;
    r.pass = rel <= r.tolerance;
    r.note = "eps=" + fmt_double(e) + ", relative error " + fmt_double(rel);
    out.push_back(r);
  }
  return out;
}

/// Largest eps admissible for pairing and the default four-point schedule, or empty if the
/// grid is too coarse for any.
inline std::vector<double> default_pairing_eps(const Grid& g) {
  const double lo = pairing_eps_min(g), hi = pairing_eps_max(g);
  if (!(hi > lo)) return {};
  return pairing_schedule(hi, lo);
}

inline VerifierRecord pairing_record(const OperatorBundle& b, const FormField& field, const std::vector<double>& eps,
                                     const std::string& source) {
  const Grid& g = b.grid();
  VerifierRecord r;
  r.tag = "detector-regular";
  r.tolerance = pairing_floor;
  if (eps.empty()) return detail::skipped(r.tag, "no admissible eps at resolution " + std::to_string(g.resolution()));
  bool any = false;
  double worst = 0;
  std::string flagged;
  for (const auto& K : tangential_multiindices(g.n(), field.degree())) {
    const MultiIndex H = insert_index(1, K).index;
    const PairingReport p = pairing_test(b, field, H, eps);
    const double rel = p.scale > 0 ? std::abs(p.c0) / p.scale : 0.0;
    worst = std::max(worst, rel);
    if (p.singular) {
      any = true;
      flagged += " " + H.str();
    }
  }
  r.value = worst;
  r.pass = !any;
  r.note = source + ": singular=" + (any ? "true" : "false") + (any ? " at" + flagged : std::string{});
  return r;
}

/// Manufactured u = bump(z') / z_1 dzbar_2: constant pairing term against the quadrature oracle
/// and the singular flag.
inline std::vector<VerifierRecord> detector_records(const OperatorBundle& b, const std::vector<double>& eps) {
  const Grid& g = b.grid();
  std::vector<VerifierRecord> out;
  if (eps.empty()) {
    out.push_back(detail::skipped("detector-constant", "no admissible eps at resolution " + std::to_string(g.resolution())));
    return out;
  }
  SingularDecomposition s;
  s.h = FormField(g.n(), 1, g.slice_size());
  s.g = FormField(g.n(), 1, g.size());
  auto& hv = s.h.at(MultiIndex{2});
  for (std::size_t k = 0; k < g.slice_size(); ++k) hv[k] = slice_bump(g, g.point(g.slice_to_node(k)));
  const FormField u = manufacture_singular(g, s);
  const PairingReport p = pairing_test(b, u, MultiIndex{1, 2}, eps);
  const double ref = detector_reference(g);
  VerifierRecord c;
  c.tag = "detector-constant";
  c.value = p.c0.real();
  c.reference = ref;
  c.tolerance = 0.1;
  const double rel = std::abs(p.c0 - ref) / std::abs(ref);
  c.pass = rel <= c.tolerance;
  c.note = "relative error " + fmt_double(rel) + ", leading " + p.leading;
  out.push_back(c);
  VerifierRecord f;
  f.tag = "detector-singular";
  f.value = std::abs(p.c0);
  f.reference = p.scale;
  f.tolerance = pairing_floor;
  f.pass = p.singular;
  f.note = std::string("singular=") + (p.singular ? "true" : "false");
  out.push_back(f);
  return out;
}

/// Mean-value radii: {4h, 8h} when the larger ball fits, otherwise {2h, 4h}.
inline std::vector<double> mean_value_radii(const Grid& g) {
  const double h = g.h_max();
  double R = g.plane(1).R;
  for (int j = 2; j <= g.n(); ++j) R = std::min(R, g.plane(j).R);
  if (8 * h < 0.8 * R) return {4 * h, 8 * h};
  return {2 * h, 4 * h};
}

/// Centre test on f_tilde and radius-slope test on f_delta at the origin.
inline std::vector<VerifierRecord> mean_value_records(const Grid& g, const FormField& f_tilde, const FormField& f_delta,
                                                      double centre_constant = 10) {
  std::vector<VerifierRecord> out;
  const double h = g.h_max();
  double scale = max_abs(f_tilde);
  double dev = 0;
  for (const auto& z : slice_centres(g, 0.1)) dev = std::max(dev, max_of(mean_value_deviation(g, f_tilde, z, 2 * h)));
  VerifierRecord c;
  c.tag = "mean-value-centres";
  c.value = dev;
  c.reference = h * h * scale;
  c.tolerance = centre_constant * c.reference;
  c.pass = dev <= c.tolerance;
  c.note = "ball radius 2h, five slice centres, tolerance C h^2 max|f| with C=" + fmt_double(centre_constant);
  out.push_back(c);

  const auto radii = mean_value_radii(g);
  const std::vector<cplx> origin(g.n(), cplx{});
  const double d0 = max_of(mean_value_deviation(g, f_delta, origin, radii[0]));
  const double d1 = max_of(mean_value_deviation(g, f_delta, origin, radii[1]));
  VerifierRecord s;
  s.tag = "mean-value-slope";
  s.value = d0 > 0 ? d1 / d0 : 0.0;
  s.reference = radii[1] / radii[0];
  s.tolerance = 0.5;
  s.pass = d0 == 0 ? d1 == 0 : std::abs(s.value / s.reference - 1) <= s.tolerance;
  s.note = "r=" + fmt_double(radii[0]) + "," + fmt_double(radii[1]) + ", deviation ratio against linear";
  out.push_back(s);
  return out;
}

/// Laplacian outside |z_1| > 2 delta and the inside-max scaling between consecutive deltas.
inline std::vector<VerifierRecord> laplacian_records(const OperatorBundle& b, const ExtensionReport& rep) {
  std::vector<VerifierRecord> out;
  std::vector<double> inside;
  for (std::size_t k = 0; k < rep.f_deltas.size(); ++k) {
    const double delta = rep.records[k].delta;
    const LaplacianSupport s = laplacian_support_check(b, rep.f_deltas[k], delta);
    VerifierRecord r;
    r.tag = "laplacian-support";
    r.value = s.max_outside;
    r.reference = s.norm_f;
    r.tolerance = 10 * rep.tol * s.norm_f;
    r.pass = s.max_outside <= r.tolerance;
    r.note = "delta=" + fmt_double(delta) + ", max |Delta f_delta| beyond 2 delta";
    out.push_back(r);
    inside.push_back(s.max_inside);
  }
  for (std::size_t k = 1; k < inside.size(); ++k) {
    VerifierRecord r;
    r.tag = "laplacian-scaling";
    r.value = inside[k - 1] > 0 ? inside[k] / inside[k - 1] : 0.0;
    r.reference = rep.records[k - 1].delta / rep.records[k].delta;
    r.tolerance = 0.6;
    r.pass = std::abs(r.value - r.reference) <= r.tolerance;
    r.note = "inside max ratio, delta " + fmt_double(rep.records[k - 1].delta) + " -> " + fmt_double(rep.records[k].delta);
    out.push_back(r);
  }
  return out;
}

inline std::vector<VerifierRecord> volume_records(const Grid& g, const std::vector<double>& schedule) {
  std::vector<VerifierRecord> out;
  const std::vector<cplx> origin(g.n(), cplx{});
  for (double d : schedule) {
    const VolumeBound v = volume_bound_check(g, d, origin);
    VerifierRecord r;
    r.tag = "strip-volume";
    r.value = *std::max_element(v.ratio.begin(), v.ratio.end());
    r.reference = v.bound;
    r.tolerance = v.bound;
    r.pass = r.value <= r.tolerance;
    r.note = "delta=" + fmt_double(d) + ", st in {2 delta, 4 delta}";
    out.push_back(r);
  }
  return out;
}

inline std::vector<VerifierRecord> run_verifiers(const ExperimentConfig& c, std::ostream& log) {
  validate_config(c, c.verify.snapshot.empty());
  std::vector<VerifierRecord> out;
  auto append = [&](std::vector<VerifierRecord> v) { out.insert(out.end(), v.begin(), v.end()); };
  using detail::selected;

  if (selected(c, "residue")) append(residue_records(c.verify));

  if (selected(c, "operators")) {
    ExperimentConfig small = c;
    small.resolution = c.domain.n == 2 ? std::min(c.resolution, 17) : std::min(c.resolution, 9);
    Workspace ws(small);
    append(operator_checks(ws.bundle, c.seed));
  }

  const bool need_field = selected(c, "laplacian-support") || selected(c, "mean-value") || selected(c, "pairing");
  const bool need_grid = need_field || selected(c, "detector") || selected(c, "volume");
  if (!need_grid) return out;
  Workspace ws(c);
  const Grid& g = ws.grid;
  const std::vector<double> eps = c.verify.eps.empty() ? default_pairing_eps(g) : c.verify.eps;

  if (need_field && !c.verify.snapshot.empty()) {
    const Snapshot snap = read_snapshot(c.verify.snapshot);
    if (snap.n != g.n() || snap.resolution != g.resolution() || snap.field.nodes() != g.size())
      throw ConfigError("verify: snapshot grid does not match the config (n, resolution)");
    for (int j = 1; j <= g.n(); ++j)
      if (std::abs(snap.radii[j - 1] - g.plane(j).R) > 1e-12)
        throw ConfigError("verify: snapshot radii do not match the config");
    if (selected(c, "pairing")) out.push_back(pairing_record(ws.bundle, snap.field, eps, "snapshot"));
    if (selected(c, "laplacian-support")) out.push_back(detail::skipped("laplacian-support", "needs a pipeline run"));
    if (selected(c, "mean-value")) append(mean_value_records(g, snap.field, snap.field));
  } else if (need_field) {
    ExtensionOptions opt = extension_options(c);
    opt.keep_all = true;
    const SliceForm f = make_slice_form(c, g);
    const ExtensionReport rep = run_extension(f, config_schedule(c), g, ws.bundle, opt);
    if (!rep.complete) {
      log << "verify: pipeline incomplete: " << rep.failure << "\n";
      throw SolverError(rep.failure);
    }
    if (selected(c, "laplacian-support")) append(laplacian_records(ws.bundle, rep));
    if (selected(c, "mean-value")) append(mean_value_records(g, rep.f_tilde, rep.f_tilde));
    if (selected(c, "pairing")) out.push_back(pairing_record(ws.bundle, rep.w_final, eps, "pipeline w"));
  }
  if (selected(c, "detector")) append(detector_records(ws.bundle, eps));
  if (selected(c, "volume")) append(volume_records(g, config_schedule(c)));
  return out;
}

inline std::string verify_csv(const std::vector<VerifierRecord>& recs) {
  std::string s = "tag,pass,value,reference,tolerance,note\n";
  for (const auto& r : recs)
    s += r.tag + "," + (r.pass ? "pass" : "fail") + "," + fmt_double(r.value) + "," + fmt_double(r.reference) + "," +
         fmt_double(r.tolerance) + ",\"" + r.note + "\"\n";
  return s;
}

inline int cmd_verify(const ExperimentConfig& c, std::ostream& log) {
  const auto recs = run_verifiers(c, log);
  detail::ensure_dir(c.out_dir);
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& r : recs) j.push_back(verifier_json(r));
  detail::write_text(detail::join(c.out_dir, "verify.json"), j.dump(2) + "\n");
  detail::write_text(detail::join(c.out_dir, "verify.csv"), verify_csv(recs));
  std::vector<std::string> failing;
  for (const auto& r : recs) {
    log << r.tag << ": " << (r.pass ? "pass" : "FAIL") << " value=" << fmt_double(r.value) << " (" << r.note << ")\n";
    if (!r.pass && std::find(failing.begin(), failing.end(), r.tag) == failing.end()) failing.push_back(r.tag);
  }
  if (failing.empty()) return exit_ok;
  log << "verify: failing tags:";
  for (const auto& t : failing) log << " " << t;
  log << "\n";
  return exit_failed_check;
}

// ---------------------------------------------------------------------------------------
// sweep

struct SweepPoint {
  std::string preset;
  int resolution = 0;
};

struct SweepRow {
  std::string preset;
  int resolution = 0;
  double delta = 0;
  std::string metric;
  double value = 0;
  std::string status;
};

inline std::vector<SweepPoint> sweep_points(const ExperimentConfig& c) {
  const auto& s = c.sweep;
  if (s.deltas.empty() && s.resolutions.empty() && s.presets.empty()) throw ConfigError("sweep: all axes are empty");
  for (const auto& p : s.presets)
    if (!is_preset(p)) throw ConfigError("sweep: unknown preset '" + p + "'");
  for (int r : s.resolutions)
    if (r < 8 || r % 2 == 0) throw ConfigError("sweep: resolutions must be odd and >= 8");
  for (std::size_t k = 1; k < s.deltas.size(); ++k)
    if (!(s.deltas[k] < s.deltas[k - 1])) throw ConfigError("sweep: deltas must be strictly decreasing");
  std::vector<std::string> presets = s.presets;
  if (presets.empty()) presets.push_back(c.form.preset);
  std::vector<int> res = s.resolutions;
  if (res.empty()) res.push_back(c.resolution);
  std::vector<SweepPoint> out;
  for (const auto& p : presets)
    for (int r : res) out.push_back({p, r});
  return out;
}

/// Config of one sweep point: the preset's domain and degree, the base solver settings.
inline ExperimentConfig sweep_point_config(const ExperimentConfig& base, const SweepPoint& p) {
  ExperimentConfig c = base;
  if (!p.preset.empty()) {
    const ExperimentConfig pc = preset_config(p.preset);
    c.domain = pc.domain;
    c.form = pc.form;
  }
  c.resolution = p.resolution;
  if (!base.sweep.deltas.empty()) c.schedule.deltas = base.sweep.deltas;
  return c;
}

inline std::vector<SweepRow> run_sweep_point(const ExperimentConfig& base, const SweepPoint& p) {
  std::vector<SweepRow> rows;
  const std::string label = p.preset.empty() ? "custom" : p.preset;
  try {
    const ExperimentConfig c = sweep_point_config(base, p);
    validate_config(c);
    Workspace ws(c);
    ExtensionOptions opt = extension_options(c);
    opt.keep_fields = false;
    const ExtensionReport rep = run_extension(make_slice_form(c, ws.grid), config_schedule(c), ws.grid, ws.bundle, opt);
    for (const auto& r : rep.records) {
      const std::string status = r.inconsistent ? "inconsistent" : (r.converged ? "ok" : "not-converged");
      const std::pair<const char*, double> metrics[] = {
          {"thm_ratio", r.thm_ratio},         {"c_empirical", r.c_empirical},
          {"norm_f_delta", r.norm_f_delta},   {"norm_w", r.norm_w},
          {"trace_error", r.trace_error},     {"residual_theta", r.residual_theta},
          {"residual_dbar", r.residual_dbar}, {"laplace_interior", r.laplace_interior},
          {"w_trace_tangential", r.w_trace_tangential}, {"cauchy", r.cauchy},
          {"iterations", static_cast<double>(r.iterations)}};
      for (const auto& [m, v] : metrics) rows.push_back({label, p.resolution, r.delta, m, v, status});
    }
    if (!rep.complete && rep.records.empty())
      rows.push_back({label, p.resolution, 0, "status", 0, "failed: " + rep.failure});
  } catch (const ConfigError& e) {
    rows.push_back({label, p.resolution, 0, "status", 0, std::string("config-error: ") + e.what()});
  } catch (const std::exception& e) {
    rows.push_back({label, p.resolution, 0, "status", 0, std::string("error: ") + e.what()});
  }
  return rows;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string o = "\"";
  for (char ch : s) o += ch == '"' ? std::string("\"\"") : std::string(1, ch);
  return o + "\"";
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string s = "preset,resolution,delta,metric,value,status\n";
  for (const auto& r : rows)
    s += csv_field(r.preset) + "," + std::to_string(r.resolution) + "," + fmt_double(r.delta) + "," + r.metric + "," +
         fmt_double(r.value) + "," + csv_field(r.status) + "\n";
  return s;
}

/// Points run on the worker pool; rows are gathered by point index and written once.
inline std::string run_sweep(const ExperimentConfig& c) {
  const auto points = sweep_points(c);
  std::vector<std::vector<SweepRow>> results(points.size());
  parallel_for(points.size(), resolve_threads(c.threads), [&](std::size_t i) { results[i] = run_sweep_point(c, points[i]); });
  std::vector<SweepRow> rows;
  for (auto& r : results) rows.insert(rows.end(), r.begin(), r.end());
  return sweep_csv(rows);
}

inline int cmd_sweep(const ExperimentConfig& c, std::ostream& log) {
  if (c.threads < 1) throw ConfigError("threads must be >= 1");
  const std::string csv = run_sweep(c);
  detail::ensure_dir(c.out_dir);
  detail::write_text(detail::join(c.out_dir, "sweep.csv"), csv);
  log << csv;
  return exit_ok;
}

// ---------------------------------------------------------------------------------------
// show

inline void show_snapshot(const Snapshot& s, std::ostream& out) {
  out << "snapshot n=" << s.n << " q=" << s.q << " resolution=" << s.resolution << " nodes=" << s.field.nodes() << "\n";
  out << "radii:";
  for (double r : s.radii) out << " " << fmt_double(r);
  out << "\n";
  for (const auto& [K, v] : s.field.stored()) {
    double mx = 0, l2 = 0;
    for (auto z : v) {
      mx = std::max(mx, std::abs(z));
      l2 += std::norm(z);
    }
    out << "  component " << K.str() << ": max|.|=" << fmt_double(mx) << " l2(unweighted)=" << fmt_double(std::sqrt(l2))
        << "\n";
  }
}

/// Pretty-prints a snapshot, a JSON report or a CSV table.
inline int cmd_show(const std::string& path, std::ostream& out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("show: cannot open " + path);
  char magic[8] = {};
  in.read(magic, 8);
  if (in.gcount() == 8 && std::memcmp(magic, detail::snapshot_magic, 8) == 0) {
    show_snapshot(read_snapshot(path), out);
    return exit_ok;
  }
  in.clear();
  in.seekg(0);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  const auto j = nlohmann::ordered_json::parse(text, nullptr, false);
  if (!j.is_discarded()) {
    out << j.dump(2) << "\n";
    return exit_ok;
  }
  out << text;
  return exit_ok;
}

}  // namespace dbarx

// dbarx_acceptance: one PASS/FAIL line per acceptance criterion.
// Progress goes to stderr; the criterion lines go to stdout. Exit 0 only if all pass.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <map>
#include <memory>

#include "dbarx/harness.hpp"

using namespace dbarx;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Run {
  ExperimentConfig config;
  std::unique_ptr<Workspace> ws;
  ExtensionReport rep;
  double seconds = 0;
};

// Pipeline runs are shared between criteria; key is preset + resolution.
std::map<std::string, Run> runs;

const Run& pipeline(const std::string& preset, int resolution, std::vector<double> deltas = {}) {
  const std::string key = preset + "@" + std::to_string(resolution);
  if (auto it = runs.find(key); it != runs.end()) return it->second;
  Run r;
  r.config = preset_config(preset);
  r.config.resolution = resolution;
  r.config.schedule.deltas = std::move(deltas);
  validate_config(r.config);
  std::cerr << "running " << key << " ..." << std::flush;
  const auto t0 = Clock::now();
  r.ws = std::make_unique<Workspace>(r.config);
  ExtensionOptions opt = extension_options(r.config);
  opt.keep_all = true;
  r.rep = run_extension(make_slice_form(r.config, r.ws->grid), config_schedule(r.config), r.ws->grid, r.ws->bundle, opt);
  r.seconds = seconds_since(t0);
  std::cerr << " " << fmt_double(r.seconds) << " s" << (r.rep.complete ? "" : " (incomplete: " + r.rep.failure + ")") << "\n";
  return runs.emplace(key, std::move(r)).first->second;
}

int failures = 0;

void line(int id, bool pass, const std::string& name, const std::string& detail) {
  std::cout << "criterion " << id << " " << (pass ? "PASS" : "FAIL") << " " << name << ": " << detail << std::endl;
  if (!pass) ++failures;
}

std::string g4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.5g", v);
  return buf;
}

void residue() {
  const auto t0 = Clock::now();
  VerifySpec v;
  v.residue_eps = {0.1, 0.05};
  bool ok = true;
  std::string d;
  const auto recs = residue_records(v);
  for (std::size_t k = 0; k < recs.size(); ++k) {
    ok = ok && recs[k].pass;
    d += "eps " + g4(v.residue_eps[k]) + " ratio " + fmt_double(recs[k].value / recs[k].reference) + "; ";
  }
  const double t = seconds_since(t0);
  line(1, ok && t < 5, "residue identity", d + "tol 1e-4, " + g4(t) + " s (limit 5 s)");
}

void operators() {
  const auto t0 = Clock::now();
  const Grid g = build_grid(DomainSpec{}, 17);
  OperatorBundle b(g);
  bool ok = true;
  std::string d;
  for (const auto& r : operator_checks(b, 1, 20)) {
    ok = ok && r.pass;
    d += r.tag + " " + g4(r.tag == "dbar-squared" ? r.value / r.reference : r.value) + " (" +
         r.note.substr(0, r.note.find(',')) + "); ";
  }
  const double t = seconds_since(t0);
  line(2, ok && t < 30, "operator exactness", d + "limits 1e-12 relative and 1e-10, " + g4(t) + " s at resolution 17");
}

void minimizer() {
  bool ok = true;
  double worst = 0, worst_full = 0;
  int solves = 0;
  double tol = 0;
  for (const auto* p : {"n2-q0-z2", "n2-q1-constant"})
    for (int res : {17, 33}) {
      const Run& r = pipeline(p, res);
      tol = r.rep.tol;
      ok = ok && r.rep.complete;
      for (const auto& rec : r.rep.records) {
        ++solves;
        worst = std::max(worst, rec.residual_theta);
        worst_full = std::max(worst_full, rec.residual_theta_full);
      }
    }
  ok = ok && worst <= 10 * tol;
  line(3, ok, "minimizer characterization",
       std::to_string(solves) + " solves, max ||theta w||/||w|| " + g4(worst) + " (limit " + g4(10 * tol) +
           "); including the slice strip " + g4(worst_full));
}

void uniformity() {
  const Run& r = pipeline("n2-q1-constant", 33);
  std::vector<double> ratio;
  std::string d;
  for (const auto& rec : r.rep.records) {
    ratio.push_back(rec.thm_ratio);
    d += "delta " + g4(rec.delta) + ": " + g4(rec.thm_ratio) + "; ";
  }
  bool ok = r.rep.complete && ratio.size() == 3;
  double spread = 0;
  bool increasing = false;
  if (ok) {
    const auto [lo, hi] = std::minmax_element(ratio.begin(), ratio.end());
    spread = *hi / *lo - 1;
    increasing = ratio[1] > ratio[0] && ratio[2] > ratio[1];
    ok = spread <= 0.5 && !increasing;
  }
  line(4, ok, "uniformity of ||w||/(delta ||alpha||)",
       d + "spread " + g4(spread) + " (limit 0.5), monotone increase " + (increasing ? "yes" : "no") + ", " +
           g4(r.seconds) + " s");
}

void norm_bound() {
  bool ok = true;
  std::string d;
  // resolution 17 leaves delta = h as the last step; the n = 2 presets use 33 so the last two deltas
  // are resolved. n3 at its default resolution admits a single delta, so it runs at 11 with two.
  const std::pair<const char*, std::pair<int, std::vector<double>>> cases[] = {
      {"zero-form", {33, {}}},      {"n2-q0-z2", {33, {}}},       {"n2-q1-constant", {33, {}}},
      {"n2-q1-bump", {33, {}}},     {"n3-q1-constant", {11, {0.3, 0.2}}}, {"singular-detector-input", {33, {}}}};
  for (const auto& [p, spec] : cases) {
    const Run& r = pipeline(p, spec.first, spec.second);
    const auto& rec = r.rep.records;
    bool here = r.rep.complete && rec.size() >= 2;
    double a = 0, b = 0, rel = 0;
    if (here) {
      a = rec[rec.size() - 2].c_empirical;
      b = rec.back().c_empirical;
      here = std::isfinite(a) && std::isfinite(b);
      rel = std::max(a, b) > 0 ? std::abs(a - b) / std::max(a, b) : 0.0;
      here = here && rel <= 0.2;
    }
    ok = ok && here;
    d += std::string(p) + "@" + std::to_string(spec.first) + " c=";
    for (std::size_t k = 0; k < rec.size(); ++k) d += (k ? "," : "") + g4(rec[k].c_empirical);
    d += " change " + g4(rel) + (here ? "" : " FAIL") + "; ";
  }
  line(5, ok, "extension norm bound", d + "limit 0.2 between the last two deltas");
}

void trace_recovery() {
  bool ok = true;
  std::string d;
  for (const auto* p : {"n2-q1-constant", "n2-q0-z2"}) {
    const Run& fine = pipeline(p, 33);
    const Run& coarse = pipeline(p, 17);
    const double ef = fine.rep.records.back().trace_error, ec = coarse.rep.records.back().trace_error;
    // exact recovery at both resolutions satisfies the refinement clause
    const bool exact = ef <= 1e-14 && ec <= 1e-14;
    const bool here = fine.rep.complete && coarse.rep.complete && ef <= 0.05 && (ef < ec || exact);
    ok = ok && here;
    d += std::string(p) + " " + g4(ec) + " -> " + g4(ef) + (exact ? " (exact)" : "") + "; ";
  }
  line(6, ok, "trace recovery", d + "resolution 17 -> 33 at the final delta, limit 0.05 and strictly decreasing");
}

void harmonicity() {
  bool ok = true;
  std::string d;
  for (const auto* p : {"n2-q1-constant", "n2-q0-z2"}) {
    const double lc = pipeline(p, 17).rep.records.back().laplace_interior;
    const double lf = pipeline(p, 33).rep.records.back().laplace_interior;
    const double factor = lf > 0 ? lc / lf : INFINITY;
    ok = ok && factor >= 2;
    d += std::string(p) + " " + g4(lc) + " -> " + g4(lf) + " (factor " + g4(factor) + "); ";
  }
  line(7, ok, "harmonicity of the extension", d + "interior ||Delta f||/||f||, resolution 17 -> 33, factor limit 2");
}

void laplacian_structure() {
  const Run& r = pipeline("n2-q1-constant", 33);
  bool ok = r.rep.complete && r.rep.f_deltas.size() == 3;
  std::string d;
  double ratio = 0;
  if (ok) {
    const auto recs = laplacian_records(r.ws->bundle, r.rep);
    for (const auto& v : recs) {
      if (v.tag == "laplacian-support") {
        ok = ok && v.pass;
        d += "outside " + g4(v.value) + " vs " + g4(v.tolerance) + "; ";
      }
    }
    // inside maxima at 1/8 and 1/16
    const double a = laplacian_support_check(r.ws->bundle, r.rep.f_deltas[1], r.rep.records[1].delta).max_inside;
    const double b = laplacian_support_check(r.ws->bundle, r.rep.f_deltas[2], r.rep.records[2].delta).max_inside;
    ratio = a > 0 ? b / a : 0.0;
    ok = ok && ratio >= 1.4 && ratio <= 2.6;
  }
  line(8, ok, "Laplacian localisation", d + "inside ratio 1/8 -> 1/16 " + g4(ratio) + " (range [1.4, 2.6])");
}

void mean_value() {
  bool ok = true;
  std::string d;
  for (int res : {17, 33}) {
    const Run& r = pipeline("n2-q1-constant", res);
    const auto recs = mean_value_records(r.ws->grid, r.rep.f_tilde, r.rep.f_tilde);
    for (const auto& v : recs) {
      // the slope part is read at 33 only, where {4h, 8h} fits
      if (v.tag == "mean-value-slope" && res != 33) continue;
      ok = ok && v.pass;
      d += v.tag + "@" + std::to_string(res) + " " + g4(v.value) + (v.tag == "mean-value-centres" ? " vs " + g4(v.tolerance)
                                                                                                   : " vs linear " + g4(v.reference)) +
           "; ";
    }
  }
  line(9, ok, "mean-value chain", d + "centre constant 10 h^2 max|f|, slope within 50%");
}

void detector() {
  const Run& r = pipeline("n2-q1-constant", 33);
  const auto eps = default_pairing_eps(r.ws->grid);
  bool ok = !eps.empty();
  std::string d;
  for (const auto& v : detector_records(r.ws->bundle, eps)) {
    ok = ok && v.pass;
    d += v.tag + " " + g4(v.value) + (v.tag == "detector-constant" ? " vs reference " + g4(v.reference) : "") + " (" +
         v.note + "); ";
  }
  const VerifierRecord w = pairing_record(r.ws->bundle, r.rep.w_final, eps, "pipeline w");
  ok = ok && w.pass;
  d += w.note;
  line(10, ok, "singularity detector", d);
}

void determinism() {
  ExperimentConfig c = preset_config("n2-q0-z2");
  c.sweep.presets = {"zero-form", "n2-q0-z2", "n2-q1-constant"};
  c.sweep.resolutions = {9, 13};
  c.seed = 7;
  c.threads = resolve_threads(c.threads);
  const std::string a = run_sweep(c), b = run_sweep(c);
  line(11, a == b, "determinism", "two sweeps, " + std::to_string(a.size()) + " bytes of CSV, " + (a == b ? "identical" : "different"));
}

}  // namespace

int main() {
  try {
    residue();
    operators();
    minimizer();
    uniformity();
    norm_bound();
    trace_recovery();
    harmonicity();
    laplacian_structure();
    mean_value();
    detector();
    determinism();
  } catch (const std::exception& e) {
    std::cerr << "acceptance: aborted: " << e.what() << "\n";
    return exit_solver_failure;
  }
  std::cout << (failures ? std::to_string(failures) + " criteria failed" : std::string("all criteria passed")) << std::endl;
  return failures ? exit_failed_check : exit_ok;
}

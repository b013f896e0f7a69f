#pragma once

// Experiment configuration: JSON round trip, shipped presets, and validation that runs
// before anything large is allocated.

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dbarx/extension.hpp"
#include "dbarx/grid.hpp"

namespace dbarx {

/// One monomial coef * prod_j z_j^zpow[j] conj(z_j)^zbarpow[j] in a slice-form component.
struct FormTerm {
  std::vector<int> component;  // multiindex, no entry equal to 1
  double re = 1, im = 0;
  std::vector<int> zpow, zbarpow;  // length n; exponents of z_1 are ignored (slice data)
  bool operator==(const FormTerm&) const = default;
};

struct FormSpec {
  int degree = 1;
  std::string preset;            // empty: use `terms`
  std::vector<FormTerm> terms;
  bool operator==(const FormSpec&) const = default;
};

struct ScheduleSpec {
  double delta0 = 0.25;
  int count = 0;                 // 0: halve while feasible
  std::vector<double> deltas;    // explicit list overrides delta0/count
  bool operator==(const ScheduleSpec&) const = default;
};

struct SolverSpec {
  double tol = 1e-7;
  int max_iter = 20000;
  std::string constraint = "full";        // none | tangential | full
  std::string preconditioner = "spectral";  // none | jacobi | spectral
  bool operator==(const SolverSpec&) const = default;
};

struct VerifySpec {
  std::vector<std::string> verifiers;  // empty: all
  std::vector<double> eps;             // pairing schedule; empty: automatic
  std::vector<double> residue_eps = {0.1, 0.05};
  int quad_res = 64;
  std::string snapshot;                // optional field snapshot to verify instead of a fresh run
  bool operator==(const VerifySpec&) const = default;
};

struct SweepSpec {
  std::vector<double> deltas;
  std::vector<int> resolutions;
  std::vector<std::string> presets;
  bool operator==(const SweepSpec&) const = default;
};

struct ExperimentConfig {
  DomainSpec domain;
  int resolution = 17;
  FormSpec form;
  ScheduleSpec schedule;
  SolverSpec solver;
  VerifySpec verify;
  SweepSpec sweep;
  std::string out_dir = "out";
  std::uint64_t seed = 1;
  int threads = 1;
  bool operator==(const ExperimentConfig&) const = default;
};

// ---------------------------------------------------------------------------------------
// JSON

using json = nlohmann::ordered_json;

inline void to_json(json& j, const FormTerm& t) {
  j = json{{"component", t.component}, {"coef", {t.re, t.im}}, {"zpow", t.zpow}, {"zbarpow", t.zbarpow}};
}
inline void from_json(const json& j, FormTerm& t) {
  t.component = j.at("component").get<std::vector<int>>();
  auto c = j.value("coef", std::vector<double>{1.0, 0.0});
  if (c.size() != 2) throw ConfigError("term coef must be [re, im]");
  t.re = c[0];
  t.im = c[1];
  t.zpow = j.value("zpow", std::vector<int>{});
  t.zbarpow = j.value("zbarpow", std::vector<int>{});
}

inline json config_to_json(const ExperimentConfig& c) {
  json j;
  j["domain"] = {{"n", c.domain.n}, {"polyradii", c.domain.polyradii}, {"scale_to_unit_diameter", c.domain.scale_to_unit_diameter}};
  j["resolution"] = c.resolution;
  j["form"] = {{"degree", c.form.degree}, {"preset", c.form.preset}, {"terms", c.form.terms}};
  j["schedule"] = {{"delta0", c.schedule.delta0}, {"count", c.schedule.count}, {"deltas", c.schedule.deltas}};
  j["solver"] = {{"tol", c.solver.tol}, {"max_iter", c.solver.max_iter}, {"constraint", c.solver.constraint},
                 {"preconditioner", c.solver.preconditioner}};
  j["verify"] = {{"verifiers", c.verify.verifiers}, {"eps", c.verify.eps}, {"residue_eps", c.verify.residue_eps},
                 {"quad_res", c.verify.quad_res}, {"snapshot", c.verify.snapshot}};
  j["sweep"] = {{"deltas", c.sweep.deltas}, {"resolutions", c.sweep.resolutions}, {"presets", c.sweep.presets}};
  j["out_dir"] = c.out_dir;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  return j;
}

/// Missing keys keep their defaults; unknown top-level keys are rejected.
inline ExperimentConfig config_from_json(const json& j) {
  static const std::set<std::string> known = {"domain", "resolution", "form", "schedule", "solver",
                                              "verify", "sweep", "out_dir", "seed", "threads"};
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) throw ConfigError("config: unknown key '" + it.key() + "'");
  ExperimentConfig c;
  try {
    if (j.contains("domain")) {
      const auto& d = j["domain"];
      c.domain.n = d.value("n", c.domain.n);
      c.domain.polyradii = d.value("polyradii", std::vector<double>(c.domain.n, 1.0));
      c.domain.scale_to_unit_diameter = d.value("scale_to_unit_diameter", false);
    }
    c.resolution = j.value("resolution", c.resolution);
    if (j.contains("form")) {
      const auto& f = j["form"];
      c.form.degree = f.value("degree", c.form.degree);
      c.form.preset = f.value("preset", std::string{});
      if (f.contains("terms")) c.form.terms = f["terms"].get<std::vector<FormTerm>>();
    }
    if (j.contains("schedule")) {
      const auto& s = j["schedule"];
      c.schedule.delta0 = s.value("delta0", c.schedule.delta0);
      c.schedule.count = s.value("count", c.schedule.count);
      c.schedule.deltas = s.value("deltas", std::vector<double>{});
    }
    if (j.contains("solver")) {
      const auto& s = j["solver"];
      c.solver.tol = s.value("tol", c.solver.tol);
      c.solver.max_iter = s.value("max_iter", c.solver.max_iter);
      c.solver.constraint = s.value("constraint", c.solver.constraint);
      c.solver.preconditioner = s.value("preconditioner", c.solver.preconditioner);
    }
    if (j.contains("verify")) {
      const auto& v = j["verify"];
      c.verify.verifiers = v.value("verifiers", std::vector<std::string>{});
      c.verify.eps = v.value("eps", std::vector<double>{});
      c.verify.residue_eps = v.value("residue_eps", c.verify.residue_eps);
      c.verify.quad_res = v.value("quad_res", c.verify.quad_res);
      c.verify.snapshot = v.value("snapshot", std::string{});
    }
    if (j.contains("sweep")) {
      const auto& s = j["sweep"];
      c.sweep.deltas = s.value("deltas", std::vector<double>{});
      c.sweep.resolutions = s.value("resolutions", std::vector<int>{});
      c.sweep.presets = s.value("presets", std::vector<std::string>{});
    }
    c.out_dir = j.value("out_dir", c.out_dir);
    c.seed = j.value("seed", c.seed);
    c.threads = j.value("threads", c.threads);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

inline std::string emit_config(const ExperimentConfig& c) { return config_to_json(c).dump(2) + "\n"; }

inline ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: parse error: ") + e.what());
  }
  return config_from_json(j);
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

// ---------------------------------------------------------------------------------------
// Presets

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"zero-form",      "n2-q0-z2",       "n2-q1-constant",
                                                 "n2-q1-bump",     "n3-q1-constant", "singular-detector-input"};
  return names;
}

inline bool is_preset(const std::string& name) {
  for (auto& p : preset_names())
    if (p == name) return true;
  return false;
}

/// Radius (relative to R_2) of the compact bump used by the bump and detector presets.
inline constexpr double preset_bump_radius = 0.6;

/// Domain, degree and default resolution for a preset; other settings stay at defaults.
inline ExperimentConfig preset_config(const std::string& name) {
  if (!is_preset(name)) throw ConfigError("unknown preset '" + name + "'");
  ExperimentConfig c;
  c.form.preset = name;
  c.form.degree = 1;
  if (name == "n2-q0-z2") c.form.degree = 0;
  if (name == "n3-q1-constant") {
    c.domain.n = 3;
    c.domain.polyradii = {1, 1, 1};
    c.resolution = 9;
  }
  if (name == "singular-detector-input") c.resolution = 33;
  return c;
}

/// (1 - |z_2|^2 / r^2)^3 on |z_2| < r = preset_bump_radius R_2.
inline double preset_bump(const Grid& g, std::span<const cplx> z) {
  const double r = preset_bump_radius * g.plane(2).R;
  const double t = std::norm(z[1]) / (r * r);
  return t < 1 ? (1 - t) * (1 - t) * (1 - t) : 0.0;
}

inline cplx evaluate_term(const FormTerm& t, std::span<const cplx> z) {
  cplx v(t.re, t.im);
  for (std::size_t j = 1; j < z.size(); ++j) {
    if (j < t.zpow.size())
      for (int k = 0; k < t.zpow[j]; ++k) v *= z[j];
    if (j < t.zbarpow.size())
      for (int k = 0; k < t.zbarpow[j]; ++k) v *= std::conj(z[j]);
  }
  return v;
}

/// Slice data for the config: a named preset or the monomial table.
inline SliceForm make_slice_form(const ExperimentConfig& c, const Grid& g) {
  const int q = c.form.degree;
  const std::string& p = c.form.preset;
  if (!p.empty()) {
    if (p == "zero-form") return SliceForm(g.n(), q, g.slice_size());
    return SliceForm::sample(g, q, [&](const MultiIndex& K, std::span<const cplx> z) -> cplx {
      if (p == "n2-q0-z2") return z[1];
      if (K != MultiIndex{2}) return 0.0;
      if (p == "n2-q1-bump" || p == "singular-detector-input") return preset_bump(g, z);
      return 1.0;  // constant presets: 1 dzbar_2
    });
  }
  return SliceForm::sample(g, q, [&](const MultiIndex& K, std::span<const cplx> z) {
    cplx v{};
    for (const auto& t : c.form.terms)
      if (MultiIndex(t.component) == K) v += evaluate_term(t, z);
    return v;
  });
}

// ---------------------------------------------------------------------------------------
// Validation

inline double config_h1(const ExperimentConfig& c) {
  return 2 * c.domain.effective_radii()[0] / (c.resolution - 1);
}

inline std::vector<double> config_schedule(const ExperimentConfig& c) {
  if (!c.schedule.deltas.empty()) return c.schedule.deltas;
  std::vector<double> out;
  const double h = config_h1(c);
  for (double d = c.schedule.delta0; d >= h * (1 - 1e-9); d *= 0.5) {
    out.push_back(d);
    if (c.schedule.count > 0 && static_cast<int>(out.size()) == c.schedule.count) break;
  }
  return out;
}

inline SolveOptions solve_options(const SolverSpec& s) {
  SolveOptions o;
  o.tol = s.tol;
  o.max_iter = s.max_iter;
  if (s.constraint == "none") o.constraint = SliceConstraint::none;
  else if (s.constraint == "tangential") o.constraint = SliceConstraint::tangential;
  else if (s.constraint == "full") o.constraint = SliceConstraint::full;
  else throw ConfigError("solver.constraint must be none, tangential or full");
  if (s.preconditioner == "none") o.preconditioner = SolveOptions::Preconditioner::none;
  else if (s.preconditioner == "jacobi") o.preconditioner = SolveOptions::Preconditioner::jacobi;
  else if (s.preconditioner == "spectral") o.preconditioner = SolveOptions::Preconditioner::spectral;
  else throw ConfigError("solver.preconditioner must be none, jacobi or spectral");
  return o;
}

inline const std::vector<std::string>& verifier_names() {
  static const std::vector<std::string> names = {"residue", "operators", "laplacian-support", "mean-value",
                                                 "pairing", "detector",  "volume"};
  return names;
}

/// Throws ConfigError on any inconsistency. Cheap: no grid is built.
inline void validate_config(const ExperimentConfig& c, bool need_schedule = true) {
  c.domain.validate();
  if (c.resolution < 8 || c.resolution % 2 == 0) throw ConfigError("resolution must be odd and >= 8");
  if (Grid::estimate_bytes(c.domain.n, c.resolution) > Grid::default_memory_budget)
    throw ConfigError("resolution " + std::to_string(c.resolution) + " exceeds the memory budget for n=" +
                      std::to_string(c.domain.n));
  if (c.form.degree < 0 || c.form.degree > c.domain.n - 1) throw ConfigError("form.degree must lie in 0..n-1");
  if (!c.form.preset.empty()) {
    if (!is_preset(c.form.preset)) throw ConfigError("unknown preset '" + c.form.preset + "'");
    const ExperimentConfig p = preset_config(c.form.preset);
    if (p.domain.n != c.domain.n || p.form.degree != c.form.degree)
      throw ConfigError("preset '" + c.form.preset + "' needs n=" + std::to_string(p.domain.n) +
                        ", degree=" + std::to_string(p.form.degree));
  }
  for (const auto& t : c.form.terms) {
    MultiIndex K;
    try {
      K = MultiIndex(t.component);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("form.terms: ") + e.what());
    }
    if (K.degree() != c.form.degree || !K.fits(c.domain.n) || K.contains(1))
      throw ConfigError("form.terms: component " + K.str() + " is not a tangential degree-" +
                        std::to_string(c.form.degree) + " index");
    for (int e : t.zpow)
      if (e < 0) throw ConfigError("form.terms: negative exponent");
    for (int e : t.zbarpow)
      if (e < 0) throw ConfigError("form.terms: negative exponent");
  }
  if (!(c.solver.tol > 0) || c.solver.max_iter < 1) throw ConfigError("solver: tol and max_iter must be positive");
  solve_options(c.solver);
  if (c.threads < 1) throw ConfigError("threads must be >= 1");
  for (const auto& v : c.verify.verifiers) {
    bool ok = false;
    for (const auto& k : verifier_names()) ok = ok || k == v;
    if (!ok) throw ConfigError("verify: unknown verifier '" + v + "'");
  }
  if (c.verify.quad_res < 64) throw ConfigError("verify.quad_res must be >= 64");
  if (need_schedule) {
    const auto s = config_schedule(c);
    if (s.empty()) throw ConfigError("schedule: no feasible delta (delta must be >= h = " + std::to_string(config_h1(c)) + ")");
    const double R1 = c.domain.effective_radii()[0];
    const double h = config_h1(c);
    for (std::size_t k = 0; k < s.size(); ++k) {
      if (!(s[k] > 0)) throw ConfigError("schedule: delta must be positive");
      if (2 * s[k] >= R1) throw ConfigError("schedule: 2*delta must stay below the z_1 radius");
      if (s[k] < h * (1 - 1e-9))
        throw ConfigError("schedule: delta=" + std::to_string(s[k]) + " is below one z_1 cell h=" + std::to_string(h));
      if (k && !(s[k] < s[k - 1])) throw ConfigError("schedule: deltas must be strictly decreasing");
    }
  }
}

}  // namespace dbarx

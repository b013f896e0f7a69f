#include <gtest/gtest.h>

#include "dbarx/config.hpp"

using namespace dbarx;

namespace {
ExperimentConfig custom() {
  ExperimentConfig c;
  c.domain.polyradii = {1.0, 0.75};
  c.domain.scale_to_unit_diameter = false;
  c.resolution = 21;
  c.form.degree = 1;
  c.form.terms = {FormTerm{{2}, 0.5, -1.25, {0, 2}, {0, 1}}, FormTerm{{2}, 1, 0, {}, {}}};
  c.schedule.deltas = {0.3, 0.2, 0.1};
  c.solver.tol = 3e-8;
  c.solver.constraint = "tangential";
  c.verify.verifiers = {"residue", "volume"};
  c.verify.eps = {0.19, 0.15, 0.12, 0.1};
  c.sweep.resolutions = {17, 25};
  c.out_dir = "somewhere";
  c.seed = 123456789012345ull;
  c.threads = 3;
  return c;
}
}  // namespace

TEST(ConfigRoundTrip, DefaultsPresetsAndCustom) {
  std::vector<ExperimentConfig> cs = {ExperimentConfig{}, custom()};
  for (const auto& name : preset_names()) cs.push_back(preset_config(name));
  for (const auto& c : cs) {
    const ExperimentConfig back = parse_config(emit_config(c));
    EXPECT_TRUE(back == c) << emit_config(c);
    EXPECT_EQ(emit_config(back), emit_config(c));
  }
}

TEST(ConfigRoundTrip, DoublesSurviveExactly) {
  ExperimentConfig c;
  c.schedule.deltas = {0.1 + 0.2, 1.0 / 3.0};
  c.solver.tol = 1.2345678901234567e-9;
  EXPECT_TRUE(parse_config(emit_config(c)) == c);
}

TEST(ConfigParse, Errors) {
  EXPECT_THROW(parse_config("{"), ConfigError);
  EXPECT_THROW(parse_config("[]"), ConfigError);
  EXPECT_THROW(parse_config(R"({"resolutoin": 17})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"resolution": "seventeen"})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"form": {"terms": [{"component": [2], "coef": [1]}]}})"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(ConfigParse, MissingKeysKeepDefaults) {
  const ExperimentConfig c = parse_config(R"({"resolution": 25})");
  EXPECT_EQ(c.resolution, 25);
  EXPECT_EQ(c.solver.tol, ExperimentConfig{}.solver.tol);
  EXPECT_EQ(c.domain.n, 2);
}

TEST(Presets, AllShippedAndValid) {
  const std::vector<std::string> expect = {"zero-form",  "n2-q0-z2",       "n2-q1-constant",
                                           "n2-q1-bump", "n3-q1-constant", "singular-detector-input"};
  EXPECT_EQ(preset_names(), expect);
  for (const auto& p : preset_names()) EXPECT_NO_THROW(validate_config(preset_config(p))) << p;
  EXPECT_THROW(preset_config("no-such-preset"), ConfigError);
}

TEST(Presets, SliceForms) {
  const ExperimentConfig c = preset_config("n2-q1-constant");
  const Grid g = build_grid(c.domain, 9);
  const SliceForm f = make_slice_form(c, g);
  for (auto node : g.slice_nodes()) {
    const std::size_t s = node - g.slice_to_node(0);
    EXPECT_EQ(f.get(MultiIndex{2})[s], cplx(1.0));
  }
  const SliceForm z = make_slice_form(preset_config("zero-form"), g);
  EXPECT_EQ(max_abs(z.field()), 0.0);
  ExperimentConfig q0 = preset_config("n2-q0-z2");
  const SliceForm fz = make_slice_form(q0, g);
  for (auto node : g.slice_nodes()) EXPECT_EQ(fz.get(MultiIndex{})[node - g.slice_to_node(0)], g.z(node, 2));
  // bump preset vanishes near the rim of the z_2 disc
  const SliceForm fb = make_slice_form(preset_config("n2-q1-bump"), g);
  for (auto node : g.slice_nodes())
    if (std::abs(g.z(node, 2)) >= preset_bump_radius) { EXPECT_EQ(fb.get(MultiIndex{2})[node - g.slice_to_node(0)], cplx{}); }
}

TEST(Terms, EvaluateMonomial) {
  const FormTerm t{{2}, 2.0, 1.0, {0, 2}, {0, 1}};
  const std::vector<cplx> z{cplx(9, 9), cplx(0.5, 0.25)};
  const cplx expect = cplx(2, 1) * z[1] * z[1] * std::conj(z[1]);
  EXPECT_NEAR(std::abs(evaluate_term(t, z) - expect), 0, 1e-15);
}

TEST(Validate, Errors) {
  auto bad = [](auto mutate) {
    ExperimentConfig c = preset_config("n2-q1-constant");
    mutate(c);
    return c;
  };
  EXPECT_THROW(validate_config(bad([](auto& c) { c.resolution = 16; })), ConfigError);
  EXPECT_THROW(validate_config(bad([](auto& c) { c.resolution = 5; })), ConfigError);
  EXPECT_THROW(validate_config(bad([](auto& c) { c.resolution = 1001; })), ConfigError);
  EXPECT_THROW(validate_config(bad([](auto& c) { c.form.degree = 2; })), ConfigError);
  EXPECT_THROW(validate_config(bad([](auto& c) { c.form.preset = "nope"; })), ConfigError);
  EXPECT_THROW(validate_config(bad([](auto& c) { c.form.preset = "n2-q0-z2"; })), ConfigError);
  EXPECT_THROW(validate_config(bad([](auto& c) { c.schedule.deltas = {0.05}; })), ConfigError);
  EXPECT_THROW(validate_config(bad([](auto& c) { c.schedule.deltas = {0.125, 0.25}; })), ConfigError);
  EXPECT_THROW(validate_config(bad([](auto& c) { c.schedule.deltas = {0.5}; })), ConfigError);
  EXPECT_THROW(validate_config(bad([](auto& c) { c.schedule.delta0 = 0.01; })), ConfigError);
  EXPECT_THROW(validate_config(bad([](auto& c) { c.solver.tol = 0; })), ConfigError);
  EXPECT_THROW(validate_config(bad([](auto& c) { c.solver.constraint = "partial"; })), ConfigError);
  EXPECT_THROW(validate_config(bad([](auto& c) { c.solver.preconditioner = "ilu"; })), ConfigError);
  EXPECT_THROW(validate_config(bad([](auto& c) { c.threads = 0; })), ConfigError);
  EXPECT_THROW(validate_config(bad([](auto& c) { c.verify.verifiers = {"bogus"}; })), ConfigError);
  EXPECT_THROW(validate_config(bad([](auto& c) { c.verify.quad_res = 16; })), ConfigError);
  EXPECT_THROW(validate_config(bad([](auto& c) {
                 c.form.preset.clear();
                 c.form.terms = {FormTerm{{1}, 1, 0, {}, {}}};
               })),
               ConfigError);
  EXPECT_THROW(validate_config(bad([](auto& c) { c.domain.polyradii = {1.0}; })), ConfigError);
}

TEST(Schedule, HalvingUntilOneCell) {
  ExperimentConfig c = preset_config("n2-q1-constant");
  c.resolution = 33;
  EXPECT_EQ(config_schedule(c), (std::vector<double>{0.25, 0.125, 0.0625}));
  c.schedule.count = 2;
  EXPECT_EQ(config_schedule(c), (std::vector<double>{0.25, 0.125}));
  c.schedule.deltas = {0.2, 0.1};
  EXPECT_EQ(config_schedule(c), (std::vector<double>{0.2, 0.1}));
  EXPECT_DOUBLE_EQ(config_h1(c), 1.0 / 16);
}

TEST(SolveOptionsMapping, Names) {
  SolverSpec s;
  s.constraint = "none";
  s.preconditioner = "jacobi";
  const SolveOptions o = solve_options(s);
  EXPECT_EQ(o.constraint, SliceConstraint::none);
  EXPECT_EQ(o.preconditioner, SolveOptions::Preconditioner::jacobi);
}

#include <gtest/gtest.h>

#include "dbarx/config.hpp"
#include "dbarx/extension.hpp"

using namespace dbarx;

namespace {

struct Bidisc17 : ::testing::Test {
  Grid g = build_grid(DomainSpec{}, 17);
  OperatorBundle b{g};

  SliceForm constant_dz2() const {
    return SliceForm::sample(g, 1, [](const MultiIndex& K, std::span<const cplx>) {
      return K == MultiIndex{2} ? cplx(1.0) : cplx{};
    });
  }
  SliceForm z2_function() const {
    return SliceForm::sample(g, 0, [](const MultiIndex&, std::span<const cplx> z) { return z[1]; });
  }
};

}  // namespace

TEST_F(Bidisc17, LiftOfZeroIsZero) {
  const FormField lift = lift_slice_form(SliceForm(2, 1, g.slice_size()), g);
  EXPECT_EQ(max_abs(lift), 0.0);
}

TEST_F(Bidisc17, LiftOfConstantDz2) {
  const FormField lift = lift_slice_form(constant_dz2(), g);
  for (std::size_t k = 0; k < g.size(); ++k) {
    const cplx expect = g.mask()[k] ? cplx(1.0) : cplx{};
    ASSERT_EQ(lift.get(MultiIndex{2})[k], expect);
    ASSERT_EQ(lift.get(MultiIndex{1})[k], cplx{});
  }
  // constant in z_1, so Dbar_1 of every component vanishes
  const CArray d1 = b.dzbar_stencil(1).apply(g, lift.get(MultiIndex{2}));
  for (std::size_t k = 0; k < g.size(); ++k) ASSERT_NEAR(std::abs(d1[k]), 0, 1e-12);
}

TEST_F(Bidisc17, TraceRoundTripAndPullback) {
  const SliceForm f = constant_dz2();
  const SliceForm t = trace(lift_slice_form(f, g), g);
  EXPECT_EQ(trace_error(g, t, f), 0.0);
  // components containing index 1 are dropped
  FormField u(2, 1, g.size());
  u.set(MultiIndex{1}, CArray(g.size(), cplx(5.0)));
  const SliceForm tu = trace(u, g);
  for (const auto& [K, v] : tu.field().stored()) EXPECT_FALSE(K.contains(1));
  EXPECT_EQ(max_abs(tu.field()), 0.0);
  EXPECT_THROW(lift_slice_form(SliceForm(3, 1, g.slice_size()), g), std::invalid_argument);
}

TEST_F(Bidisc17, BetaForZeroAndTopDegree) {
  const CArray chi = sample_cutoff(CutoffProfile::plateau(), 0.25, g);
  EXPECT_EQ(max_abs(build_beta(b, b.zero(1), chi)), 0.0);
  const FormField lift = lift_slice_form(constant_dz2(), g);
  const FormField beta = build_beta(b, lift, chi);
  const CArray dchi = b.dzbar_stencil(1).apply(g, chi);
  // insert_index(1, (2)) = (+1, (1,2))
  for (std::size_t k = 0; k < g.size(); ++k)
    ASSERT_NEAR(std::abs(beta.get(MultiIndex{1, 2})[k] - dchi[k] * lift.get(MultiIndex{2})[k]), 0, 1e-14);
  EXPECT_THROW(build_beta(b, b.zero(2), chi), std::invalid_argument);
}

TEST(BetaScaling, NormRoughlyDeltaIndependent) {
  // |dbar chi_delta| ~ 1/delta on an annulus of area ~ delta^2: ||beta|| = O(1) in delta
  const Grid g = build_grid(DomainSpec{}, 33);
  OperatorBundle b(g);
  const SliceForm f = SliceForm::sample(g, 1, [](const MultiIndex& K, std::span<const cplx>) {
    return K == MultiIndex{2} ? cplx(1.0) : cplx{};
  });
  const FormField lift = lift_slice_form(f, g);
  const double b1 = b.norm(build_beta(b, lift, sample_cutoff(CutoffProfile::plateau(), 0.25, g)));
  const double b2 = b.norm(build_beta(b, lift, sample_cutoff(CutoffProfile::plateau(), 0.125, g)));
  EXPECT_GT(b2 / b1, 0.7);
  EXPECT_LT(b2 / b1, 1.4);
}

TEST_F(Bidisc17, SolveZeroRhs) {
  const SolveResult r = solve_min_norm(b, b.zero(1));
  EXPECT_EQ(r.iterations, 0);
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(max_abs(r.w), 0.0);
}

TEST_F(Bidisc17, SolveManufacturedRhsIsMinimal) {
  // g supported away from the slice, so it is admissible for the slice constraint
  FormField gf(2, 0, g.size());
  gf.set(MultiIndex{}, g.sample([](std::span<const cplx> z) {
    const double t = std::norm(z[0] - cplx(0.5, 0)) / 0.09 + std::norm(z[1]) / 0.25;
    return t < 1 ? cplx(std::pow(1 - t, 3), 0.5 * std::pow(1 - t, 3)) : cplx{};
  }));
  const FormField beta = b.dbar(gf);
  for (auto pc : {SolveOptions::Preconditioner::spectral, SolveOptions::Preconditioner::jacobi}) {
    SolveOptions opt;
    opt.preconditioner = pc;
    const SolveResult r = solve_min_norm(b, beta, opt);
    EXPECT_TRUE(r.converged);
    EXPECT_LE(r.residual_dbar, 10 * opt.tol);
    EXPECT_LE(r.norm_w, b.norm(gf) * (1 + 1e-9));
    EXPECT_LE(r.residual_theta, 10 * opt.tol);
  }
}

TEST_F(Bidisc17, FDeltaAlgebra) {
  const FormField lift = lift_slice_form(constant_dz2(), g);
  const CArray chi = sample_cutoff(CutoffProfile::plateau(), 0.25, g);
  EXPECT_EQ(max_abs(assemble_f_delta(b.zero(1), chi, b.zero(1))), 0.0);
  const FormField beta = build_beta(b, lift, chi);
  const SolveResult r = solve_min_norm(b, beta);
  const FormField fd = assemble_f_delta(lift, chi, r.w);
  // dbar f_delta = beta - dbar w up to the solve residual
  EXPECT_LE(b.norm(b.dbar(fd)), 10 * r.residual_dbar * b.norm(beta) + 1e-12);
  // theta f_delta = theta(chi f) wherever theta w vanishes, i.e. off the slice strip
  const FormField diff = field_axpy(-1.0, b.theta(field_multiply(chi, lift)), b.theta(fd));
  std::vector<std::uint8_t> off(g.size());
  const auto strip = slice_strip_mask(g);
  for (std::size_t k = 0; k < g.size(); ++k) off[k] = g.mask()[k] && !strip[k];
  EXPECT_LE(masked_norm(g, diff, off), 1e-10 * b.norm(fd));
  EXPECT_THROW(assemble_f_delta(lift, chi, b.zero(0)), std::invalid_argument);
}

TEST_F(Bidisc17, RunExtensionZeroForm) {
  const ExtensionReport rep = run_extension(SliceForm(2, 1, g.slice_size()), {0.25, 0.125}, g, b);
  EXPECT_TRUE(rep.complete);
  for (const auto& r : rep.records) {
    EXPECT_EQ(r.norm_f_delta, 0.0);
    EXPECT_EQ(r.norm_w, 0.0);
    EXPECT_EQ(r.trace_error, 0.0);
  }
  EXPECT_EQ(max_abs(rep.f_tilde), 0.0);
}

TEST_F(Bidisc17, RunExtensionConstantDz2) {
  ExtensionOptions opt;
  opt.keep_all = true;
  const ExtensionReport rep = run_extension(constant_dz2(), {0.25, 0.125}, g, b, opt);
  ASSERT_TRUE(rep.complete) << rep.failure;
  ASSERT_EQ(rep.records.size(), 2u);
  ASSERT_EQ(rep.f_deltas.size(), 2u);
  for (const auto& r : rep.records) {
    EXPECT_LE(r.trace_error, 0.05);
    EXPECT_LE(r.residual_dbar, 10 * rep.tol);
    EXPECT_LE(r.residual_theta, 10 * rep.tol);
    EXPECT_GT(r.c_empirical, 0.0);
    EXPECT_TRUE(std::isfinite(r.thm_ratio));
    EXPECT_EQ(r.probe_values.size(), rep.probes.size());
  }
  EXPECT_LT(rep.records[1].cauchy, rep.records[1].norm_f_delta + rep.records[0].norm_f_delta);
  EXPECT_EQ(rep.records[0].cauchy, -1.0);
}

TEST_F(Bidisc17, RunExtensionClassicalFunction) {
  const ExtensionReport rep = run_extension(z2_function(), {0.25, 0.125}, g, b);
  ASSERT_TRUE(rep.complete) << rep.failure;
  const auto& last = rep.records.back();
  EXPECT_LE(last.trace_error, 0.05);
  // f_tilde is dbar-closed up to the solve residual
  EXPECT_LE(last.closedness, 1e-6);
}

TEST_F(Bidisc17, NotClosedSliceDataIsFlagged) {
  const SliceForm f = SliceForm::sample(g, 0, [](const MultiIndex&, std::span<const cplx> z) { return std::conj(z[1]); });
  const ExtensionReport rep = run_extension(f, {0.25}, g, b);
  EXPECT_FALSE(rep.intake_closed);
  EXPECT_FALSE(rep.complete);
  EXPECT_TRUE(rep.records.empty());
}

TEST_F(Bidisc17, ScheduleErrors) {
  const SliceForm f = constant_dz2();
  EXPECT_THROW(run_extension(f, {}, g, b), ConfigError);
  EXPECT_THROW(run_extension(f, {0.125, 0.25}, g, b), ConfigError);
  EXPECT_THROW(run_extension(f, {0.25, 0.05}, g, b), ConfigError);
  EXPECT_THROW(run_extension(f, {0.5}, g, b), ConfigError);
}

TEST_F(Bidisc17, GeometricSchedule) {
  const auto s = geometric_schedule(g, 0.25);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_DOUBLE_EQ(s[0], 0.25);
  EXPECT_DOUBLE_EQ(s[1], 0.125);
  EXPECT_TRUE(schedule_feasible(g, g.h(1)));
  EXPECT_FALSE(schedule_feasible(g, 0.5 * g.h(1)));
}

TEST(Tridisc, ConstantFormSmallResolution) {
  const ExperimentConfig c = preset_config("n3-q1-constant");
  const Grid g = build_grid(c.domain, c.resolution);
  OperatorBundle b(g);
  const ExtensionReport rep = run_extension(make_slice_form(c, g), config_schedule(c), g, b);
  ASSERT_TRUE(rep.complete) << rep.failure;
  for (const auto& r : rep.records) {
    EXPECT_LE(r.residual_dbar, 10 * rep.tol);
    EXPECT_LE(r.residual_theta, 10 * rep.tol);
  }
}

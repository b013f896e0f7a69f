#include <gtest/gtest.h>

#include <numbers>

#include "dbarx/extension.hpp"
#include "dbarx/verifiers.hpp"

using namespace dbarx;

TEST(ResidueCheck, MatchesPiEpsSquaredOverNine) {
  for (double eps : {0.1, 0.05}) {
    const cplx v = residue_check(eps);
    const double ref = std::numbers::pi * eps * eps / 9;
    EXPECT_NEAR(v.real() / ref, 1.0, 1e-4) << "eps=" << eps;
    EXPECT_NEAR(v.imag() / ref, 0.0, 1e-4);
  }
  EXPECT_NEAR(residue_check(0.1).real(), 3.4907e-3, 1e-7);
}

TEST(ResidueCheck, ScaleInvariance) {
  const double a = residue_check(0.1).real() / 0.01;
  const double b = residue_check(0.05).real() / 0.0025;
  const double c = residue_check(0.013).real() / (0.013 * 0.013);
  EXPECT_NEAR(a, std::numbers::pi / 9, 1e-10);
  EXPECT_NEAR(a, b, 1e-12);
  EXPECT_NEAR(a, c, 1e-12);
}

TEST(ResidueCheck, Errors) {
  EXPECT_THROW(residue_check(0.1, 32), std::invalid_argument);
  EXPECT_THROW(residue_check(0.0), std::invalid_argument);
  EXPECT_THROW(residue_check(0.1, 64, CutoffProfile::unit_mass(1.0, 3.0)), std::invalid_argument);
}

TEST(GaussLegendre, IntegratesPolynomialsExactly) {
  std::vector<double> x, w;
  detail::gauss_legendre(8, x, w);
  for (int p = 0; p <= 15; ++p) {
    double s = 0;
    for (int i = 0; i < 8; ++i) s += w[i] * std::pow(x[i], p);
    EXPECT_NEAR(s, p % 2 ? 0.0 : 2.0 / (p + 1), 1e-14) << "p=" << p;
  }
}

TEST(MeanValue, ConstantFieldHasZeroDeviation) {
  const Grid g = build_grid(DomainSpec{}, 17);
  FormField f(2, 1, g.size());
  f.set(MultiIndex{2}, CArray(g.size(), cplx(1.0, 2.0)));
  for (const auto& z : slice_centres(g, 0.1)) EXPECT_NEAR(max_of(mean_value_deviation(g, f, z, 0.25)), 0.0, 1e-14);
}

TEST(MeanValue, HarmonicQuarticDeviationShrinksUnderRefinement) {
  // Re z_2^4 is harmonic; lattice symmetry cancels lower-degree harmonics exactly, not this one
  double dev[2];
  int i = 0;
  for (int N : {17, 33}) {
    const Grid g = build_grid(DomainSpec{}, N);
    FormField f(2, 0, g.size());
    f.set(MultiIndex{}, g.sample([](std::span<const cplx> z) { return cplx(std::pow(z[1], 4).real()); }));
    const std::vector<cplx> zo{cplx{}, cplx{}};
    dev[i++] = max_of(mean_value_deviation(g, f, zo, 0.5));
  }
  EXPECT_GT(dev[0], 0.0);
  EXPECT_LT(dev[1], dev[0]);
}

TEST(LaplacianSupport, ZeroField) {
  const Grid g = build_grid(DomainSpec{}, 17);
  OperatorBundle b(g);
  const LaplacianSupport s = laplacian_support_check(b, b.zero(1), 0.25);
  EXPECT_EQ(s.max_inside, 0.0);
  EXPECT_EQ(s.max_outside, 0.0);
}

TEST(FitQuadratic, RecoversCoefficients) {
  const std::vector<double> e = {0.2, 0.13, 0.08, 0.05};
  std::vector<cplx> v;
  const cplx c0(0.3, -0.1), c1(2.0, 1.0), c2(-4.0, 0.5);
  for (double x : e) v.push_back(c0 + c1 * x + c2 * x * x);
  cplx c[3];
  double rms = 1;
  detail::fit_quadratic(e, v, c, rms);
  EXPECT_NEAR(std::abs(c[0] - c0), 0, 1e-10);
  EXPECT_NEAR(std::abs(c[1] - c1), 0, 1e-9);
  EXPECT_NEAR(std::abs(c[2] - c2), 0, 1e-8);
  EXPECT_LT(rms, 1e-12);
}

TEST(ClassifyPairing, ConstantLeadsOnlyWhenLarge) {
  PairingReport sing;
  sing.eps = {0.2, 0.13, 0.08, 0.05};
  sing.scale = 1.0;
  for (double x : sing.eps) sing.values.push_back(cplx(-0.5 + 0.1 * x));
  classify_pairing(sing);
  EXPECT_TRUE(sing.singular);
  EXPECT_EQ(sing.leading, "constant");

  PairingReport smooth = sing;
  smooth.values.clear();
  for (double x : smooth.eps) smooth.values.push_back(cplx(2.0 * x + 0.3 * x * x));
  classify_pairing(smooth);
  EXPECT_FALSE(smooth.singular);
  EXPECT_EQ(smooth.leading, "O(eps)");

  PairingReport tiny = sing;
  tiny.values.clear();
  for (double x : tiny.eps) tiny.values.push_back(cplx(1e-6 + 1e-9 * x));
  classify_pairing(tiny);
  EXPECT_FALSE(tiny.singular);  // below the relative floor
}

namespace {
struct Bidisc33 : ::testing::Test {
  static const Grid& grid() {
    static const Grid g = build_grid(DomainSpec{}, 33);
    return g;
  }
  static const OperatorBundle& bundle() {
    static const OperatorBundle b(grid());
    return b;
  }
  std::vector<double> eps() const { return pairing_schedule(pairing_eps_max(grid()), pairing_eps_min(grid())); }
};
}  // namespace

TEST_F(Bidisc33, PairingErrors) {
  const Grid& g = grid();
  const OperatorBundle& b = bundle();
  const FormField u = b.zero(1);
  EXPECT_THROW(pairing_test(b, u, MultiIndex{2}, eps()), std::invalid_argument);
  EXPECT_THROW(pairing_test(b, u, MultiIndex{1}, eps()), std::invalid_argument);
  EXPECT_THROW(pairing_test(b, u, MultiIndex{1, 2}, {0.2, 0.1, 0.08}), std::invalid_argument);
  EXPECT_THROW(pairing_test(b, u, MultiIndex{1, 2}, {0.19, 0.15, 0.12, g.h(1)}), std::invalid_argument);
}

TEST_F(Bidisc33, SmoothFieldIsNotSingular) {
  const Grid& g = grid();
  const OperatorBundle& b = bundle();
  FormField u(2, 1, g.size());
  u.set(MultiIndex{2}, g.sample([&](std::span<const cplx> z) { return std::conj(z[0]) * slice_bump(g, z); }));
  const PairingReport p = pairing_test(b, u, MultiIndex{1, 2}, eps());
  EXPECT_FALSE(p.singular);
  EXPECT_NE(p.leading, "constant");
}

TEST_F(Bidisc33, PipelineMinimizerIsNotSingular) {
  const Grid& g = grid();
  const OperatorBundle& b = bundle();
  const SliceForm f = SliceForm::sample(g, 1, [&](const MultiIndex& K, std::span<const cplx> z) {
    return K == MultiIndex{2} ? cplx(slice_bump(g, z)) : cplx{};
  });
  ExtensionOptions opt;
  opt.solve.tol = 1e-5;  // keeps this resolution-33 solve short
  const ExtensionReport rep = run_extension(f, {0.25}, g, b, opt);
  ASSERT_TRUE(rep.complete) << rep.failure;
  const PairingReport p = pairing_test(b, rep.w_final, MultiIndex{1, 2}, eps());
  EXPECT_FALSE(p.singular) << "c0=" << p.c0 << " scale=" << p.scale;
}

// u = g(z')/z_1 dzbar_2 is holomorphic in z_1 on the support of psi_eps, so dbar u pairs to
// zero up to grid error. The constant term therefore tracks 0, not the reference value.
TEST_F(Bidisc33, ManufacturedInverseZ1PairsToGridError) {
  const Grid& g = grid();
  const OperatorBundle& b = bundle();
  SingularDecomposition s{FormField(2, 1, g.slice_size()), FormField(2, 1, g.size())};
  auto& hv = s.h.at(MultiIndex{2});
  for (std::size_t k = 0; k < g.slice_size(); ++k) hv[k] = slice_bump(g, g.point(g.slice_to_node(k)));
  const FormField u = manufacture_singular(g, s);
  const PairingReport p = pairing_test(b, u, MultiIndex{1, 2}, eps());
  const double ref = detector_reference(g);
  EXPECT_LT(ref, 0.0);
  EXPECT_LT(std::abs(p.c0), 0.2 * std::abs(ref));
}

TEST(ManufactureSingular, SkipsTheSlicePlane) {
  const Grid g = build_grid(DomainSpec{}, 17);
  SingularDecomposition s{FormField(2, 1, g.slice_size()), FormField(2, 1, g.size())};
  s.h.set(MultiIndex{2}, CArray(g.slice_size(), cplx(1.0)));
  const FormField u = manufacture_singular(g, s);
  auto v = u.get(MultiIndex{2});
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (!g.mask()[k]) continue;
    if (g.on_slice(k)) ASSERT_EQ(v[k], cplx{});
    else ASSERT_NEAR(std::abs(v[k] - 1.0 / g.z(k, 1)), 0, 1e-14);
  }
  EXPECT_THROW(manufacture_singular(g, {FormField(2, 0, g.slice_size()), FormField(2, 1, g.size())}),
               std::invalid_argument);
}

TEST(DetectorReference, MatchesBruteForceQuadrature) {
  // -(pi/9) int g psi dV' on the z_2 disc by a fine midpoint rule
  const Grid g = build_grid(DomainSpec{}, 17);
  const auto prof = CutoffProfile::unit_mass();
  const int M = 1500;
  const double R = g.plane(2).R, h = 2 * R / M;
  double acc = 0;
  for (int a = 0; a < M; ++a)
    for (int c = 0; c < M; ++c) {
      const std::vector<cplx> z{cplx{}, cplx(-R + (a + 0.5) * h, -R + (c + 0.5) * h)};
      acc += slice_bump(g, z) * test_function_zprime(prof, g, z) * h * h;
    }
  EXPECT_NEAR(detector_reference(g) / (-std::numbers::pi / 9 * acc), 1.0, 1e-4);
}

TEST(VolumeBound, RatiosBelowBound) {
  const Grid g = build_grid(DomainSpec{}, 33);
  const std::vector<cplx> zo{cplx{}, cplx{}};
  for (double d : {0.25, 0.125, 0.0625}) {
    const VolumeBound v = volume_bound_check(g, d, zo);
    ASSERT_EQ(v.ratio.size(), 2u);
    for (double r : v.ratio) {
      EXPECT_GT(r, 0.0);
      EXPECT_LE(r, v.bound);
    }
  }
  EXPECT_NEAR(unit_ball_volume(2), std::numbers::pi, 1e-14);
  EXPECT_NEAR(unit_ball_volume(4), std::numbers::pi * std::numbers::pi / 2, 1e-14);
}

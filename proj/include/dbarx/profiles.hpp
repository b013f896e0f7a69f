#pragma once

// Radial cut-off profiles and their grid samplings.

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>

#include "dbarx/grid.hpp"

namespace dbarx {

/// Nonincreasing profile chi on [0, inf): constant for t <= t0, zero for t >= t1, C^1.
class CutoffProfile {
public:
  enum class Mode { plateau, unit_mass };

  /// Quintic smoothstep from 1 at t0 down to 0 at t1.
  static CutoffProfile plateau(double t0 = 1.0, double t1 = 2.0) { return CutoffProfile(Mode::plateau, t0, t1, 1.0); }

  /// C^1 piecewise quadratic on [0, t1] scaled so that its integral over [0, t1] is 1.
  static CutoffProfile unit_mass(double t0 = 1.0, double t1 = 4.0) {
    // mass of the unscaled profile is t0 + (t1 - t0)/2
    return CutoffProfile(Mode::unit_mass, t0, t1, 2.0 / (t1 + t0));
  }

  Mode mode() const { return mode_; }
  double t0() const { return t0_; }
  double t1() const { return t1_; }
  double plateau_value() const { return level_; }

  double value(double t) const {
    if (t <= t0_) return level_;
    if (t >= t1_) return 0.0;
    const double L = t1_ - t0_;
    const double s = (t - t0_) / L;
    if (mode_ == Mode::plateau) return level_ * (1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s));
    if (s <= 0.5) return level_ * (1.0 - 2.0 * s * s);
    return level_ * 2.0 * (1.0 - s) * (1.0 - s);
  }

  double derivative(double t) const {
    if (t <= t0_ || t >= t1_) return 0.0;
    const double L = t1_ - t0_;
    const double s = (t - t0_) / L;
    if (mode_ == Mode::plateau) return -level_ * 30.0 * s * s * (1.0 - s) * (1.0 - s) / L;
    if (s <= 0.5) return -level_ * 4.0 * s / L;
    return -level_ * 4.0 * (1.0 - s) / L;
  }

  /// Exact integral of chi over [0, t1].
  double mass() const {
    const double L = t1_ - t0_;
    // smoothstep and the two-quadratic profile both integrate to half the transition width
    return level_ * (t0_ + 0.5 * L);
  }

private:
  CutoffProfile(Mode m, double t0, double t1, double level) : mode_(m), t0_(t0), t1_(t1), level_(level) {
    if (!(t0 >= 0 && t1 > t0)) throw std::invalid_argument("CutoffProfile: need 0 <= t0 < t1");
  }
  Mode mode_;
  double t0_, t1_, level_;
};

/// chi_delta(z) = chi(|z_1| / delta): 1 on |z_1| <= delta, 0 on |z_1| >= 2 delta.
inline CArray sample_cutoff(const CutoffProfile& profile, double delta, const Grid& g) {
  if (!(delta > 0)) throw std::invalid_argument("sample_cutoff: delta must be positive");
  if (2 * delta >= g.plane(1).R) throw std::invalid_argument("sample_cutoff: 2*delta must be below the z1 radius");
  return g.sample([&](std::span<const cplx> z) { return cplx(profile.value(std::abs(z[0]) / delta)); });
}

/// Support radius of the z' factor of the test function, relative to each coordinate radius.
inline constexpr double test_function_zprime_extent = 0.6;

/// psi(z') = prod_{j>=2} chi(|z_j| / s_j), with s_j scaled so the support is |z_j| <= 0.6 R_j.
inline double test_function_zprime(const CutoffProfile& profile, const Grid& g, std::span<const cplx> z) {
  double v = 1.0;
  for (int j = 2; j <= g.n(); ++j) {
    const double s = test_function_zprime_extent * g.plane(j).R / profile.t1();
    v *= profile.value(std::abs(z[j - 1]) / s);
  }
  return v;
}

/// psi_eps(z) = chi(|z_1 - 3 eps|^2 / eps^2) psi(z'); supported in eps <= |z_1| <= 5 eps.
inline CArray sample_test_function(const CutoffProfile& profile, double eps, const Grid& g) {
  if (profile.mode() != CutoffProfile::Mode::unit_mass)
    throw std::invalid_argument("sample_test_function: profile must be unit-mass");
  if (!(eps > 0) || 5 * eps >= g.plane(1).R)
    throw std::invalid_argument("sample_test_function: support 5*eps must lie inside the z1 disc");
  return g.sample([&](std::span<const cplx> z) {
    const double t = std::norm(z[0] - 3 * eps) / (eps * eps);
    return cplx(profile.value(t) * test_function_zprime(profile, g, z));
  });
}

}  // namespace dbarx

#pragma once

// Numerical checks of the analytic lemmas behind the extension: the residue identity,
// mean-value deviations, the support of the Laplacian of f_delta, the test-function
// pairing used to detect 1/z_1 behaviour, and the strip-ball volume bound.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dbarx/extension.hpp"
#include "dbarx/form_algebra.hpp"
#include "dbarx/grid.hpp"
#include "dbarx/operators.hpp"
#include "dbarx/profiles.hpp"

namespace dbarx {

/// A verifier outcome. `tag` names the identity under test, or "plumbing".
struct VerifierRecord {
  std::string tag;
  bool pass = false;
  double value = 0;
  double reference = 0;
  double tolerance = 0;
  std::string note;
};

namespace detail {

/// Gauss-Legendre nodes and weights on [-1, 1] (Newton on P_m).
inline void gauss_legendre(int m, std::vector<double>& x, std::vector<double>& w) {
  x.assign(m, 0.0);
  w.assign(m, 0.0);
  for (int i = 0; i < (m + 1) / 2; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (m + 0.5));
    double dp = 0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1, p1 = z;
      for (int k = 2; k <= m; ++k) {
        const double p2 = ((2 * k - 1) * z * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (m == 1) p0 = 1;
      dp = m * (z * p1 - p0) / (z * z - 1);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    x[i] = -z;
    x[m - 1 - i] = z;
    w[i] = w[m - 1 - i] = 2 / ((1 - z * z) * dp * dp);
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------------------
// Residue identity

/// Integral over the disc |z - 3 eps| <= 2 eps of chi'(|z - 3 eps|^2 / eps^2) (conj(z) - 3 eps) / z,
/// by Gauss-Legendre in the radius (split at the profile's kinks) and the periodic
/// trapezoid rule in angle. Exact value for a unit-mass profile: pi eps^2 / 9.
inline cplx residue_check(double eps, int quad_res = 64,
                          const CutoffProfile& profile = CutoffProfile::unit_mass()) {
  if (profile.mode() != CutoffProfile::Mode::unit_mass || std::abs(profile.mass() - 1) > 1e-12)
    throw std::invalid_argument("residue_check: profile must be unit-mass");
  if (std::abs(profile.t1() - 4) > 1e-15) throw std::invalid_argument("residue_check: profile support must be [0, 4]");
  if (quad_res < 64) throw std::invalid_argument("residue_check: need at least 64 nodes per direction");
  if (!(eps > 0)) throw std::invalid_argument("residue_check: eps must be positive");
  std::vector<double> gx, gw;
  detail::gauss_legendre(quad_res, gx, gw);
  // radial kinks of chi'(t): t0, the midpoint of the transition, t1
  const double t0 = profile.t0(), tm = 0.5 * (profile.t0() + profile.t1()), t1 = profile.t1();
  const double cuts[] = {0.0, std::sqrt(t0) * eps, std::sqrt(tm) * eps, std::sqrt(t1) * eps};
  const cplx c(3 * eps, 0);
  cplx total{};
  for (int seg = 0; seg < 3; ++seg) {
    const double a = cuts[seg], b = cuts[seg + 1];
    for (int i = 0; i < quad_res; ++i) {
      const double rho = 0.5 * (a + b) + 0.5 * (b - a) * gx[i];
      const double d = profile.derivative(rho * rho / (eps * eps));
      if (d == 0) continue;
      cplx ring{};
      for (int k = 0; k < quad_res; ++k) {
        const double th = 2 * std::numbers::pi * k / quad_res;
        const cplx z = c + std::polar(rho, th);
        ring += (std::conj(z) - 3 * eps) / z;
      }
      ring *= 2 * std::numbers::pi / quad_res;
      total += 0.5 * (b - a) * gw[i] * d * rho * ring;
    }
  }
  return total;
}

// ---------------------------------------------------------------------------------------
// Mean value

/// |ball average - value at z_o| per component. z_o is snapped to its nearest node.
inline std::vector<double> mean_value_deviation(const Grid& g, const FormField& field, std::span<const cplx> z_o,
                                                double r) {
  if (field.nodes() != g.size()) throw std::invalid_argument("mean_value_deviation: grid mismatch");
  const std::size_t centre = nearest_node(g, z_o);
  std::vector<double> out;
  for (const auto& K : all_multiindices(field.dim(), field.degree())) {
    auto v = field.get(K);
    out.push_back(std::abs(ball_average(g, v, z_o, r) - v[centre]));
  }
  return out;
}

inline double max_of(const std::vector<double>& v) {
  double m = 0;
  for (double x : v) m = std::max(m, x);
  return m;
}

/// Five slice-plane centres: z_1 = 0 and z' at the origin or a small offset along each axis.
inline std::vector<std::vector<cplx>> slice_centres(const Grid& g, double offset) {
  std::vector<std::vector<cplx>> out;
  const cplx shifts[] = {{0, 0}, {1, 0}, {-1, 0}, {0, 1}, {0, -1}};
  for (cplx s : shifts) {
    std::vector<cplx> p(g.n(), cplx{});
    for (int j = 2; j <= g.n(); ++j) p[j - 1] = s * offset * g.plane(j).R;
    // snap to grid nodes so the centre value is sampled, not interpolated
    out.push_back(g.point(nearest_node(g, p)));
  }
  return out;
}

// ---------------------------------------------------------------------------------------
// Laplacian support

struct LaplacianSupport {
  double max_outside = 0;  // |z_1| > 2 delta + margin h_1
  double max_inside = 0;
  double norm_f = 0;
  double margin_cells = 0;
};

/// Split max |Delta f_delta| at |z_1| = 2 delta, leaving `margin` stencil cells beside the cut.
inline LaplacianSupport laplacian_support_check(const OperatorBundle& b, const FormField& f_delta, double delta,
                                                int margin = 2) {
  const Grid& g = b.grid();
  LaplacianSupport rep;
  rep.margin_cells = margin;
  rep.norm_f = b.norm(f_delta);
  const FormField lap = b.laplacian(f_delta);
  const double cut = 2 * delta + margin * g.h(1) * (1 + 1e-9);
  for (const auto& [K, v] : lap.stored())
    for (std::size_t k = 0; k < v.size(); ++k) {
      if (!g.mask()[k]) continue;
      const double a = std::abs(v[k]);
      if (std::abs(g.z(k, 1)) > cut) rep.max_outside = std::max(rep.max_outside, a);
      else rep.max_inside = std::max(rep.max_inside, a);
    }
  return rep;
}

// ---------------------------------------------------------------------------------------
// Test-function pairing

struct PairingReport {
  MultiIndex H;
  std::vector<double> eps;
  std::vector<cplx> values;   // int (dbar field)_H psi_eps dV
  cplx c0{}, c1{}, c2{};      // fit c0 + c1 eps + c2 eps^2
  double fit_residual = 0;    // rms misfit
  double scale = 0;           // max_k int |(dbar field)_H| psi_eps dV
  std::string leading;        // "constant", "O(eps)" or "O(eps^2)"
  bool singular = false;
};

/// Smallest admissible eps: the psi support disc of radius 2 eps must keep 2h away from z_1 = 0.
inline double pairing_eps_min(const Grid& g) { return 2 * g.h(1); }

/// Four eps values, geometric between eps_max and eps_min.
inline std::vector<double> pairing_schedule(double eps_max, double eps_min) {
  std::vector<double> out;
  const double ratio = std::pow(eps_min / eps_max, 1.0 / 3.0);
  for (int k = 0; k < 4; ++k) out.push_back(eps_max * std::pow(ratio, k));
  out.back() = eps_min;
  return out;
}

/// Largest eps allowed by the domain (support 5 eps inside the z_1 disc).
inline double pairing_eps_max(const Grid& g) { return 0.199 * g.plane(1).R; }

namespace detail {

// Complex least squares for v = c0 + c1 e + c2 e^2 (normal equations are 3x3 and real).
inline void fit_quadratic(const std::vector<double>& e, const std::vector<cplx>& v, cplx c[3], double& rms) {
  double A[3][3] = {};
  cplx rhs[3] = {};
  for (std::size_t k = 0; k < e.size(); ++k) {
    const double basis[3] = {1, e[k], e[k] * e[k]};
    for (int i = 0; i < 3; ++i) {
      rhs[i] += basis[i] * v[k];
      for (int j = 0; j < 3; ++j) A[i][j] += basis[i] * basis[j];
    }
  }
  // Gaussian elimination with partial pivoting
  int perm[3] = {0, 1, 2};
  for (int col = 0; col < 3; ++col) {
    int piv = col;
    for (int r = col + 1; r < 3; ++r)
      if (std::abs(A[r][col]) > std::abs(A[piv][col])) piv = r;
    std::swap(A[col], A[piv]);
    std::swap(rhs[col], rhs[piv]);
    std::swap(perm[col], perm[piv]);
    for (int r = col + 1; r < 3; ++r) {
      const double f = A[r][col] / A[col][col];
      for (int j = col; j < 3; ++j) A[r][j] -= f * A[col][j];
      rhs[r] -= f * rhs[col];
    }
  }
  for (int i = 2; i >= 0; --i) {
    cplx s = rhs[i];
    for (int j = i + 1; j < 3; ++j) s -= A[i][j] * c[j];
    c[i] = s / A[i][i];
  }
  double ss = 0;
  for (std::size_t k = 0; k < e.size(); ++k) ss += std::norm(v[k] - (c[0] + c[1] * e[k] + c[2] * e[k] * e[k]));
  rms = std::sqrt(ss / e.size());
}

}  // namespace detail

/// Relative floor under which a fitted constant term is treated as zero.
inline constexpr double pairing_floor = 1e-3;

/// Fit values against {1, eps, eps^2} and set the leading order and singular flag.
/// Singular iff the constant term leads at the largest eps, is at least 5x the fit
/// residual, and exceeds pairing_floor times the absolute pairing scale.
inline void classify_pairing(PairingReport& rep) {
  cplx c[3];
  detail::fit_quadratic(rep.eps, rep.values, c, rep.fit_residual);
  rep.c0 = c[0];
  rep.c1 = c[1];
  rep.c2 = c[2];
  const double e0 = rep.eps.front();
  const double m0 = std::abs(c[0]), m1 = std::abs(c[1]) * e0, m2 = std::abs(c[2]) * e0 * e0;
  rep.leading = (m0 >= m1 && m0 >= m2) ? "constant" : (m1 >= m2 ? "O(eps)" : "O(eps^2)");
  rep.singular = rep.leading == "constant" && m0 >= 5 * rep.fit_residual && m0 > pairing_floor * rep.scale;
}

/// Pairs (dbar field)_H with psi_eps over the schedule and classifies the eps -> 0 behaviour.
inline PairingReport pairing_test(const OperatorBundle& b, const FormField& field, const MultiIndex& H,
                                  const std::vector<double>& eps_schedule) {
  const Grid& g = b.grid();
  if (!H.contains(1)) throw std::invalid_argument("pairing_test: H must contain index 1");
  if (H.degree() != field.degree() + 1 || !H.fits(g.n())) throw std::invalid_argument("pairing_test: H has the wrong degree");
  if (eps_schedule.size() < 4) throw std::invalid_argument("pairing_test: need at least four eps values");
  for (std::size_t k = 0; k < eps_schedule.size(); ++k) {
    if (eps_schedule[k] < pairing_eps_min(g) * (1 - 1e-9))
      throw std::invalid_argument("pairing_test: eps too small for the grid (3 eps - 2 eps < 2h)");
    if (k && !(eps_schedule[k] < eps_schedule[k - 1])) throw std::invalid_argument("pairing_test: eps schedule must decrease");
  }
  PairingReport rep;
  rep.H = H;
  rep.eps = eps_schedule;
  const FormField d = b.dbar(field);
  auto comp = d.get(H);
  const auto profile = CutoffProfile::unit_mass();
  for (double e : eps_schedule) {
    const CArray psi = sample_test_function(profile, e, g);
    rep.values.push_back(detail::blocked_sum<cplx>(psi.size(), [&](std::size_t k) {
      return comp[k] * psi[k].real() * g.volume()[k];
    }));
    rep.scale = std::max(rep.scale, detail::blocked_sum<double>(psi.size(), [&](std::size_t k) {
      return std::abs(comp[k]) * std::abs(psi[k].real()) * g.volume()[k];
    }));
  }
  classify_pairing(rep);
  return rep;
}

// ---------------------------------------------------------------------------------------
// Manufactured singular input

/// u = h / z_1 + g: h lives on the slice (constant in z_1), g on the whole grid.
/// 1/z_1 is sampled only where |z_1| >= h_1/2, so the plane z_1 = 0 is left out.
inline FormField manufacture_singular(const Grid& g, const SingularDecomposition& s) {
  if (s.h.degree() != s.g.degree()) throw std::invalid_argument("manufacture_singular: degree mismatch");
  if (s.g.nodes() != g.size() || s.h.nodes() != g.slice_size())
    throw std::invalid_argument("manufacture_singular: grid mismatch");
  FormField u = s.g;
  const std::size_t inner = g.stride(1);
  for (const auto& [K, hv] : s.h.stored()) {
    auto& o = u.at(K);
    for (std::size_t k = 0; k < g.size(); ++k) {
      if (!g.mask()[k]) continue;
      const cplx z1 = g.z(k, 1);
      if (std::abs(z1) < 0.5 * g.h(1)) continue;
      o[k] += hv[k % inner] / z1;
    }
  }
  return u;
}

/// Smooth interior bump on the slice used for the detector input: (1 - |z'|^2/r^2)^3.
inline double slice_bump(const Grid& g, std::span<const cplx> z, double frac = 0.5) {
  double v = 1;
  for (int j = 2; j <= g.n(); ++j) {
    const double r = frac * g.plane(j).R;
    const double t = std::norm(z[j - 1]) / (r * r);
    v *= t < 1 ? (1 - t) * (1 - t) * (1 - t) : 0.0;
  }
  return v;
}

/// Reference constant -(pi/9) int g(z') psi(z') dV' by tensor Gauss quadrature in polar
/// coordinates on each z_j disc, independent of the grid.
inline double detector_reference(const Grid& g, double bump_frac = 0.5, int quad = 64) {
  if (g.n() < 2) throw std::invalid_argument("detector_reference: need n >= 2");
  std::vector<double> gx, gw;
  detail::gauss_legendre(quad, gx, gw);
  const auto profile = CutoffProfile::unit_mass();
  double total = 1;
  // g and psi are both products of radial factors, so the integral factorises
  for (int j = 2; j <= g.n(); ++j) {
    const double R = g.plane(j).R;
    const double s = test_function_zprime_extent * R / profile.t1();
    const double rb = bump_frac * R;
    const double rmax = std::min(rb, test_function_zprime_extent * R);
    // kinks of the psi factor in the radius
    std::vector<double> cuts = {0.0, profile.t0() * s, 0.5 * (profile.t0() + profile.t1()) * s, profile.t1() * s, rb};
    std::sort(cuts.begin(), cuts.end());
    double acc = 0;
    for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
      const double a = cuts[c], b = std::min(cuts[c + 1], rmax);
      if (b <= a) continue;
      for (int i = 0; i < quad; ++i) {
        const double r = 0.5 * (a + b) + 0.5 * (b - a) * gx[i];
        const double t = r * r / (rb * rb);
        const double gv = t < 1 ? (1 - t) * (1 - t) * (1 - t) : 0.0;
        acc += 0.5 * (b - a) * gw[i] * gv * profile.value(r / s) * 2 * std::numbers::pi * r;
      }
    }
    total *= acc;
  }
  return -std::numbers::pi / 9 * total;
}

// ---------------------------------------------------------------------------------------
// Strip-ball volume

struct VolumeBound {
  double delta = 0;
  std::vector<double> radii;   // st values
  std::vector<double> measure; // quadrature measure of {|z_1| < delta} cap B(z_o, st)
  std::vector<double> ratio;   // measure / (delta st^(2n-1))
  double bound = 0;            // pi sigma_{2n-2}, twice the continuum supremum
};

/// Volume of the unit ball in R^d.
inline double unit_ball_volume(int d) { return std::pow(std::numbers::pi, d / 2.0) / std::tgamma(d / 2.0 + 1); }

inline VolumeBound volume_bound_check(const Grid& g, double delta, std::span<const cplx> z_o) {
  VolumeBound rep;
  rep.delta = delta;
  rep.radii = {2 * delta, 4 * delta};
  const int n = g.n();
  rep.bound = std::numbers::pi * unit_ball_volume(2 * n - 2);
  for (double st : rep.radii) {
    const double m = detail::blocked_sum<double>(g.size(), [&](std::size_t k) {
      if (!g.mask()[k] || std::abs(g.z(k, 1)) >= delta) return 0.0;
      double d2 = 0;
      for (int j = 1; j <= n; ++j) d2 += std::norm(g.z(k, j) - z_o[j - 1]);
      return d2 < st * st ? g.volume()[k] : 0.0;
    });
    rep.measure.push_back(m);
    rep.ratio.push_back(m / (delta * std::pow(st, 2 * n - 1)));
  }
  return rep;
}

}  // namespace dbarx

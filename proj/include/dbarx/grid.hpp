#pragma once

// Polydisc tensor grids, cut-cell volume weights and per-plane difference stencils.
//
// A node of the 2n-dimensional grid is addressed by n plane digits p_j = a_j*N + b_j,
// where (a_j, b_j) index the (x_j, y_j) axes of coordinate z_j. The linear index is
// sum_j p_j * P^(n-1-j) with P = N*N, so z_1 is the slowest digit.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dbarx/form_algebra.hpp"

namespace dbarx {

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct DomainSpec {
  int n = 2;
  std::vector<double> polyradii{1.0, 1.0};
  bool scale_to_unit_diameter = false;

  double diameter() const {
    double s = 0;
    for (double r : polyradii) s += r * r;
    return 2 * std::sqrt(s);
  }

  /// Radii after the optional rescale to diameter 1.
  std::vector<double> effective_radii() const {
    if (!scale_to_unit_diameter) return polyradii;
    std::vector<double> r = polyradii;
    const double d = diameter();
    for (auto& v : r) v /= d;
    return r;
  }

  void validate() const {
    if (n < 2) throw ConfigError("DomainSpec: n must be >= 2");
    if (static_cast<int>(polyradii.size()) != n) throw ConfigError("DomainSpec: need one radius per coordinate");
    for (double r : polyradii)
      if (!(r > 0)) throw ConfigError("DomainSpec: radii must be positive");
  }

  friend bool operator==(const DomainSpec&, const DomainSpec&) = default;
};

namespace detail {

// Area of the disc |z| < R intersected with [x0,x1] x [y0,y1], exact up to rounding.
inline double disc_cell_area(double R, double x0, double x1, double y0, double y1) {
  auto arc = [R](double x) {  // antiderivative of sqrt(R^2 - x^2)
    x = std::clamp(x, -R, R);
    return 0.5 * (x * std::sqrt(std::max(0.0, R * R - x * x)) + R * R * std::asin(x / R));
  };
  const double lo = std::max(x0, -R), hi = std::min(x1, R);
  if (hi <= lo) return 0.0;
  std::vector<double> bp{lo, hi};
  for (double y : {y0, y1})
    if (std::abs(y) < R) {
      const double c = std::sqrt(R * R - y * y);
      for (double x : {-c, c})
        if (x > lo && x < hi) bp.push_back(x);
    }
  std::sort(bp.begin(), bp.end());
  double area = 0;
  for (std::size_t k = 0; k + 1 < bp.size(); ++k) {
    const double a = bp[k], b = bp[k + 1];
    if (b <= a) continue;
    const double m = 0.5 * (a + b);
    const double s = std::sqrt(std::max(0.0, R * R - m * m));
    const double len = b - a;
    const double S = arc(b) - arc(a);
    // upper clamp(s, y0, y1) minus lower clamp(-s, y0, y1); each is a constant or +-s on the segment
    auto integrate_clamp = [&](double v, double sign) {
      if (v <= y0) return y0 * len;
      if (v >= y1) return y1 * len;
      return sign * S;
    };
    area += integrate_clamp(s, 1.0) - integrate_clamp(-s, -1.0);
  }
  return area;
}

}  // namespace detail

/// One coordinate plane: N x N nodes on [-R,R]^2, masked to the open disc |z| < R.
struct PlaneGrid {
  int N = 0;
  double R = 1, h = 0;
  std::vector<std::uint8_t> mask;
  RArray weight;  // cut-cell area, zero off the mask
  int center = 0; // plane digit of z = 0

  int size() const { return N * N; }
  double coord(int a) const { return -R + a * h; }
  cplx z(int p) const { return {coord(p / N), coord(p % N)}; }
  bool inside(int a, int b) const { return a >= 0 && b >= 0 && a < N && b < N && mask[a * N + b]; }

  static PlaneGrid build(int N, double R) {
    PlaneGrid g;
    g.N = N;
    g.R = R;
    g.h = 2 * R / (N - 1);
    g.center = ((N - 1) / 2) * N + (N - 1) / 2;
    g.mask.assign(N * N, 0);
    g.weight.assign(N * N, 0.0);
    const double tol = 1e-12 * R * R;
    for (int a = 0; a < N; ++a)
      for (int b = 0; b < N; ++b) {
        const double x = g.coord(a), y = g.coord(b);
        g.mask[a * N + b] = (x * x + y * y < R * R - tol) ? 1 : 0;
      }
    // Cut-cell areas. Overlap of cells whose centres fall outside the disc goes to the
    // nearest masked node so the weights sum to the disc area.
    for (int a = 0; a < N; ++a)
      for (int b = 0; b < N; ++b) {
        const double x = g.coord(a), y = g.coord(b);
        const double area = detail::disc_cell_area(R, x - g.h / 2, x + g.h / 2, y - g.h / 2, y + g.h / 2);
        if (area <= 0) continue;
        if (g.mask[a * N + b]) {
          g.weight[a * N + b] += area;
          continue;
        }
        int best = -1;
        double bestd = 1e300;
        for (int da = -2; da <= 2; ++da)
          for (int db = -2; db <= 2; ++db)
            if (g.inside(a + da, b + db)) {
              const double d = da * da + db * db;
              if (d < bestd) {
                bestd = d;
                best = (a + da) * N + (b + db);
              }
            }
        if (best >= 0) g.weight[best] += area;
      }
    return g;
  }
};

/// Tensor grid over a polydisc.
class Grid {
public:
  Grid() = default;

  const DomainSpec& spec() const { return spec_; }
  int n() const { return n_; }
  int resolution() const { return N_; }
  std::size_t plane_size() const { return P_; }
  std::size_t size() const { return total_; }
  const PlaneGrid& plane(int j) const { return planes_[j - 1]; }  // 1-based coordinate
  double h(int j) const { return plane(j).h; }
  double h_max() const {
    double m = 0;
    for (auto& p : planes_) m = std::max(m, p.h);
    return m;
  }

  std::span<const double> volume() const { return volume_; }
  std::span<const std::uint8_t> mask() const { return mask_; }
  std::span<const std::size_t> slice_nodes() const { return slice_nodes_; }

  /// Stride of the plane digit of coordinate j in the linear index.
  std::size_t stride(int j) const { return strides_[j - 1]; }
  int digit(std::size_t node, int j) const { return static_cast<int>((node / stride(j)) % P_); }
  cplx z(std::size_t node, int j) const { return plane(j).z(digit(node, j)); }
  std::vector<cplx> point(std::size_t node) const {
    std::vector<cplx> p(n_);
    for (int j = 1; j <= n_; ++j) p[j - 1] = z(node, j);
    return p;
  }
  /// Blocks of the coordinates before j whose digits are all masked; other blocks carry no data.
  std::span<const std::size_t> active_outer(int j) const { return active_outer_[j - 1]; }
  bool on_slice(std::size_t node) const { return digit(node, 1) == plane(1).center; }

  // Slice grid D^0: digits of coordinates 2..n, same ordering as the lower digits.
  std::size_t slice_size() const { return total_ / P_; }
  std::span<const double> slice_volume() const { return slice_volume_; }
  std::size_t slice_to_node(std::size_t s) const { return static_cast<std::size_t>(plane(1).center) * stride(1) + s; }

  double mask_volume() const {
    return detail::blocked_sum<double>(total_, [&](std::size_t k) { return volume_[k]; });
  }

  /// Fill a scalar array from f(z) on masked nodes; zero elsewhere.
  CArray sample(const std::function<cplx(std::span<const cplx>)>& f) const {
    CArray out(total_, cplx{});
    std::vector<cplx> p(n_);
    for (std::size_t k = 0; k < total_; ++k) {
      if (!mask_[k]) continue;
      for (int j = 1; j <= n_; ++j) p[j - 1] = z(k, j);
      out[k] = f(p);
    }
    return out;
  }

  static constexpr std::size_t default_memory_budget = std::size_t{2} << 30;

  /// Rough working-set estimate for a build at this resolution (grid plus a dozen fields).
  static std::size_t estimate_bytes(int n, int resolution) {
    double nodes = std::pow(static_cast<double>(resolution), 2 * n);
    return static_cast<std::size_t>(nodes * (sizeof(double) * 2 + 1 + 12 * sizeof(cplx)));
  }

  friend Grid build_grid(const DomainSpec& spec, int resolution, std::size_t memory_budget);

private:
  DomainSpec spec_;
  int n_ = 0, N_ = 0;
  std::size_t P_ = 0, total_ = 0;
  std::vector<PlaneGrid> planes_;
  std::vector<std::size_t> strides_;
  RArray volume_;
  std::vector<std::uint8_t> mask_;
  std::vector<std::size_t> slice_nodes_;
  RArray slice_volume_;
  std::vector<std::vector<std::size_t>> active_outer_;
};

inline Grid build_grid(const DomainSpec& spec, int resolution,
                       std::size_t memory_budget = Grid::default_memory_budget) {
  spec.validate();
  if (resolution < 8) throw ConfigError("build_grid: resolution must be >= 8");
  if (resolution % 2 == 0) throw ConfigError("build_grid: resolution must be odd so that 0 is a node");
  if (Grid::estimate_bytes(spec.n, resolution) > memory_budget)
    throw ConfigError("build_grid: estimated memory " + std::to_string(Grid::estimate_bytes(spec.n, resolution)) +
                      " bytes exceeds budget");
  Grid g;
  g.spec_ = spec;
  g.n_ = spec.n;
  g.N_ = resolution;
  g.P_ = static_cast<std::size_t>(resolution) * resolution;
  const auto radii = spec.effective_radii();
  for (int j = 0; j < g.n_; ++j) g.planes_.push_back(PlaneGrid::build(resolution, radii[j]));
  g.strides_.assign(g.n_, 1);
  for (int j = g.n_ - 2; j >= 0; --j) g.strides_[j] = g.strides_[j + 1] * g.P_;
  g.total_ = g.strides_[0] * g.P_;

  g.volume_.assign(g.total_, 0.0);
  g.mask_.assign(g.total_, 0);
  for (std::size_t k = 0; k < g.total_; ++k) {
    double w = 1;
    bool in = true;
    for (int j = 1; j <= g.n_ && in; ++j) {
      const int p = g.digit(k, j);
      in = g.plane(j).mask[p] != 0;
      w *= g.plane(j).weight[p];
    }
    if (in) {
      g.mask_[k] = 1;
      g.volume_[k] = w;
    }
  }
  g.active_outer_.resize(g.n_);
  for (int j = 1; j <= g.n_; ++j) {
    const std::size_t outer = g.total_ / (g.stride(j) * g.P_);
    for (std::size_t o = 0; o < outer; ++o) {
      bool ok = true;
      std::size_t rest = o;
      for (int i = j - 1; i >= 1 && ok; --i) {
        ok = g.plane(i).mask[rest % g.P_] != 0;
        rest /= g.P_;
      }
      if (ok) g.active_outer_[j - 1].push_back(o);
    }
  }
  const std::size_t slice_count = g.total_ / g.P_;
  g.slice_volume_.assign(slice_count, 0.0);
  for (std::size_t s = 0; s < slice_count; ++s) {
    const std::size_t node = g.slice_to_node(s);
    if (g.mask_[node]) {
      g.slice_nodes_.push_back(node);
      double w = 1;
      for (int j = 2; j <= g.n_; ++j) w *= g.plane(j).weight[g.digit(node, j)];
      g.slice_volume_[s] = w;
    }
  }
  if (g.slice_nodes_.empty()) throw ConfigError("build_grid: slice plane z1 = 0 is empty");
  return g;
}

/// Sparse operator acting on the digit of one coordinate plane, identity on the others.
class PlaneStencil {
public:
  struct Term {
    int offset;  // plane-digit offset
    cplx coef;
  };

  PlaneStencil() = default;
  PlaneStencil(int coord, std::vector<std::vector<Term>> rows) : coord_(coord) {
    row_ptr_.push_back(0);
    for (auto& r : rows) {
      for (auto& t : r) terms_.push_back(t);
      row_ptr_.push_back(terms_.size());
    }
  }

  int coord() const { return coord_; }
  std::span<const Term> row(int p) const { return {terms_.data() + row_ptr_[p], terms_.data() + row_ptr_[p + 1]}; }
  int rows() const { return static_cast<int>(row_ptr_.size()) - 1; }

  /// out += scale * (this applied to in). Inputs must vanish off the mask.
  void apply_add(const Grid& g, std::span<const cplx> in, std::span<cplx> out, cplx scale = 1.0) const {
    const std::size_t inner = g.stride(coord_);
    const std::size_t P = g.plane_size();
    const cplx* src0 = in.data();
    cplx* dst0 = out.data();
    // the inner range is tiled so the rows touched by one stencil sweep stay in cache
    constexpr std::size_t tile = 128;
    for (std::size_t o : g.active_outer(coord_))
      for (std::size_t k0 = 0; k0 < inner; k0 += tile)
      for (std::size_t p = 0; p < P; ++p) {
        const std::size_t k1 = std::min(inner, k0 + tile);
        const std::size_t lo = row_ptr_[p], hi = row_ptr_[p + 1];
        if (lo == hi) continue;
        const std::size_t base = (o * P + p) * inner;
        if (inner == 1) {
          double ar = 0, ai = 0;
          for (std::size_t t = lo; t < hi; ++t) {
            const cplx c = terms_[t].coef, x = src0[static_cast<std::ptrdiff_t>(base) + terms_[t].offset];
            ar += c.real() * x.real() - c.imag() * x.imag();
            ai += c.real() * x.imag() + c.imag() * x.real();
          }
          dst0[base] += cplx(scale.real() * ar - scale.imag() * ai, scale.real() * ai + scale.imag() * ar);
          continue;
        }
        for (std::size_t t = lo; t < hi; ++t) {
          const cplx c = scale * terms_[t].coef;
          const cplx* src = src0 + static_cast<std::ptrdiff_t>(base) + static_cast<std::ptrdiff_t>(terms_[t].offset) * static_cast<std::ptrdiff_t>(inner);
          cplx* dst = dst0 + base;
          const double cr = c.real(), ci = c.imag();
          auto* d = reinterpret_cast<double*>(dst);
          auto* sp = reinterpret_cast<const double*>(src);
          // explicit real arithmetic; std::complex products go through the slow NaN-aware path
          for (std::size_t k = k0; k < k1; ++k) {
            const double xr = sp[2 * k], xi = sp[2 * k + 1];
            d[2 * k] += cr * xr - ci * xi;
            d[2 * k + 1] += cr * xi + ci * xr;
          }
        }
      }
  }

  CArray apply(const Grid& g, std::span<const cplx> in) const {
    CArray out(g.size(), cplx{});
    apply_add(g, in, out);
    return out;
  }

  /// Adjoint with respect to the plane cut-cell weights: (A* b)_p = w_p^-1 sum_m conj(A_mp) w_m b_m.
  PlaneStencil adjoint(const PlaneGrid& pg) const {
    std::vector<std::vector<Term>> rows(pg.size());
    for (int m = 0; m < pg.size(); ++m)
      for (const Term& t : row(m)) {
        const int p = m + t.offset;
        rows[p].push_back({m - p, std::conj(t.coef) * pg.weight[m] / pg.weight[p]});
      }
    return PlaneStencil(coord_, std::move(rows));
  }

private:
  int coord_ = 1;
  std::vector<std::size_t> row_ptr_;
  std::vector<Term> terms_;
};

namespace detail {

// Second-order first derivative along one plane axis: centred where both neighbours
// are masked, one-sided otherwise.
inline std::vector<std::pair<int, double>> axis_derivative(const PlaneGrid& pg, int a, int b, bool along_x) {
  auto in = [&](int s) { return along_x ? pg.inside(a + s, b) : pg.inside(a, b + s); };
  const double inv = 1.0 / (2 * pg.h);
  if (in(-1) && in(1)) return {{-1, -inv}, {1, inv}};
  if (in(-1) && in(-2)) return {{0, 3 * inv}, {-1, -4 * inv}, {-2, inv}};
  if (in(1) && in(2)) return {{0, -3 * inv}, {1, 4 * inv}, {2, -inv}};
  throw std::logic_error("axis_derivative: plane row shorter than three nodes");
}

inline void add_term(std::vector<PlaneStencil::Term>& row, int offset, cplx c) {
  for (auto& t : row)
    if (t.offset == offset) {
      t.coef += c;
      return;
    }
  row.push_back({offset, c});
}

}  // namespace detail

/// Discrete Wirtinger derivative on plane j: 1/2 (d_x + conj_sign * i d_y).
/// conj_sign = +1 gives d/dzbar, -1 gives d/dz.
inline PlaneStencil wirtinger_stencil(const Grid& g, int j, double conj_sign) {
  const PlaneGrid& pg = g.plane(j);
  const int N = pg.N;
  std::vector<std::vector<PlaneStencil::Term>> rows(pg.size());
  for (int a = 0; a < N; ++a)
    for (int b = 0; b < N; ++b) {
      if (!pg.inside(a, b)) continue;
      auto& row = rows[a * N + b];
      for (auto [s, c] : detail::axis_derivative(pg, a, b, true)) detail::add_term(row, s * N, 0.5 * c);
      for (auto [s, c] : detail::axis_derivative(pg, a, b, false))
        detail::add_term(row, s, cplx(0, 0.5 * conj_sign * c));
    }
  return PlaneStencil(j, std::move(rows));
}

inline CArray dzbar(const Grid& g, int j, std::span<const cplx> u) {
  if (j < 1 || j > g.n()) throw std::invalid_argument("dzbar: coordinate index out of range");
  return wirtinger_stencil(g, j, 1.0).apply(g, u);
}

inline CArray dz(const Grid& g, int j, std::span<const cplx> u) {
  if (j < 1 || j > g.n()) throw std::invalid_argument("dz: coordinate index out of range");
  return wirtinger_stencil(g, j, -1.0).apply(g, u);
}

/// Volume-weighted average of u over grid nodes in the closed real ball |z - z_o| <= r.
inline cplx ball_average(const Grid& g, std::span<const cplx> u, std::span<const cplx> z_o, double r) {
  const int n = g.n();
  if (static_cast<int>(z_o.size()) != n) throw std::invalid_argument("ball_average: centre dimension mismatch");
  for (int j = 1; j <= n; ++j) {
    if (r < 2 * g.h(j) - 1e-12) throw std::invalid_argument("ball_average: radius below two grid cells");
    if (std::abs(z_o[j - 1]) + r >= g.plane(j).R) throw std::invalid_argument("ball_average: ball exits the domain");
  }
  // Enumerate per-plane candidate digits inside the coordinate disc of radius r.
  std::vector<std::vector<std::pair<int, double>>> cand(n);
  for (int j = 1; j <= n; ++j) {
    const PlaneGrid& pg = g.plane(j);
    for (int p = 0; p < pg.size(); ++p) {
      const double d2 = std::norm(pg.z(p) - z_o[j - 1]);
      if (d2 <= r * r * (1 + 1e-12) && pg.mask[p]) cand[j - 1].push_back({p, d2});
    }
  }
  cplx num{};
  double den = 0;
  std::vector<std::size_t> it(n, 0);
  while (true) {
    double d2 = 0;
    std::size_t node = 0;
    for (int j = 0; j < n; ++j) {
      d2 += cand[j][it[j]].second;
      node += static_cast<std::size_t>(cand[j][it[j]].first) * g.stride(j + 1);
    }
    if (d2 <= r * r * (1 + 1e-12)) {
      num += u[node] * g.volume()[node];
      den += g.volume()[node];
    }
    int j = n - 1;
    while (j >= 0 && ++it[j] == cand[j].size()) it[j--] = 0;
    if (j < 0) break;
  }
  return num / den;
}

/// Node nearest to a point (ties go to the lower index).
inline std::size_t nearest_node(const Grid& g, std::span<const cplx> z) {
  std::size_t node = 0;
  for (int j = 1; j <= g.n(); ++j) {
    const PlaneGrid& pg = g.plane(j);
    const int a = static_cast<int>(std::lround((z[j - 1].real() + pg.R) / pg.h));
    const int b = static_cast<int>(std::lround((z[j - 1].imag() + pg.R) / pg.h));
    node += static_cast<std::size_t>(std::clamp(a, 0, pg.N - 1) * pg.N + std::clamp(b, 0, pg.N - 1)) * g.stride(j);
  }
  return node;
}

}  // namespace dbarx

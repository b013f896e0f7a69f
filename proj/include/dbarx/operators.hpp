#pragma once

// Discrete Dolbeault complex on a polydisc grid.
//
//   (dbar u)_H  = sum_{i in H} (-1)^pos(i,H) Dbar_i u_{H\i}
//   (theta v)_K = sum_{i not in K} (-1)^pos(i,K+i) Dbar_i^* v_{K+i}
//
// Dbar_i^* is the transpose-conjugate of Dbar_i against the cut-cell weights, so theta
// is the exact discrete adjoint of dbar. Stencils on distinct planes commute, which
// makes dbar o dbar vanish identically.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dbarx/form_algebra.hpp"
#include "dbarx/grid.hpp"

namespace dbarx {

class OperatorBundle {
public:
  explicit OperatorBundle(const Grid& g) : grid_(&g) {
    for (int j = 1; j <= g.n(); ++j) {
      dzbar_.push_back(wirtinger_stencil(g, j, 1.0));
      adjoint_.push_back(dzbar_.back().adjoint(g.plane(j)));
    }
  }

  const Grid& grid() const { return *grid_; }
  int n() const { return grid_->n(); }
  const PlaneStencil& dzbar_stencil(int j) const { return dzbar_[j - 1]; }
  const PlaneStencil& adjoint_stencil(int j) const { return adjoint_[j - 1]; }

  FormField zero(int q) const { return FormField(n(), q, grid_->size()); }

  FormField dbar(const FormField& u) const {
    check(u);
    const int q = u.degree();
    if (q >= n()) throw std::invalid_argument("dbar: degree " + std::to_string(q) + " out of range");
    FormField out = zero(q + 1);
    for (const auto& H : all_multiindices(n(), q + 1))
      for (int i : H) {
        const auto [sign, K] = remove_index(i, H);
        if (!u.has(K)) continue;
        dzbar_[i - 1].apply_add(*grid_, u.get(K), out.at(H), double(sign));
      }
    return out;
  }

  FormField theta(const FormField& v) const {
    check(v);
    const int q = v.degree();
    if (q < 1) throw std::invalid_argument("theta: degree " + std::to_string(q) + " out of range");
    FormField out = zero(q - 1);
    for (const auto& K : all_multiindices(n(), q - 1))
      for (int i = 1; i <= n(); ++i) {
        if (K.contains(i)) continue;
        const auto [sign, H] = insert_index(i, K);
        if (!v.has(H)) continue;
        adjoint_[i - 1].apply_add(*grid_, v.get(H), out.at(K), double(sign));
      }
    return out;
  }

  /// Hodge Laplacian dbar theta + theta dbar. On functions it equals -1/4 of the real Laplacian.
  FormField laplacian(const FormField& u) const {
    const int q = u.degree();
    FormField out = zero(q);
    if (q >= 1) out = dbar(theta(u));
    if (q < n()) out = field_axpy(1.0, theta(dbar(u)), out);
    return out;
  }

  double norm(const FormField& u) const { return l2_norm(u, grid_->volume()); }
  cplx inner(const FormField& a, const FormField& b) const { return l2_inner(a, b, grid_->volume()); }

private:
  void check(const FormField& u) const {
    if (u.dim() != n() || u.nodes() != grid_->size()) throw std::invalid_argument("OperatorBundle: field/grid mismatch");
  }
  const Grid* grid_;
  std::vector<PlaneStencil> dzbar_, adjoint_;
};

/// Linear map between form degrees, applied matrix-free.
struct FormMap {
  const OperatorBundle* bundle;
  int from_degree, to_degree;
  enum class Kind { dbar, theta, laplacian } kind;

  FormField operator()(const FormField& u) const {
    if (u.degree() != from_degree) throw std::invalid_argument("FormMap: input degree mismatch");
    switch (kind) {
      case Kind::dbar: return bundle->dbar(u);
      case Kind::theta: return bundle->theta(u);
      default: return bundle->laplacian(u);
    }
  }
};

inline FormMap assemble_dbar(const OperatorBundle& b, int q) {
  if (q < 0 || q >= b.n()) throw std::invalid_argument("assemble_dbar: q out of range");
  return {&b, q, q + 1, FormMap::Kind::dbar};
}

inline FormMap assemble_theta(const OperatorBundle& b, int q) {
  if (q < 1 || q > b.n()) throw std::invalid_argument("assemble_theta: q out of range");
  return {&b, q, q - 1, FormMap::Kind::theta};
}

inline FormField laplacian_apply(const OperatorBundle& b, const FormField& u) {
  if (u.degree() < 0 || u.degree() > b.n()) throw std::invalid_argument("laplacian_apply: degree out of range");
  return b.laplacian(u);
}

// ---------------------------------------------------------------------------------------
// Explicit sparse assembly, used for operator-level identities.

/// Row-compressed complex matrix over (component, node) pairs.
struct SparseMatrix {
  std::size_t rows = 0, cols = 0;
  std::vector<std::size_t> row_ptr{0};
  std::vector<std::size_t> col;
  std::vector<cplx> val;

  double max_abs() const {
    double m = 0;
    for (auto v : val) m = std::max(m, std::abs(v));
    return m;
  }
};

inline SparseMatrix multiply(const SparseMatrix& A, const SparseMatrix& B) {
  if (A.cols != B.rows) throw std::invalid_argument("multiply: shape mismatch");
  SparseMatrix C;
  C.rows = A.rows;
  C.cols = B.cols;
  std::map<std::size_t, cplx> acc;
  for (std::size_t r = 0; r < A.rows; ++r) {
    acc.clear();
    for (std::size_t a = A.row_ptr[r]; a < A.row_ptr[r + 1]; ++a) {
      const std::size_t k = A.col[a];
      for (std::size_t b = B.row_ptr[k]; b < B.row_ptr[k + 1]; ++b) acc[B.col[b]] += A.val[a] * B.val[b];
    }
    for (auto& [c, v] : acc) {
      C.col.push_back(c);
      C.val.push_back(v);
    }
    C.row_ptr.push_back(C.col.size());
  }
  return C;
}

/// Sparse matrix of dbar_q (theta = false) or theta_{q} (theta = true), columns and rows
/// laid out as component-major blocks of grid nodes in lexicographic multiindex order.
inline SparseMatrix assemble_sparse(const OperatorBundle& b, int q, bool theta) {
  const Grid& g = b.grid();
  const int n = b.n();
  const int qo = theta ? q - 1 : q + 1;
  if (qo < 0 || qo > n || q < 0 || q > n) throw std::invalid_argument("assemble_sparse: degree out of range");
  const auto in_keys = all_multiindices(n, q);
  const auto out_keys = all_multiindices(n, qo);
  auto key_pos = [](const std::vector<MultiIndex>& keys, const MultiIndex& K) {
    return static_cast<std::size_t>(std::lower_bound(keys.begin(), keys.end(), K) - keys.begin());
  };
  const std::size_t N = g.size();
  SparseMatrix M;
  M.rows = out_keys.size() * N;
  M.cols = in_keys.size() * N;
  std::vector<std::pair<std::size_t, cplx>> row;
  for (std::size_t oc = 0; oc < out_keys.size(); ++oc) {
    const MultiIndex& O = out_keys[oc];
    for (std::size_t node = 0; node < N; ++node) {
      row.clear();
      if (g.mask()[node]) {
        for (int i = 1; i <= n; ++i) {
          MultiIndex src;
          int sign;
          if (!theta) {
            if (!O.contains(i)) continue;
            auto r = remove_index(i, O);
            sign = r.sign;
            src = r.index;
          } else {
            if (O.contains(i)) continue;
            auto r = insert_index(i, O);
            sign = r.sign;
            src = r.index;
          }
          const PlaneStencil& st = theta ? b.adjoint_stencil(i) : b.dzbar_stencil(i);
          const std::size_t base = key_pos(in_keys, src) * N;
          for (const auto& t : st.row(g.digit(node, i))) {
            const std::size_t c = node + static_cast<std::ptrdiff_t>(t.offset) * static_cast<std::ptrdiff_t>(g.stride(i));
            row.push_back({base + c, double(sign) * t.coef});
          }
        }
        std::sort(row.begin(), row.end(), [](auto& x, auto& y) { return x.first < y.first; });
      }
      for (std::size_t k = 0; k < row.size(); ++k) {
        if (k > 0 && row[k].first == M.col.back()) {
          M.val.back() += row[k].second;
          continue;
        }
        M.col.push_back(row[k].first);
        M.val.push_back(row[k].second);
      }
      M.row_ptr.push_back(M.col.size());
    }
  }
  return M;
}

}  // namespace dbarx

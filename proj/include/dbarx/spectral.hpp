#pragma once

// Pseudo-inverse of the discrete Hodge Laplacian by fast diagonalisation.
//
// Stencils on different planes commute, so the mixed terms of dbar theta + theta dbar
// cancel and each component H sees a sum of one-plane operators:
//   Delta_H = sum_{l in H} D_l D_l^*  +  sum_{l not in H} D_l^* D_l.
// Each one-plane operator is self-adjoint in the cut-cell weights; after the symmetric
// rescaling by sqrt(w) it is Hermitian and has a dense unitary eigenbasis. Applying the
// pseudo-inverse is then n mode products forward, a pointwise division, n back.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <vector>

#include "dbarx/form_algebra.hpp"
#include "dbarx/grid.hpp"
#include "dbarx/operators.hpp"

namespace dbarx {

class HodgePseudoInverse {
public:
  using Mat = Eigen::MatrixXcd;

  explicit HodgePseudoInverse(const OperatorBundle& b, double cutoff = 1e-11) : bundle_(&b), cutoff_(cutoff) {
    const Grid& g = b.grid();
    for (int j = 1; j <= g.n(); ++j) {
      const PlaneGrid& pg = g.plane(j);
      Plane pl;
      for (int p = 0; p < pg.size(); ++p)
        if (pg.mask[p]) pl.digits.push_back(p);
      const int M = static_cast<int>(pl.digits.size());
      std::vector<int> pos(pg.size(), -1);
      for (int k = 0; k < M; ++k) pos[pl.digits[k]] = k;
      // sqrt(W) D sqrt(W)^-1 on masked digits
      Mat S = Mat::Zero(M, M);
      const PlaneStencil& D = b.dzbar_stencil(j);
      for (int k = 0; k < M; ++k) {
        const int p = pl.digits[k];
        for (const auto& t : D.row(p)) {
          const int m = pos[p + t.offset];
          S(k, m) += t.coef * std::sqrt(pg.weight[p] / pg.weight[p + t.offset]);
        }
      }
      decompose(S * S.adjoint(), pl.U_in, pl.lam_in);
      decompose(S.adjoint() * S, pl.U_out, pl.lam_out);
      pl_max_ = std::max({pl_max_, pl.lam_in.maxCoeff(), pl.lam_out.maxCoeff()});
      planes_.push_back(std::move(pl));
    }
  }

  /// Delta^+ applied componentwise. Values off the mask are ignored and returned as zero.
  FormField apply(const FormField& r) const {
    const Grid& g = bundle_->grid();
    FormField out(r.dim(), r.degree(), r.nodes());
    for (const auto& [H, vals] : r.stored()) {
      Mat X = gather(g, vals);
      for (int j = 1; j <= g.n(); ++j) mode_product(X, j, adjoint_of(H, j));
      divide(X, H);
      for (int j = 1; j <= g.n(); ++j) mode_product(X, j, basis_of(H, j));
      scatter(g, X, out.at(H));
    }
    return out;
  }

private:
  struct Plane {
    std::vector<int> digits;
    Mat U_in, U_out;  // eigenbases of D D^* and D^* D (symmetrised)
    Eigen::VectorXd lam_in, lam_out;
  };

  static void decompose(const Mat& A, Mat& U, Eigen::VectorXd& lam) {
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (A + A.adjoint()));
    U = es.eigenvectors();
    lam = es.eigenvalues().cwiseMax(0.0);
  }

  Mat basis_of(const MultiIndex& H, int j) const { return H.contains(j) ? planes_[j - 1].U_in : planes_[j - 1].U_out; }
  Mat adjoint_of(const MultiIndex& H, int j) const { return basis_of(H, j).adjoint(); }

  // Masked values as an (M_1 ... M_n) tensor stored with the last mode fastest, scaled by sqrt(volume).
  Mat gather(const Grid& g, std::span<const cplx> vals) const {
    std::size_t total = 1;
    for (auto& pl : planes_) total *= pl.digits.size();
    Mat X(static_cast<Eigen::Index>(total), 1);
    std::size_t k = 0;
    for_each_masked(g, [&](std::size_t node) {
      X(static_cast<Eigen::Index>(k++), 0) = vals[node] * std::sqrt(g.volume()[node]);
    });
    return X;
  }

  void scatter(const Grid& g, const Mat& X, CArray& out) const {
    std::size_t k = 0;
    for_each_masked(g, [&](std::size_t node) {
      out[node] = X(static_cast<Eigen::Index>(k++), 0) / std::sqrt(g.volume()[node]);
    });
  }

  template <class F>
  void for_each_masked(const Grid& g, F&& f) const {
    const int n = g.n();
    std::vector<std::size_t> it(n, 0);
    while (true) {
      std::size_t node = 0;
      for (int j = 0; j < n; ++j) node += static_cast<std::size_t>(planes_[j].digits[it[j]]) * g.stride(j + 1);
      f(node);
      int j = n - 1;
      while (j >= 0 && ++it[j] == planes_[j].digits.size()) it[j--] = 0;
      if (j < 0) break;
    }
  }

  // X <- (I x .. x A x .. x I) X along mode j.
  void mode_product(Mat& X, int j, const Mat& A) const {
    const Eigen::Index M = A.rows();
    Eigen::Index inner = 1;
    for (int l = j + 1; l <= static_cast<int>(planes_.size()); ++l) inner *= static_cast<Eigen::Index>(planes_[l - 1].digits.size());
    const Eigen::Index outer = X.rows() / (M * inner);
    if (inner == 1) {
      Eigen::Map<Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> V(X.data(), outer, M);
      Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> T = V * A.transpose();
      V = T;
      return;
    }
    for (Eigen::Index o = 0; o < outer; ++o) {
      // row-major (M x inner) block == column-major (inner x M)
      Eigen::Map<Mat> B(X.data() + o * M * inner, inner, M);
      Mat T = B * A.transpose();
      B = T;
    }
  }

  void divide(Mat& X, const MultiIndex& H) const {
    const int n = static_cast<int>(planes_.size());
    std::vector<const Eigen::VectorXd*> lam(n);
    for (int j = 1; j <= n; ++j) lam[j - 1] = H.contains(j) ? &planes_[j - 1].lam_in : &planes_[j - 1].lam_out;
    std::vector<Eigen::Index> it(n, 0);
    const double floor = cutoff_ * pl_max_;
    for (Eigen::Index k = 0; k < X.rows(); ++k) {
      double s = 0;
      for (int j = 0; j < n; ++j) s += (*lam[j])(it[j]);
      X(k, 0) = s > floor ? X(k, 0) / s : cplx{};
      int j = n - 1;
      while (j >= 0 && ++it[j] == lam[j]->size()) it[j--] = 0;
    }
  }

  const OperatorBundle* bundle_;
  double cutoff_;
  double pl_max_ = 0;
  std::vector<Plane> planes_;
};

}  // namespace dbarx

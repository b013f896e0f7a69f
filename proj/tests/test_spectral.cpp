#include <gtest/gtest.h>

#include <random>

#include "dbarx/spectral.hpp"

using namespace dbarx;

namespace {
DomainSpec polydisc(int n) {
  DomainSpec s;
  s.n = n;
  s.polyradii.assign(n, 1.0);
  return s;
}

FormField random_masked(const Grid& g, int q, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  FormField u(g.n(), q, g.size());
  for (const auto& K : all_multiindices(g.n(), q)) {
    auto& v = u.at(K);
    for (std::size_t k = 0; k < g.size(); ++k)
      if (g.mask()[k]) v[k] = cplx(nd(rng), nd(rng));
  }
  return u;
}
}  // namespace

// Delta H x = x for x in the range of Delta, i.e. H inverts the Laplacian there.
TEST(HodgePseudoInverse, InvertsOnRange) {
  for (auto [n, N] : {std::pair{2, 17}, std::pair{3, 9}}) {
    const Grid g = build_grid(polydisc(n), N);
    OperatorBundle b(g);
    HodgePseudoInverse H(b);
    std::mt19937_64 rng(n * 100 + N);
    for (int q = 0; q <= n; ++q) {
      const FormField x = b.laplacian(random_masked(g, q, rng));
      const FormField y = b.laplacian(H.apply(x));
      EXPECT_LE(b.norm(field_axpy(-1.0, x, y)), 1e-9 * b.norm(x)) << "n=" << n << " q=" << q;
    }
  }
}

TEST(HodgePseudoInverse, SelfAdjointAndNonnegative) {
  const Grid g = build_grid(polydisc(2), 17);
  OperatorBundle b(g);
  HodgePseudoInverse H(b);
  std::mt19937_64 rng(3);
  for (int q = 0; q <= 2; ++q) {
    const FormField x = random_masked(g, q, rng), y = random_masked(g, q, rng);
    const FormField Hx = H.apply(x), Hy = H.apply(y);
    EXPECT_LE(std::abs(b.inner(Hx, y) - b.inner(x, Hy)), 1e-10 * b.norm(Hx) * b.norm(y));
    EXPECT_GE(b.inner(Hx, x).real(), -1e-12 * b.norm(Hx) * b.norm(x));
  }
}

TEST(HodgePseudoInverse, ZeroOffTheMask) {
  const Grid g = build_grid(polydisc(2), 9);
  OperatorBundle b(g);
  HodgePseudoInverse H(b);
  std::mt19937_64 rng(1);
  const FormField y = H.apply(random_masked(g, 1, rng));
  for (const auto& [K, v] : y.stored())
    for (std::size_t k = 0; k < g.size(); ++k)
      if (!g.mask()[k]) { ASSERT_EQ(v[k], cplx{}); }
}

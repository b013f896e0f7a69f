#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "dbarx/form_algebra.hpp"
#include "dbarx/grid.hpp"

using namespace dbarx;

TEST(InsertIndex, Examples) {
  auto a = insert_index(1, MultiIndex{2});
  EXPECT_EQ(a.sign, 1);
  EXPECT_EQ(a.index, (MultiIndex{1, 2}));
  auto b = insert_index(2, MultiIndex{1, 3});
  EXPECT_EQ(b.sign, -1);
  EXPECT_EQ(b.index, (MultiIndex{1, 2, 3}));
  auto c = insert_index(3, MultiIndex{1, 2});
  EXPECT_EQ(c.sign, 1);
  EXPECT_EQ(c.index, (MultiIndex{1, 2, 3}));
}

TEST(InsertIndex, DuplicateThrows) { EXPECT_THROW(insert_index(2, MultiIndex{1, 2}), std::invalid_argument); }

TEST(RemoveIndex, Examples) {
  auto a = remove_index(1, MultiIndex{1, 2});
  EXPECT_EQ(a.sign, 1);
  EXPECT_EQ(a.index, MultiIndex{2});
  auto b = remove_index(2, MultiIndex{1, 2, 3});
  EXPECT_EQ(b.sign, -1);
  EXPECT_EQ(b.index, (MultiIndex{1, 3}));
  auto c = remove_index(3, MultiIndex{3});
  EXPECT_EQ(c.sign, 1);
  EXPECT_EQ(c.index, MultiIndex{});
}

TEST(RemoveIndex, MissingThrows) { EXPECT_THROW(remove_index(3, MultiIndex{1, 2}), std::invalid_argument); }

TEST(MultiIndexTest, RejectsUnsorted) {
  EXPECT_THROW(MultiIndex({2, 1}), std::invalid_argument);
  EXPECT_THROW(MultiIndex({1, 1}), std::invalid_argument);
}

TEST(MultiIndexTest, InsertRemoveInverseAllCases) {
  for (int n = 1; n <= 5; ++n)
    for (int q = 0; q < n; ++q)
      for (const auto& K : all_multiindices(n, q))
        for (int i = 1; i <= n; ++i) {
          if (K.contains(i)) continue;
          auto [s, H] = insert_index(i, K);
          auto [s2, K2] = remove_index(i, H);
          EXPECT_EQ(K2, K);
          EXPECT_EQ(s, s2);
          // sign counts indices of K below i
          int below = 0;
          for (int k : K) below += k < i;
          EXPECT_EQ(s, below % 2 ? -1 : 1);
        }
}

TEST(MultiIndexTest, FamilySizesAreBinomial) {
  auto binom = [](int n, int k) {
    long r = 1;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
  };
  for (int n = 1; n <= 6; ++n)
    for (int q = 0; q <= n; ++q) {
      EXPECT_EQ(static_cast<long>(all_multiindices(n, q).size()), binom(n, q));
      EXPECT_EQ(static_cast<long>(tangential_multiindices(n, q).size()), binom(n - 1, q));
    }
}

namespace {
FormField random_field(int n, int q, std::size_t nodes, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  FormField f(n, q, nodes);
  for (const auto& K : all_multiindices(n, q)) {
    auto& v = f.at(K);
    for (auto& z : v) z = cplx(nd(rng), nd(rng));
  }
  return f;
}
bool same(const FormField& a, const FormField& b) {
  for (const auto& K : all_multiindices(a.dim(), a.degree())) {
    auto x = a.get(K), y = b.get(K);
    for (std::size_t k = 0; k < x.size(); ++k)
      if (x[k] != y[k]) return false;
  }
  return true;
}
}  // namespace

TEST(FieldAxpy, Examples) {
  std::mt19937_64 rng(7);
  const FormField x = random_field(2, 1, 50, rng), y = random_field(2, 1, 50, rng);
  EXPECT_TRUE(same(field_axpy(0.0, x, y), y));
  EXPECT_TRUE(same(field_axpy(1.0, x, FormField(2, 1, 50)), x));
  const FormField z = field_axpy(-1.0, x, x);
  EXPECT_EQ(max_abs(z), 0.0);
}

TEST(FieldAxpy, MismatchThrows) {
  EXPECT_THROW(field_axpy(1.0, FormField(2, 1, 5), FormField(2, 0, 5)), std::invalid_argument);
  EXPECT_THROW(field_axpy(1.0, FormField(2, 1, 5), FormField(2, 1, 6)), std::invalid_argument);
}

TEST(FieldAxpy, MatchesReferenceArithmetic) {
  std::mt19937_64 rng(3);
  const FormField x = random_field(3, 2, 40, rng), y = random_field(3, 2, 40, rng);
  const cplx a(0.3, -1.7);
  const FormField r = field_axpy(a, x, y);
  for (const auto& K : all_multiindices(3, 2))
    for (std::size_t k = 0; k < 40; ++k) EXPECT_NEAR(std::abs(r.get(K)[k] - (a * x.get(K)[k] + y.get(K)[k])), 0, 1e-14);
}

TEST(L2Inner, DiscAreaOnOnePlane) {
  // unit-disc factor: constant 1 against cut-cell weights integrates to pi
  for (int N : {33, 65}) {
    const PlaneGrid pg = PlaneGrid::build(N, 1.0);
    FormField x(1, 0, pg.size());
    auto& v = x.at(MultiIndex{});
    for (int p = 0; p < pg.size(); ++p) v[p] = pg.mask[p] ? 1.0 : 0.0;
    EXPECT_NEAR(l2_inner(x, x, pg.weight).real(), std::numbers::pi, 1e-9);
  }
}

TEST(L2Inner, DifferentComponentsAreOrthogonal) {
  FormField x(2, 1, 10), y(2, 1, 10);
  std::vector<double> w(10, 1.0);
  for (auto& z : x.at(MultiIndex{1})) z = 1.0;
  for (auto& z : y.at(MultiIndex{2})) z = 1.0;
  EXPECT_EQ(l2_inner(x, y, w), cplx{});
}

TEST(L2Inner, ConjugateLinearInSecondSlotAndHermitian) {
  std::mt19937_64 rng(11);
  const FormField x = random_field(2, 1, 30, rng), y = random_field(2, 1, 30, rng);
  std::vector<double> w(30);
  for (std::size_t k = 0; k < w.size(); ++k) w[k] = 0.5 + 0.01 * k;
  const cplx a(2.0, 0.5);
  EXPECT_NEAR(std::abs(l2_inner(x, y, w) - std::conj(l2_inner(y, x, w))), 0, 1e-12);
  EXPECT_NEAR(std::abs(l2_inner(field_scale(a, x), y, w) - a * l2_inner(x, y, w)), 0, 1e-12);
  EXPECT_NEAR(std::abs(l2_inner(x, field_scale(a, y), w) - std::conj(a) * l2_inner(x, y, w)), 0, 1e-12);
  EXPECT_NEAR(l2_norm(x, w) * l2_norm(x, w), l2_inner(x, x, w).real(), 1e-10);
}

TEST(L2Inner, MismatchedShapesThrow) {
  std::vector<double> w(5, 1.0);
  EXPECT_THROW(l2_inner(FormField(2, 1, 5), FormField(2, 1, 4), w), std::invalid_argument);
  EXPECT_THROW(l2_inner(FormField(2, 1, 6), FormField(2, 1, 6), w), std::invalid_argument);
}

TEST(FormFieldTest, KeyValidation) {
  FormField f(2, 1, 4);
  EXPECT_THROW(f.at(MultiIndex{1, 2}), std::invalid_argument);
  EXPECT_THROW(f.at(MultiIndex{3}), std::invalid_argument);
  EXPECT_THROW(FormField(2, 3, 4), std::invalid_argument);
  EXPECT_EQ(f.get(MultiIndex{2}).size(), 4u);
  EXPECT_FALSE(f.has(MultiIndex{2}));
}

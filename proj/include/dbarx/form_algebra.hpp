#pragma once

// Multiindex bookkeeping and component storage for (0,q)-forms on a grid.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <initializer_list>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dbarx {

using cplx = std::complex<double>;
using CArray = std::vector<cplx>;
using RArray = std::vector<double>;

namespace detail {
// Plain complex product. The std::complex operator takes a slow NaN-recovery branch
// unless the build uses -fcx-limited-range.
inline cplx mul(cplx a, cplx b) {
  return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()};
}
// a * conj(b)
inline cplx mul_conj(cplx a, cplx b) {
  return {a.real() * b.real() + a.imag() * b.imag(), a.imag() * b.real() - a.real() * b.imag()};
}
}  // namespace detail

/// Strictly increasing tuple of 1-based coordinate indices.
class MultiIndex {
public:
  MultiIndex() = default;
  MultiIndex(std::initializer_list<int> idx) : idx_(idx) { validate(); }
  explicit MultiIndex(std::vector<int> idx) : idx_(std::move(idx)) { validate(); }

  int degree() const { return static_cast<int>(idx_.size()); }
  const std::vector<int>& indices() const { return idx_; }
  bool contains(int i) const { return std::binary_search(idx_.begin(), idx_.end(), i); }
  int operator[](std::size_t k) const { return idx_[k]; }
  auto begin() const { return idx_.begin(); }
  auto end() const { return idx_.end(); }

  /// True iff every index lies in 1..n.
  bool fits(int n) const { return idx_.empty() || (idx_.front() >= 1 && idx_.back() <= n); }

  std::string str() const {
    std::string s = "(";
    for (std::size_t k = 0; k < idx_.size(); ++k) {
      if (k) s += ",";
      s += std::to_string(idx_[k]);
    }
    return s + ")";
  }

  friend auto operator<=>(const MultiIndex&, const MultiIndex&) = default;

private:
  void validate() const {
    for (std::size_t k = 1; k < idx_.size(); ++k)
      if (idx_[k] <= idx_[k - 1])
        throw std::invalid_argument("MultiIndex: indices must be strictly increasing");
  }
  std::vector<int> idx_;
};

struct SignedIndex {
  int sign;
  MultiIndex index;
};

/// Insert i into K at its sorted position p; sign is (-1)^p.
inline SignedIndex insert_index(int i, const MultiIndex& K) {
  if (K.contains(i))
    throw std::invalid_argument("insert_index: duplicate index " + std::to_string(i) + " in " + K.str());
  std::vector<int> v = K.indices();
  auto it = std::lower_bound(v.begin(), v.end(), i);
  const auto pos = it - v.begin();
  v.insert(it, i);
  return {pos % 2 == 0 ? 1 : -1, MultiIndex(std::move(v))};
}

/// Inverse of insert_index: insert_index(i, K) == (sign, H).
inline SignedIndex remove_index(int i, const MultiIndex& H) {
  std::vector<int> v = H.indices();
  auto it = std::lower_bound(v.begin(), v.end(), i);
  if (it == v.end() || *it != i)
    throw std::invalid_argument("remove_index: index " + std::to_string(i) + " missing from " + H.str());
  const auto pos = it - v.begin();
  v.erase(it);
  return {pos % 2 == 0 ? 1 : -1, MultiIndex(std::move(v))};
}

/// All strictly increasing multiindices of length q over 1..n, lexicographic.
inline std::vector<MultiIndex> all_multiindices(int n, int q) {
  std::vector<MultiIndex> out;
  if (q < 0 || q > n) return out;
  std::vector<int> cur(q);
  for (int k = 0; k < q; ++k) cur[k] = k + 1;
  while (true) {
    out.emplace_back(cur);
    int k = q - 1;
    while (k >= 0 && cur[k] == n - q + k + 1) --k;
    if (k < 0) break;
    ++cur[k];
    for (int m = k + 1; m < q; ++m) cur[m] = cur[m - 1] + 1;
  }
  return out;
}

/// Multiindices of length q over 2..n (the slice-tangential family).
inline std::vector<MultiIndex> tangential_multiindices(int n, int q) {
  std::vector<MultiIndex> out;
  for (auto& K : all_multiindices(n, q))
    if (!K.contains(1)) out.push_back(K);
  return out;
}

/// A (0,q)-form: component arrays keyed by multiindex. Absent keys read as zero.
class FormField {
public:
  FormField() = default;
  FormField(int n, int q, std::size_t nodes) : n_(n), q_(q), nodes_(nodes) {
    if (q < 0 || q > n) throw std::invalid_argument("FormField: degree out of range");
  }

  int dim() const { return n_; }
  int degree() const { return q_; }
  std::size_t nodes() const { return nodes_; }

  bool has(const MultiIndex& K) const { return comps_.count(K) != 0; }

  /// Read access; absent components come back as an all-zero span.
  std::span<const cplx> get(const MultiIndex& K) const {
    check_key(K);
    auto it = comps_.find(K);
    if (it == comps_.end()) {
      if (zeros_.size() != nodes_) zeros_.assign(nodes_, cplx{});
      return zeros_;
    }
    return it->second;
  }

  /// Write access; materializes the component as zeros if absent.
  CArray& at(const MultiIndex& K) {
    check_key(K);
    auto [it, inserted] = comps_.try_emplace(K);
    if (inserted) it->second.assign(nodes_, cplx{});
    return it->second;
  }

  void set(const MultiIndex& K, CArray values) {
    check_key(K);
    if (values.size() != nodes_) throw std::invalid_argument("FormField::set: shape mismatch");
    comps_[K] = std::move(values);
  }

  void erase(const MultiIndex& K) { comps_.erase(K); }

  const std::map<MultiIndex, CArray>& stored() const { return comps_; }

  bool compatible(const FormField& o) const {
    return n_ == o.n_ && q_ == o.q_ && nodes_ == o.nodes_;
  }

private:
  void check_key(const MultiIndex& K) const {
    if (K.degree() != q_ || !K.fits(n_))
      throw std::invalid_argument("FormField: key " + K.str() + " invalid for degree " + std::to_string(q_));
  }

  int n_ = 0;
  int q_ = 0;
  std::size_t nodes_ = 0;
  std::map<MultiIndex, CArray> comps_;
  mutable CArray zeros_;
};

/// u = h / z_1 + g, split into its 1/z_1 coefficient (on the slice grid) and bounded part.
struct SingularDecomposition {
  FormField h;
  FormField g;
};

/// a*x + y, componentwise.
inline FormField field_axpy(cplx a, const FormField& x, const FormField& y) {
  if (!x.compatible(y)) throw std::invalid_argument("field_axpy: degree or grid mismatch");
  FormField out = y;
  if (a == cplx{}) return out;
  for (const auto& [K, xs] : x.stored()) {
    auto& o = out.at(K);
    for (std::size_t k = 0; k < xs.size(); ++k) o[k] += detail::mul(a, xs[k]);
  }
  return out;
}

inline FormField field_scale(cplx a, const FormField& x) {
  FormField out = x;
  for (const auto& [K, xs] : x.stored()) {
    auto& o = out.at(K);
    for (auto& v : o) v = detail::mul(v, a);
  }
  return out;
}

/// Pointwise product with a scalar array.
inline FormField field_multiply(std::span<const cplx> s, const FormField& x) {
  if (s.size() != x.nodes()) throw std::invalid_argument("field_multiply: shape mismatch");
  FormField out = x;
  for (const auto& [K, xs] : x.stored()) {
    auto& o = out.at(K);
    for (std::size_t k = 0; k < o.size(); ++k) o[k] = detail::mul(o[k], s[k]);
  }
  return out;
}

namespace detail {

// Fixed-order blocked summation: result is independent of thread count.
template <class T, class F>
T blocked_sum(std::size_t count, F&& term) {
  constexpr std::size_t block = 4096;
  std::vector<T> partial((count + block - 1) / block, T{});
  for (std::size_t b = 0; b < partial.size(); ++b) {
    T acc{};
    const std::size_t hi = std::min(count, (b + 1) * block);
    for (std::size_t k = b * block; k < hi; ++k) acc += term(k);
    partial[b] = acc;
  }
  // pairwise reduction over blocks
  for (std::size_t width = 1; width < partial.size(); width *= 2)
    for (std::size_t k = 0; k + width < partial.size(); k += 2 * width) partial[k] += partial[k + width];
  return partial.empty() ? T{} : partial[0];
}

}  // namespace detail

/// sum_J sum_nodes x_J conj(y_J) * weight * volume. Conjugate-linear in y.
inline cplx l2_inner(const FormField& x, const FormField& y, std::span<const double> volume,
                     std::span<const double> weight = {}) {
  if (!x.compatible(y)) throw std::invalid_argument("l2_inner: degree or grid mismatch");
  if (volume.size() != x.nodes() || (!weight.empty() && weight.size() != x.nodes()))
    throw std::invalid_argument("l2_inner: weight shape mismatch");
  cplx total{};
  for (const auto& [K, xs] : x.stored()) {
    if (!y.has(K)) continue;
    auto ys = y.get(K);
    if (weight.empty())
      total += detail::blocked_sum<cplx>(xs.size(), [&](std::size_t k) { return detail::mul_conj(xs[k], ys[k]) * volume[k]; });
    else
      total += detail::blocked_sum<cplx>(
          xs.size(), [&](std::size_t k) { return detail::mul_conj(xs[k], ys[k]) * (weight[k] * volume[k]); });
  }
  return total;
}

inline double l2_norm(const FormField& x, std::span<const double> volume, std::span<const double> weight = {}) {
  return std::sqrt(std::max(0.0, l2_inner(x, x, volume, weight).real()));
}

inline double max_abs(const FormField& x) {
  double m = 0;
  for (const auto& [K, xs] : x.stored())
    for (auto v : xs) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace dbarx

#pragma once

// Binary field snapshots. All integers and doubles are little-endian.
//
//   offset  type        content
//   0       char[8]     "DBXSNAP1"
//   8       u32         n (complex dimension)
//   12      u32         q (form degree)
//   16      u32         resolution (nodes per real axis)
//   20      u32         component count C
//   24      u64         node count M (resolution^(2n))
//   32      f64[n]      effective polyradii
//   ...     then C blocks:
//           u32[q]      multiindex (1-based, increasing)
//           f64[2M]     (re, im) pairs in node order
//
// Node order: linear index sum_j p_j P^(n-j), P = resolution^2, p_j = a*resolution + b for
// the x_j index a and y_j index b; z_1 is the slowest digit.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dbarx/form_algebra.hpp"
#include "dbarx/grid.hpp"

namespace dbarx {

struct Snapshot {
  int n = 0, q = 0, resolution = 0;
  std::vector<double> radii;
  FormField field;
};

class SnapshotError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline constexpr char snapshot_magic[8] = {'D', 'B', 'X', 'S', 'N', 'A', 'P', '1'};

template <class T>
void put_le(std::ostream& out, T v) {
  unsigned char buf[sizeof(T)];
  std::uint64_t bits = 0;
  if constexpr (sizeof(T) == 8) bits = std::bit_cast<std::uint64_t>(v);
  else bits = std::bit_cast<std::uint32_t>(v);
  for (std::size_t k = 0; k < sizeof(T); ++k) buf[k] = static_cast<unsigned char>(bits >> (8 * k));
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <class T>
T get_le(std::istream& in) {
  unsigned char buf[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(T))) throw SnapshotError("snapshot: truncated file");
  std::uint64_t bits = 0;
  for (std::size_t k = 0; k < sizeof(T); ++k) bits |= std::uint64_t(buf[k]) << (8 * k);
  if constexpr (sizeof(T) == 8) return std::bit_cast<T>(bits);
  else return std::bit_cast<T>(static_cast<std::uint32_t>(bits));
}

}  // namespace detail

inline void write_snapshot(const std::string& path, const Grid& g, const FormField& f) {
  if (f.nodes() != g.size()) throw std::invalid_argument("write_snapshot: grid mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SnapshotError("snapshot: cannot write " + path);
  out.write(detail::snapshot_magic, 8);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(g.n()));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(f.degree()));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(g.resolution()));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(f.stored().size()));
  detail::put_le<std::uint64_t>(out, static_cast<std::uint64_t>(g.size()));
  for (int j = 1; j <= g.n(); ++j) detail::put_le<double>(out, g.plane(j).R);
  for (const auto& [K, v] : f.stored()) {
    for (int i : K) detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(i));
    for (const cplx& z : v) {
      detail::put_le<double>(out, z.real());
      detail::put_le<double>(out, z.imag());
    }
  }
  if (!out) throw SnapshotError("snapshot: write failed for " + path);
}

inline Snapshot read_snapshot(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SnapshotError("snapshot: cannot open " + path);
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, detail::snapshot_magic, 8) != 0)
    throw SnapshotError("snapshot: bad magic in " + path);
  Snapshot s;
  s.n = static_cast<int>(detail::get_le<std::uint32_t>(in));
  s.q = static_cast<int>(detail::get_le<std::uint32_t>(in));
  s.resolution = static_cast<int>(detail::get_le<std::uint32_t>(in));
  const auto comps = detail::get_le<std::uint32_t>(in);
  const auto nodes = detail::get_le<std::uint64_t>(in);
  if (s.n < 1 || s.n > 8 || s.q < 0 || s.q > s.n) throw SnapshotError("snapshot: bad header");
  double expect = std::pow(static_cast<double>(s.resolution), 2 * s.n);
  if (static_cast<double>(nodes) != expect) throw SnapshotError("snapshot: node count does not match resolution");
  for (int j = 0; j < s.n; ++j) s.radii.push_back(detail::get_le<double>(in));
  s.field = FormField(s.n, s.q, nodes);
  for (std::uint32_t c = 0; c < comps; ++c) {
    std::vector<int> idx;
    for (int k = 0; k < s.q; ++k) idx.push_back(static_cast<int>(detail::get_le<std::uint32_t>(in)));
    MultiIndex K;
    try {
      K = MultiIndex(idx);
    } catch (const std::invalid_argument&) {
      throw SnapshotError("snapshot: malformed multiindex");
    }
    if (!K.fits(s.n)) throw SnapshotError("snapshot: multiindex out of range");
    CArray v(nodes);
    for (auto& z : v) {
      const double re = detail::get_le<double>(in);
      const double im = detail::get_le<double>(in);
      z = cplx(re, im);
    }
    s.field.set(K, std::move(v));
  }
  return s;
}

}  // namespace dbarx

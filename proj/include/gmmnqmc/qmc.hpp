#pragma once

// Sobol' digital net in base 2, its randomizations (nested uniform
// scrambling, digital shift) and star-discrepancy diagnostics.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "gmmnqmc/direction_numbers.hpp"
#include "gmmnqmc/dist.hpp"
#include "gmmnqmc/error.hpp"
#include "gmmnqmc/matrix.hpp"

namespace gmmnqmc::qmc {

inline constexpr int kBits = 32;

enum class Randomization { raw, scrambled, digital_shift };

inline std::string to_string(Randomization r) {
  switch (r) {
    case Randomization::raw: return "raw";
    case Randomization::scrambled: return "scrambled";
    case Randomization::digital_shift: return "digital_shift";
  }
  return "?";
}

inline Randomization randomization_from_string(const std::string& s) {
  if (s == "raw") return Randomization::raw;
  if (s == "scrambled" || s == "owen") return Randomization::scrambled;
  if (s == "digital_shift" || s == "digital-shift" || s == "shift") {
    return Randomization::digital_shift;
  }
  throw ValidationError("unknown randomization '" + s + "'");
}

/// n x p points in [0,1)^p plus what produced them.
struct PointSet {
  Matrix points;
  Randomization randomization = Randomization::raw;
  std::uint64_t seed = 0;
  std::uint64_t index_offset = 0;

  Eigen::Index size() const { return points.rows(); }
  Eigen::Index dimension() const { return points.cols(); }
};

/// Parses a direction-number file in the Joe-Kuo layout: a header line, then
/// one line per dimension "d s a m_1 ... m_s" starting at d = 2.
inline std::vector<DirectionEntry> read_direction_numbers(std::istream& in) {
  std::vector<DirectionEntry> table;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    std::istringstream row(line);
    DirectionEntry e{};
    if (!(row >> e.dimension >> e.degree >> e.coefficients)) continue;
    if (e.degree < 1 || e.degree > static_cast<int>(e.initial.size())) {
      throw UnsupportedError("direction numbers: degree " + std::to_string(e.degree) +
                             " exceeds supported maximum");
    }
    for (int i = 0; i < e.degree; ++i) {
      if (!(row >> e.initial[static_cast<std::size_t>(i)])) {
        throw SchemaError("direction numbers: truncated line for dimension " +
                          std::to_string(e.dimension));
      }
    }
    table.push_back(e);
  }
  return table;
}

inline std::vector<DirectionEntry> read_direction_numbers(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw RuntimeFailure("cannot open direction-number file " + path);
  return read_direction_numbers(in);
}

/// Sobol' generator matrices for p dimensions, 32 digits each.
class DigitalNet {
 public:
  explicit DigitalNet(int dimension)
      : DigitalNet(dimension, std::vector<DirectionEntry>(kJoeKuoTable.begin(), kJoeKuoTable.end())) {}

  DigitalNet(int dimension, const std::vector<DirectionEntry>& table) : dimension_(dimension) {
    if (dimension < 1) throw ValidationError("DigitalNet: dimension must be >= 1");
    if (static_cast<std::size_t>(dimension) > table.size() + 1) {
      throw UnsupportedError("DigitalNet: dimension " + std::to_string(dimension) +
                             " exceeds the direction-number table (max " +
                             std::to_string(table.size() + 1) + ")");
    }
    directions_.resize(static_cast<std::size_t>(dimension));
    for (int k = 0; k < kBits; ++k) directions_[0][k] = 1u << (kBits - 1 - k);
    for (int j = 1; j < dimension; ++j) {
      const DirectionEntry& e = table[static_cast<std::size_t>(j - 1)];
      const int s = e.degree;
      auto& v = directions_[static_cast<std::size_t>(j)];
      for (int k = 0; k < std::min(s, kBits); ++k) {
        v[k] = e.initial[static_cast<std::size_t>(k)] << (kBits - 1 - k);
      }
      for (int k = s; k < kBits; ++k) {
        v[k] = v[k - s] ^ (v[k - s] >> s);
        for (int i = 1; i < s; ++i) {
          if ((e.coefficients >> (s - 1 - i)) & 1u) v[k] ^= v[k - i];
        }
      }
    }
  }

  int dimension() const { return dimension_; }

  const std::array<std::uint32_t, kBits>& directions(int j) const {
    return directions_[static_cast<std::size_t>(j)];
  }

  /// Raw 32-bit digit words of points offset .. offset+n-1, row-major n x p.
  std::vector<std::uint32_t> digits(std::size_t n, std::uint64_t offset = 0) const {
    if (offset + n > (std::uint64_t{1} << kBits)) {
      throw ValidationError("DigitalNet: index range exceeds 2^32 points");
    }
    const auto p = static_cast<std::size_t>(dimension_);
    std::vector<std::uint32_t> out(n * p);
    if (n == 0) return out;
    std::vector<std::uint32_t> x(p, 0);
    const std::uint64_t gray = offset ^ (offset >> 1);
    for (std::size_t j = 0; j < p; ++j) {
      for (int k = 0; k < kBits; ++k) {
        if ((gray >> k) & 1u) x[j] ^= directions_[j][k];
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (i > 0) {
        const int c = std::countr_zero(offset + i);
        for (std::size_t j = 0; j < p; ++j) x[j] ^= directions_[j][c];
      }
      std::copy(x.begin(), x.end(), out.begin() + static_cast<std::ptrdiff_t>(i * p));
    }
    return out;
  }

 private:
  int dimension_;
  std::vector<std::array<std::uint32_t, kBits>> directions_;
};

namespace detail {

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Key for one node of the binary digit tree of coordinate `dim`.
inline std::uint64_t node_hash(std::uint64_t seed, std::uint32_t dim, std::uint32_t depth,
                               std::uint64_t prefix) {
  const std::uint64_t h = mix64(seed + 0x9e3779b97f4a7c15ull);
  return mix64(mix64(h ^ ((static_cast<std::uint64_t>(dim) << 32) | depth)) ^ prefix);
}

inline double to_unit(std::uint64_t word) {
  return static_cast<double>(word >> 11) * 0x1.0p-53;
}

}  // namespace detail

inline PointSet sobol_raw(const DigitalNet& net, std::size_t n, std::uint64_t index_offset = 0) {
  if (n < 1) throw ValidationError("sobol_raw: n must be >= 1");
  const auto p = static_cast<std::size_t>(net.dimension());
  const auto words = net.digits(n, index_offset);
  PointSet ps;
  ps.points.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      ps.points(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          static_cast<double>(words[i * p + j]) * 0x1.0p-32;
    }
  }
  ps.randomization = Randomization::raw;
  ps.index_offset = index_offset;
  return ps;
}

inline PointSet sobol_raw(int p, std::size_t n, std::uint64_t index_offset = 0) {
  return sobol_raw(DigitalNet(p), n, index_offset);
}

/// Nested uniform (Owen) scrambling of the first 32 digits. The flip applied to
/// digit k depends on the k preceding original digits through a keyed hash, so
/// no permutation tree is stored. Digits beyond 32 are filled uniformly from a
/// hash of the full digit path.
inline std::uint64_t owen_scramble_word(std::uint32_t x, std::uint64_t seed, std::uint32_t dim) {
  std::uint32_t out = 0;
  for (int k = 0; k < kBits; ++k) {
    const std::uint64_t prefix = k == 0 ? 0 : (x >> (kBits - k));
    const std::uint32_t flip =
        static_cast<std::uint32_t>(detail::node_hash(seed, dim, static_cast<std::uint32_t>(k), prefix) & 1u);
    const std::uint32_t bit = (x >> (kBits - 1 - k)) & 1u;
    out |= (bit ^ flip) << (kBits - 1 - k);
  }
  const std::uint64_t tail = detail::node_hash(seed, dim, kBits, x);
  return (static_cast<std::uint64_t>(out) << 32) | (tail >> 32);
}

inline PointSet owen_scramble(const DigitalNet& net, std::size_t n, std::uint64_t seed,
                              std::uint64_t index_offset = 0) {
  if (n < 1) throw ValidationError("owen_scramble: n must be >= 1");
  const auto p = static_cast<std::size_t>(net.dimension());
  const auto words = net.digits(n, index_offset);
  PointSet ps;
  ps.points.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      ps.points(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = detail::to_unit(
          owen_scramble_word(words[i * p + j], seed, static_cast<std::uint32_t>(j)));
    }
  }
  ps.randomization = Randomization::scrambled;
  ps.seed = seed;
  ps.index_offset = index_offset;
  return ps;
}

/// Digital shift by explicit per-dimension words. The upper 32 bits are XORed
/// onto the net's digits; the lower bits supply the digits the net leaves at 0.
/// All-zero words reproduce the raw points.
inline PointSet digital_shift_words(const DigitalNet& net, std::size_t n,
                                    const std::vector<std::uint64_t>& words,
                                    std::uint64_t index_offset = 0) {
  if (n < 1) throw ValidationError("digital_shift: n must be >= 1");
  const auto p = static_cast<std::size_t>(net.dimension());
  if (words.size() != p) throw ValidationError("digital_shift: need one shift word per dimension");
  const auto raw = net.digits(n, index_offset);
  PointSet ps;
  ps.points.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      const std::uint64_t x = static_cast<std::uint64_t>(raw[i * p + j]) << 32;
      ps.points(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          detail::to_unit(x ^ words[j]);
    }
  }
  ps.randomization = Randomization::digital_shift;
  ps.index_offset = index_offset;
  return ps;
}

inline std::vector<std::uint64_t> shift_words(int p, std::uint64_t seed) {
  dist::RngStream stream(seed, 0x5348494654ull);  // "SHIFT"
  std::vector<std::uint64_t> words(static_cast<std::size_t>(p));
  for (auto& w : words) w = stream.next_u64();
  return words;
}

inline PointSet digital_shift(const DigitalNet& net, std::size_t n, std::uint64_t seed,
                              std::uint64_t index_offset = 0) {
  PointSet ps = digital_shift_words(net, n, shift_words(net.dimension(), seed), index_offset);
  ps.seed = seed;
  return ps;
}

/// Randomized (or raw) Sobol' point set of n points in p dimensions.
inline PointSet sobol(int p, std::size_t n, Randomization r, std::uint64_t seed,
                      std::uint64_t index_offset = 0) {
  const DigitalNet net(p);
  switch (r) {
    case Randomization::raw: return sobol_raw(net, n, index_offset);
    case Randomization::scrambled: return owen_scramble(net, n, seed, index_offset);
    case Randomization::digital_shift: return digital_shift(net, n, seed, index_offset);
  }
  throw ValidationError("unknown randomization");
}

struct Discrepancy {
  double value;
  bool exact;
  int refinement_level;  // grid cells per axis = 2^level when !exact
};

namespace detail {

inline double star_discrepancy_1d(std::vector<double> x) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lo = static_cast<double>(i) / n;
    const double hi = static_cast<double>(i + 1) / n;
    d = std::max({d, std::abs(x[i] - lo), std::abs(x[i] - hi)});
  }
  return d;
}

// Exact 2-d star discrepancy over the critical grid of point coordinates.
inline double star_discrepancy_2d(const Matrix& pts) {
  const auto n = static_cast<std::size_t>(pts.rows());
  std::vector<double> gx(n), gy(n);
  for (std::size_t i = 0; i < n; ++i) {
    gx[i] = pts(static_cast<Eigen::Index>(i), 0);
    gy[i] = pts(static_cast<Eigen::Index>(i), 1);
  }
  std::vector<std::size_t> by_y(n);
  std::iota(by_y.begin(), by_y.end(), 0);
  std::sort(by_y.begin(), by_y.end(), [&](std::size_t a, std::size_t b) { return gy[a] < gy[b]; });
  auto grid = [](std::vector<double> v) {
    v.push_back(1.0);
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
  };
  const auto xs = grid(gx);
  const auto ys = grid(gy);
  const double nn = static_cast<double>(n);
  double d = 0.0;
  for (const double b1 : xs) {
    std::size_t open = 0, closed = 0;
    std::size_t po = 0, pc = 0;  // pointers into by_y
    for (const double b2 : ys) {
      while (po < n && gy[by_y[po]] < b2) {
        if (gx[by_y[po]] < b1) ++open;
        ++po;
      }
      while (pc < n && gy[by_y[pc]] <= b2) {
        if (gx[by_y[pc]] <= b1) ++closed;
        ++pc;
      }
      const double vol = b1 * b2;
      d = std::max({d, vol - static_cast<double>(open) / nn, static_cast<double>(closed) / nn - vol});
    }
  }
  return d;
}

// Upper bound from a uniform refinement grid with 2^level cells per axis.
inline double star_discrepancy_grid_bound(const Matrix& pts, int level) {
  const auto p = static_cast<std::size_t>(pts.cols());
  const std::size_t k = std::size_t{1} << level;
  const std::size_t side = k + 1;
  std::size_t total = 1;
  for (std::size_t j = 0; j < p; ++j) total *= side;
  std::vector<double> cum(total, 0.0);
  // cum[g] = #points with x_j < g_j / k for all j
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    std::size_t idx = 0, stride = 1;
    for (std::size_t j = 0; j < p; ++j) {
      const auto c = std::min(k - 1, static_cast<std::size_t>(pts(i, static_cast<Eigen::Index>(j)) * static_cast<double>(k)));
      idx += (c + 1) * stride;
      stride *= side;
    }
    cum[idx] += 1.0;
  }
  std::size_t stride = 1;
  for (std::size_t j = 0; j < p; ++j) {
    for (std::size_t idx = 0; idx < total; ++idx) {
      if ((idx / stride) % side != 0) cum[idx] += cum[idx - stride];
    }
    stride *= side;
  }
  const double n = static_cast<double>(pts.rows());
  double bound = 0.0;
  std::vector<std::size_t> g(p, 0);
  for (std::size_t idx = 0; idx < total; ++idx) {
    std::size_t rem = idx;
    for (std::size_t j = 0; j < p; ++j) {
      g[j] = rem % side;
      rem /= side;
    }
    double vol_lo = 1.0, vol_hi = 1.0;
    std::size_t up = 0, s = 1;
    for (std::size_t j = 0; j < p; ++j) {
      const std::size_t gu = std::min(g[j] + 1, k);
      vol_lo *= static_cast<double>(g[j]) / static_cast<double>(k);
      vol_hi *= static_cast<double>(gu) / static_cast<double>(k);
      up += gu * s;
      s *= side;
    }
    bound = std::max({bound, cum[up] / n - vol_lo, vol_hi - cum[idx] / n});
  }
  return bound;
}

}  // namespace detail

/// Star discrepancy: exact for p <= 2, a guaranteed upper bound for p in 3..5.
inline Discrepancy star_discrepancy(const Matrix& points) {
  const auto p = points.cols();
  if (points.rows() < 1) throw ValidationError("star_discrepancy: empty point set");
  if (p == 1) {
    std::vector<double> x(points.data(), points.data() + points.rows());
    return {detail::star_discrepancy_1d(std::move(x)), true, 0};
  }
  if (p == 2) return {detail::star_discrepancy_2d(points), true, 0};
  if (p <= 5) {
    const int level = p == 3 ? 6 : (p == 4 ? 5 : 4);
    return {detail::star_discrepancy_grid_bound(points, level), false, level};
  }
  throw UnsupportedError("star_discrepancy: dimension " + std::to_string(p) + " > 5 unsupported");
}

inline Discrepancy star_discrepancy(const PointSet& ps) { return star_discrepancy(ps.points); }

}  // namespace gmmnqmc::qmc

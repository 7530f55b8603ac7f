#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "gmmnqmc/error.hpp"
#include "gmmnqmc/matrix.hpp"

namespace gmmnqmc::copula {

/// Column-wise ranks scaled by 1/(n+1); ties receive their average rank.
inline Matrix pseudo_observations(const Matrix& x) {
  const auto n = x.rows();
  Matrix out(n, x.cols());
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return x(a, j) < x(b, j); });
    for (Eigen::Index start = 0; start < n;) {
      Eigen::Index end = start + 1;
      while (end < n && x(order[static_cast<std::size_t>(end)], j) == x(order[static_cast<std::size_t>(start)], j)) ++end;
      const double rank = 0.5 * static_cast<double>(start + 1 + end);  // mean of start+1 .. end
      for (Eigen::Index k = start; k < end; ++k) {
        out(order[static_cast<std::size_t>(k)], j) = rank / static_cast<double>(n + 1);
      }
      start = end;
    }
  }
  return out;
}

/// (1/n) #{i : U_i <= u componentwise}.
inline double empirical_copula(const Matrix& u_hat, std::span<const double> u) {
  if (static_cast<std::size_t>(u_hat.cols()) != u.size()) {
    throw ValidationError("empirical_copula: point dimension mismatch");
  }
  std::size_t count = 0;
  for (Eigen::Index i = 0; i < u_hat.rows(); ++i) {
    bool below = true;
    for (Eigen::Index j = 0; j < u_hat.cols() && below; ++j) below = u_hat(i, j) <= u[static_cast<std::size_t>(j)];
    count += below;
  }
  return static_cast<double>(count) / static_cast<double>(u_hat.rows());
}

inline double empirical_copula(const Matrix& u_hat, std::initializer_list<double> u) {
  return empirical_copula(u_hat, std::span<const double>(u.begin(), u.size()));
}

namespace detail {

// Merge sort counting exchanges (Knight's algorithm).
inline std::uint64_t count_swaps(std::vector<double>& y, std::vector<double>& buf, std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::uint64_t swaps = count_swaps(y, buf, lo, mid) + count_swaps(y, buf, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (y[j] < y[i]) {
      swaps += mid - i;
      buf[k++] = y[j++];
    } else {
      buf[k++] = y[i++];
    }
  }
  while (i < mid) buf[k++] = y[i++];
  while (j < hi) buf[k++] = y[j++];
  std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo), buf.begin() + static_cast<std::ptrdiff_t>(hi),
            y.begin() + static_cast<std::ptrdiff_t>(lo));
  return swaps;
}

template <class Key>
std::uint64_t tied_pairs(const std::vector<Key>& sorted) {
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i + 1;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const std::uint64_t t = j - i;
    total += t * (t - 1) / 2;
    i = j;
  }
  return total;
}

}  // namespace detail

/// Sample Kendall's tau (tau-b) of columns j and k in O(n log n).
inline double kendall_tau(const Matrix& u, Eigen::Index j, Eigen::Index k) {
  const auto n = static_cast<std::size_t>(u.rows());
  if (n < 2) throw ValidationError("kendall_tau: need at least two observations");
  std::vector<std::pair<double, double>> xy(n);
  for (std::size_t i = 0; i < n; ++i) xy[i] = {u(static_cast<Eigen::Index>(i), j), u(static_cast<Eigen::Index>(i), k)};
  std::sort(xy.begin(), xy.end());
  std::vector<double> xs(n), y(n), buf(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = xy[i].first;
    y[i] = xy[i].second;
  }
  const std::uint64_t x_ties = detail::tied_pairs(xs);
  const std::uint64_t joint_ties = detail::tied_pairs(xy);
  const std::uint64_t swaps = detail::count_swaps(y, buf, 0, n);
  const std::uint64_t y_ties = detail::tied_pairs(y);
  const auto n0 = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
  const double numer = n0 - static_cast<double>(x_ties) - static_cast<double>(y_ties) +
                       static_cast<double>(joint_ties) - 2.0 * static_cast<double>(swaps);
  const double denom = std::sqrt((n0 - static_cast<double>(x_ties)) * (n0 - static_cast<double>(y_ties)));
  return denom > 0.0 ? numer / denom : 0.0;
}

}  // namespace gmmnqmc::copula

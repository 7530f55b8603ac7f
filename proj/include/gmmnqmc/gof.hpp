#pragma once

// Cramer-von Mises distances between empirical copulas and a model or a
// second sample.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "gmmnqmc/copula_cdf.hpp"
#include "gmmnqmc/empirical.hpp"

namespace gmmnqmc::gof {

struct GofResult {
  double value = 0.0;
  std::size_t n = 0;
  std::size_t n_trn = 0;  // two-sample only
  std::string method;
  std::uint64_t replication = 0;
};

/// sum_i (C_n(U_i) - C(U_i))^2 over the pseudo-observations U.
inline double cvm_one_sample(const Matrix& u_pobs, const copula::CopulaSpec& spec) {
  const auto n = u_pobs.rows();
  if (n < 1) throw ValidationError("cvm_one_sample: empty sample");
  if (u_pobs.cols() != copula::dimension(spec)) throw ValidationError("cvm_one_sample: dimension mismatch");
  const auto model = copula::cdf_batch(spec, u_pobs);
  double s = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double emp = copula::empirical_copula(
        u_pobs, std::span<const double>(u_pobs.row(i).data(), static_cast<std::size_t>(u_pobs.cols())));
    const double diff = emp - model[static_cast<std::size_t>(i)];
    s += diff * diff;
  }
  return s;
}

namespace detail {

// sum_{i,k} prod_j (1 - max(a_ij, b_kj))
inline double product_integral_sum(const Matrix& a, const Matrix& b) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index k = 0; k < b.rows(); ++k) {
      double p = 1.0;
      for (Eigen::Index j = 0; j < a.cols(); ++j) p *= 1.0 - std::max(a(i, j), b(k, j));
      total += p;
    }
  }
  return total;
}

}  // namespace detail

/// (1/n + 1/m)^-1 * integral over [0,1]^d of (C_gen(u) - C_trn(u))^2 du, in
/// closed form.
inline double cvm_two_sample(const Matrix& u_gen, const Matrix& u_trn) {
  if (u_gen.cols() != u_trn.cols()) throw ValidationError("cvm_two_sample: dimension mismatch");
  if (u_gen.rows() < 1 || u_trn.rows() < 1) throw ValidationError("cvm_two_sample: empty sample");
  const double n = static_cast<double>(u_gen.rows());
  const double m = static_cast<double>(u_trn.rows());
  const double gg = detail::product_integral_sum(u_gen, u_gen) / (n * n);
  const double gt = detail::product_integral_sum(u_gen, u_trn) / (n * m);
  const double tt = detail::product_integral_sum(u_trn, u_trn) / (m * m);
  const double integral = std::max(0.0, gg - 2.0 * gt + tt);
  return integral / (1.0 / n + 1.0 / m);
}

/// One-sided Mann-Whitney test of "a tends to be smaller than b"; returns the
/// normal-approximation p-value (ties get average ranks, tie-corrected variance).
inline double rank_test_less(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n1 = a.size(), n2 = b.size();
  if (n1 < 1 || n2 < 1) throw ValidationError("rank test: empty sample");
  Matrix all(static_cast<Eigen::Index>(n1 + n2), 1);
  for (std::size_t i = 0; i < n1; ++i) all(static_cast<Eigen::Index>(i), 0) = a[i];
  for (std::size_t i = 0; i < n2; ++i) all(static_cast<Eigen::Index>(n1 + i), 0) = b[i];
  const double N = static_cast<double>(n1 + n2);
  const Matrix ranks = copula::pseudo_observations(all) * (N + 1.0);
  double r1 = 0.0;
  for (std::size_t i = 0; i < n1; ++i) r1 += ranks(static_cast<Eigen::Index>(i), 0);
  const double u1 = r1 - static_cast<double>(n1) * (static_cast<double>(n1) + 1.0) / 2.0;
  std::vector<double> sorted(all.data(), all.data() + all.size());
  std::sort(sorted.begin(), sorted.end());
  double ties = 0.0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i);
    ties += t * t * t - t;
    i = j;
  }
  const double mean = static_cast<double>(n1) * static_cast<double>(n2) / 2.0;
  const double var = static_cast<double>(n1) * static_cast<double>(n2) / 12.0 * ((N + 1.0) - ties / (N * (N - 1.0)));
  if (var <= 0.0) return 1.0;
  return dist::normal_cdf((u1 - mean + 0.5) / std::sqrt(var));  // continuity correction
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw ValidationError("median of empty vector");
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

}  // namespace gmmnqmc::gof

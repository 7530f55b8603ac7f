#pragma once

// Maximum mean discrepancy with a mixture of Gaussian kernels.

#include <algorithm>
#include <cmath>
#include <vector>

#include "gmmnqmc/error.hpp"
#include "gmmnqmc/matrix.hpp"

namespace gmmnqmc::gmmn {

struct KernelSpec {
  std::vector<double> bandwidths{0.001, 0.01, 0.15, 0.25, 0.50, 0.75};

  void validate() const {
    if (bandwidths.empty()) throw ValidationError("kernel: at least one bandwidth required");
    for (const double s : bandwidths) {
      if (!(s > 0.0)) throw ValidationError("kernel: bandwidths must be positive");
    }
  }

  /// K(x,y) = sum_k exp(-|x-y|^2 / (2 sigma_k^2)).
  double operator()(double squared_distance) const {
    double k = 0.0;
    for (const double s : bandwidths) k += std::exp(-squared_distance / (2.0 * s * s));
    return k;
  }
};

/// Kernel sum between two samples, plus optionally the per-row vectors
/// sum_j w(a_i,b_j) (a_i - b_j) with w = sum_k K_k / sigma_k^2.
struct KernelSum {
  double total = 0.0;
  Matrix grad;
};

namespace detail {

// Column-major copy so that each coordinate is a contiguous array.
inline std::vector<Eigen::ArrayXd> columns(const Matrix& m) {
  std::vector<Eigen::ArrayXd> c(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index j = 0; j < m.cols(); ++j) c[static_cast<std::size_t>(j)] = m.col(j).array();
  return c;
}

struct KernelTerms {
  std::vector<double> neg_half_inv_sq;  // -1/(2 sigma^2)
  std::vector<double> inv_sq;           // 1/sigma^2

  explicit KernelTerms(const KernelSpec& k) {
    for (const double s : k.bandwidths) {
      neg_half_inv_sq.push_back(-0.5 / (s * s));
      inv_sq.push_back(1.0 / (s * s));
    }
  }
};

// Row i of `a` against rows [lo, lo+len) of `b`: kernel values and, when
// requested, the weights sum_k K_k / sigma_k^2. Bandwidths whose exponent
// falls below -746 contribute exactly zero and are skipped.
inline void kernel_row(const Matrix& a, Eigen::Index i, const std::vector<Eigen::ArrayXd>& bc, Eigen::Index lo,
                       Eigen::Index len, const KernelTerms& kt, bool want_weight, Eigen::ArrayXd& kval,
                       Eigen::ArrayXd& weight) {
  kval.resize(len);
  if (want_weight) weight.resize(len);
  const std::size_t d = bc.size();
  const std::size_t nk = kt.inv_sq.size();
  for (Eigen::Index j = 0; j < len; ++j) {
    double r2 = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double diff = bc[c][lo + j] - a(i, static_cast<Eigen::Index>(c));
      r2 += diff * diff;
    }
    double k = 0.0, w = 0.0;
    for (std::size_t b = 0; b < nk; ++b) {
      const double t = r2 * kt.neg_half_inv_sq[b];
      if (t < -746.0) continue;
      const double e = std::exp(t);
      k += e;
      w += e * kt.inv_sq[b];
    }
    kval[j] = k;
    if (want_weight) weight[j] = w;
  }
}

}  // namespace detail

/// sum_{i,j} K(a_i, b_j).
inline KernelSum cross_kernel_sum(const Matrix& a, const Matrix& b, const KernelSpec& kernel, bool want_grad) {
  const detail::KernelTerms kt(kernel);
  const auto bc = detail::columns(b);
  KernelSum out;
  if (want_grad) out.grad = Matrix::Zero(a.rows(), a.cols());
  Eigen::ArrayXd kval, weight;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    detail::kernel_row(a, i, bc, 0, b.rows(), kt, want_grad, kval, weight);
    out.total += kval.sum();
    if (want_grad) {
      const double wsum = weight.sum();
      for (Eigen::Index c = 0; c < a.cols(); ++c) {
        out.grad(i, c) = a(i, c) * wsum - (weight * bc[static_cast<std::size_t>(c)]).sum();
      }
    }
  }
  return out;
}

/// sum_{i,j} K(a_i, a_j) including the diagonal, using symmetry.
inline KernelSum self_kernel_sum(const Matrix& a, const KernelSpec& kernel, bool want_grad) {
  const detail::KernelTerms kt(kernel);
  const auto ac = detail::columns(a);
  const auto n = a.rows();
  KernelSum out;
  if (want_grad) out.grad = Matrix::Zero(n, a.cols());
  std::vector<Eigen::ArrayXd> gcol;
  if (want_grad) gcol.assign(static_cast<std::size_t>(a.cols()), Eigen::ArrayXd::Zero(n));
  double off = 0.0;
  Eigen::ArrayXd kval, weight;
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    const Eigen::Index len = n - i - 1;
    detail::kernel_row(a, i, ac, i + 1, len, kt, want_grad, kval, weight);
    off += kval.sum();
    if (want_grad) {
      for (Eigen::Index c = 0; c < a.cols(); ++c) {
        auto& g = gcol[static_cast<std::size_t>(c)];
        const Eigen::ArrayXd diff = a(i, c) - ac[static_cast<std::size_t>(c)].segment(i + 1, len);
        g[i] += (weight * diff).sum();
        g.segment(i + 1, len) -= weight * diff;
      }
    }
  }
  out.total = static_cast<double>(n) * static_cast<double>(kernel.bandwidths.size()) + 2.0 * off;
  if (want_grad) {
    for (Eigen::Index c = 0; c < a.cols(); ++c) out.grad.col(c) = gcol[static_cast<std::size_t>(c)].matrix();
  }
  return out;
}

/// Biased V-statistic estimate of MMD^2 (diagonal terms included).
inline double mmd_squared(const Matrix& x, const Matrix& y, const KernelSpec& kernel = {}) {
  if (x.cols() != y.cols()) throw ValidationError("mmd: samples differ in dimension");
  if (x.rows() == 0 || y.rows() == 0) throw ValidationError("mmd: empty sample");
  const double n = static_cast<double>(x.rows());
  const double m = static_cast<double>(y.rows());
  const double xx = self_kernel_sum(x, kernel, false).total;
  const double yy = self_kernel_sum(y, kernel, false).total;
  // Fixed argument order for the cross term keeps mmd(x,y) == mmd(y,x) bitwise.
  const bool swap = y.rows() < x.rows() ||
                    (y.rows() == x.rows() &&
                     std::lexicographical_compare(y.data(), y.data() + y.size(), x.data(), x.data() + x.size()));
  const double xy = swap ? cross_kernel_sum(y, x, kernel, false).total : cross_kernel_sum(x, y, kernel, false).total;
  return (xx / (n * n) + yy / (m * m)) - 2.0 * xy / (n * m);
}

/// Square root of the V-statistic, negative rounding residue clamped to 0.
inline double mmd(const Matrix& x, const Matrix& y, const KernelSpec& kernel = {}) {
  return std::sqrt(std::max(0.0, mmd_squared(x, y, kernel)));
}

struct MmdValueGrad {
  double mmd2 = 0.0;
  Matrix grad_y;  // d(MMD^2)/dY
};

/// MMD^2 and its gradient with respect to the rows of y.
inline MmdValueGrad mmd_squared_grad(const Matrix& x, const Matrix& y, const KernelSpec& kernel) {
  if (x.cols() != y.cols()) throw ValidationError("mmd: samples differ in dimension");
  const double n = static_cast<double>(x.rows());
  const double m = static_cast<double>(y.rows());
  const double xx = self_kernel_sum(x, kernel, false).total;
  const KernelSum yy = self_kernel_sum(y, kernel, true);
  const KernelSum yx = cross_kernel_sum(y, x, kernel, true);
  MmdValueGrad out;
  out.mmd2 = xx / (n * n) - 2.0 * yx.total / (n * m) + yy.total / (m * m);
  out.grad_y = (-2.0 / (m * m)) * yy.grad + (2.0 / (n * m)) * yx.grad;
  return out;
}

}  // namespace gmmnqmc::gmmn

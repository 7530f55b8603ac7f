#pragma once

// Copula distribution functions. Closed forms everywhere except the t copula,
// which is evaluated against a cached reference sample.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "gmmnqmc/copula_spec.hpp"
#include "gmmnqmc/dist.hpp"

namespace gmmnqmc::copula {

/// Reference sample size of the t-copula surrogate. Its Monte Carlo error is
/// at most 3 * 0.5 / sqrt(2e6) ~= 1.1e-3.
inline constexpr std::size_t kTReferenceSize = 2'000'000;
inline constexpr std::uint64_t kTReferenceSeed = 0x74636f70756c61ull;

/// Draws of the underlying multivariate t distribution, sorted by the first
/// coordinate. C(u) is the fraction of rows below t_nu^{-1}(u) componentwise.
class TReference {
 public:
  TReference(const TCopula& spec, std::size_t size) : dof_(spec.dof), d_(static_cast<int>(spec.corr.rows())) {
    const Eigen::MatrixXd chol = Eigen::LLT<Eigen::MatrixXd>(Eigen::MatrixXd(spec.corr)).matrixL();
    dist::RngStream stream(kTReferenceSeed, 0);
    Matrix x(static_cast<Eigen::Index>(size), d_);
    Eigen::VectorXd z(d_);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      for (int j = 0; j < d_; ++j) z[j] = dist::normal(stream);
      const double scale = std::sqrt(dof_ / dist::chi_square(stream, dof_));
      x.row(i) = (scale * (chol * z)).transpose();
    }
    std::vector<Eigen::Index> order(static_cast<std::size_t>(x.rows()));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return x(a, 0) < x(b, 0); });
    rows_.resize(x.rows(), d_);
    for (std::size_t i = 0; i < order.size(); ++i) rows_.row(static_cast<Eigen::Index>(i)) = x.row(order[i]);
  }

  std::vector<double> cdf(const Matrix& u) const {
    Matrix q(u.rows(), u.cols());
    for (Eigen::Index i = 0; i < u.rows(); ++i) {
      for (Eigen::Index j = 0; j < u.cols(); ++j) {
        const double v = u(i, j);
        q(i, j) = v <= 0.0   ? -std::numeric_limits<double>::infinity()
                  : v >= 1.0 ? std::numeric_limits<double>::infinity()
                             : dist::student_t_quantile(v, dof_);
      }
    }
    return d_ == 2 ? count_2d(q) : count_brute(q);
  }

  std::size_t size() const { return static_cast<std::size_t>(rows_.rows()); }

 private:
  // Offline dominance counting: sweep the first coordinate, Fenwick tree over
  // ranks of the second.
  std::vector<double> count_2d(const Matrix& q) const {
    const auto n = static_cast<std::size_t>(rows_.rows());
    std::vector<double> ys(n);
    for (std::size_t i = 0; i < n; ++i) ys[i] = rows_(static_cast<Eigen::Index>(i), 1);
    std::vector<double> sorted_y = ys;
    std::sort(sorted_y.begin(), sorted_y.end());
    std::vector<std::size_t> tree(n + 1, 0);
    auto add = [&](std::size_t pos) {
      for (++pos; pos <= n; pos += pos & (~pos + 1)) ++tree[pos];
    };
    auto prefix = [&](std::size_t count) {
      std::size_t s = 0;
      for (; count > 0; count -= count & (~count + 1)) s += tree[count];
      return s;
    };
    std::vector<Eigen::Index> order(static_cast<std::size_t>(q.rows()));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return q(a, 0) < q(b, 0); });
    std::vector<double> out(static_cast<std::size_t>(q.rows()));
    std::size_t inserted = 0;
    for (const auto qi : order) {
      while (inserted < n && rows_(static_cast<Eigen::Index>(inserted), 0) <= q(qi, 0)) {
        const auto rank = static_cast<std::size_t>(
            std::lower_bound(sorted_y.begin(), sorted_y.end(), ys[inserted]) - sorted_y.begin());
        add(rank);
        ++inserted;
      }
      const auto upto = static_cast<std::size_t>(
          std::upper_bound(sorted_y.begin(), sorted_y.end(), q(qi, 1)) - sorted_y.begin());
      out[static_cast<std::size_t>(qi)] = static_cast<double>(prefix(upto)) / static_cast<double>(n);
    }
    return out;
  }

  std::vector<double> count_brute(const Matrix& q) const {
    std::vector<double> out(static_cast<std::size_t>(q.rows()));
    const auto n = rows_.rows();
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
      std::size_t count = 0;
      for (Eigen::Index r = 0; r < n && rows_(r, 0) <= q(i, 0); ++r) {
        bool below = true;
        for (int j = 1; j < d_ && below; ++j) below = rows_(r, j) <= q(i, j);
        count += below;
      }
      out[static_cast<std::size_t>(i)] = static_cast<double>(count) / static_cast<double>(n);
    }
    return out;
  }

  double dof_;
  int d_;
  Matrix rows_;
};

namespace detail {

inline std::string t_cache_key(const TCopula& s, std::size_t size) {
  std::string key = std::to_string(size);
  char buf[32];
  std::snprintf(buf, sizeof buf, ";%.17g", s.dof);
  key += buf;
  for (Eigen::Index i = 0; i < s.corr.size(); ++i) {
    std::snprintf(buf, sizeof buf, ";%.17g", s.corr.data()[i]);
    key += buf;
  }
  return key;
}

}  // namespace detail

/// Process-wide cache of t reference samples keyed by (dof, P, size).
inline std::shared_ptr<const TReference> t_reference(const TCopula& spec,
                                                     std::size_t size = kTReferenceSize) {
  static std::mutex mutex;
  static std::map<std::string, std::shared_ptr<const TReference>> cache;
  const std::string key = detail::t_cache_key(spec, size);
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, std::make_shared<TReference>(spec, size)).first;
  return it->second;
}

/// C(u) for every row of u (entries in [0,1]).
inline std::vector<double> cdf_batch(const CopulaSpec& spec, const Matrix& u) {
  const auto n = static_cast<std::size_t>(u.rows());
  const auto d = u.cols();
  if (d != dimension(spec)) throw ValidationError("cdf: point dimension does not match the copula");
  std::vector<double> out(n);
  auto rowwise = [&](auto&& f) {
    for (std::size_t i = 0; i < n; ++i) out[i] = f(u.row(static_cast<Eigen::Index>(i)));
    return out;
  };
  auto archimedean = [&](ArchimedeanFamily fam, double theta) {
    return rowwise([&](const auto& r) {
      double t = 0.0;
      for (Eigen::Index j = 0; j < d; ++j) {
        if (r[j] <= 0.0) return 0.0;
        t += psi_inv(fam, std::min(r[j], 1.0), theta);
      }
      return psi(fam, t, theta);
    });
  };
  return std::visit(
      Overloaded{
          [&](const Independence&) {
            return rowwise([&](const auto& r) { return r.prod(); });
          },
          [&](const TCopula& s) { return t_reference(s)->cdf(u); },
          [&](const Clayton& s) { return archimedean(ArchimedeanFamily::clayton, s.theta); },
          [&](const Gumbel& s) { return archimedean(ArchimedeanFamily::gumbel, s.theta); },
          [&](const NestedArchimedean& s) {
            return rowwise([&](const auto& r) {
              double t0 = 0.0;
              for (const auto& c : s.children) {
                const bool direct = c.indices.size() == 1;
                double inner = 0.0;
                for (const int j : c.indices) {
                  const double v = std::min(r[j], 1.0);
                  if (v <= 0.0) return 0.0;
                  inner += psi_inv(s.family, v, direct ? s.theta0 : c.theta);
                }
                t0 += direct ? inner : psi_inv(s.family, psi(s.family, inner, c.theta), s.theta0);
              }
              return psi(s.family, t0, s.theta0);
            });
          },
          [&](const MarshallOlkin& s) {
            return rowwise([&](const auto& r) {
              const double u1 = r[0], u2 = r[1];
              return std::min(std::pow(u1, 1.0 - s.alpha1) * u2, u1 * std::pow(u2, 1.0 - s.alpha2));
            });
          },
          [&](const Rotated& s) {
            Matrix v = u;
            if (s.degrees == 90 || s.degrees == 180) v.col(0) = (1.0 - u.col(0).array()).matrix();
            if (s.degrees == 180 || s.degrees == 270) v.col(1) = (1.0 - u.col(1).array()).matrix();
            const auto base = cdf_batch(*s.base, v);
            for (std::size_t i = 0; i < n; ++i) {
              const double u1 = u(static_cast<Eigen::Index>(i), 0);
              const double u2 = u(static_cast<Eigen::Index>(i), 1);
              switch (s.degrees) {
                case 0: out[i] = base[i]; break;
                case 90: out[i] = u2 - base[i]; break;
                case 180: out[i] = u1 + u2 - 1.0 + base[i]; break;
                default: out[i] = u1 - base[i]; break;
              }
            }
            return out;
          },
          [&](const Mixture& s) {
            std::fill(out.begin(), out.end(), 0.0);
            for (std::size_t k = 0; k < s.components.size(); ++k) {
              const auto part = cdf_batch(s.components[k], u);
              for (std::size_t i = 0; i < n; ++i) out[i] += s.weights[k] * part[i];
            }
            return out;
          }},
      spec.model);
}

inline double cdf(const CopulaSpec& spec, std::span<const double> u) {
  Matrix row(1, static_cast<Eigen::Index>(u.size()));
  for (std::size_t j = 0; j < u.size(); ++j) row(0, static_cast<Eigen::Index>(j)) = u[j];
  return cdf_batch(spec, row).front();
}

inline double cdf(const CopulaSpec& spec, std::initializer_list<double> u) {
  return cdf(spec, std::span<const double>(u.begin(), u.size()));
}

/// True when cdf() is a closed form rather than the t surrogate.
inline bool cdf_is_exact(const CopulaSpec& spec) {
  return std::visit(Overloaded{[](const TCopula&) { return false; },
                               [](const Rotated& s) { return cdf_is_exact(*s.base); },
                               [](const Mixture& s) {
                                 return std::all_of(s.components.begin(), s.components.end(),
                                                    [](const auto& c) { return cdf_is_exact(c); });
                               },
                               [](const auto&) { return true; }},
                    spec.model);
}

}  // namespace gmmnqmc::copula

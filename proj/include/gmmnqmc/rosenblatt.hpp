#pragma once

// Rosenblatt transform R_j = C_{j|1..j-1}(u_j | u_1..u_{j-1}) and its inverse
// (the conditional distribution method).

#include <bit>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <boost/math/tools/roots.hpp>

#include "gmmnqmc/copula_sampling.hpp"
#include "gmmnqmc/copula_spec.hpp"
#include "gmmnqmc/dist.hpp"

namespace gmmnqmc::copula {

/// Value of a conditional distribution function; lo < hi when the point sits
/// on an atom of the conditional law (singular Marshall-Olkin component).
struct Interval {
  double lo;
  double hi;
};

namespace detail {

inline double log_sum_exp(const std::vector<double>& terms) {
  double m = -std::numeric_limits<double>::infinity();
  for (const double t : terms) m = std::max(m, t);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (const double t : terms) s += std::exp(t - m);
  return m + std::log(s);
}

/// Coefficients a_{m,k} of (-1)^m psi^(m)(t) = psi(t) t^-m sum_k a_{m,k} x^k,
/// x = t^alpha, for the Gumbel generator psi(t) = exp(-t^alpha).
/// Recursion: a_{m+1,k} = alpha a_{m,k-1} + (m - alpha k) a_{m,k}.
class GumbelDerivatives {
 public:
  GumbelDerivatives(double theta, int max_order) : alpha_(1.0 / theta) {
    coef_.assign(static_cast<std::size_t>(max_order) + 1, {});
    coef_[0] = {1.0};
    for (int m = 0; m < max_order; ++m) {
      const auto& cur = coef_[static_cast<std::size_t>(m)];
      std::vector<double> next(static_cast<std::size_t>(m) + 2, 0.0);
      for (int k = 0; k <= m + 1; ++k) {
        double v = 0.0;
        if (k >= 1) v += alpha_ * cur[static_cast<std::size_t>(k - 1)];
        if (k <= m) v += (m - alpha_ * k) * cur[static_cast<std::size_t>(k)];
        next[static_cast<std::size_t>(k)] = v;
      }
      coef_[static_cast<std::size_t>(m) + 1] = std::move(next);
    }
  }

  /// log((-1)^m psi^(m)(t)), t > 0.
  double log_abs_derivative(int m, double t) const {
    const double log_t = std::log(t);
    const double x = std::exp(alpha_ * log_t);
    if (m == 0) return -x;
    const auto& a = coef_[static_cast<std::size_t>(m)];
    std::vector<double> terms;
    terms.reserve(a.size());
    const double log_x = alpha_ * log_t;
    for (std::size_t k = 1; k < a.size(); ++k) {
      if (a[k] > 0.0) terms.push_back(std::log(a[k]) + static_cast<double>(k) * log_x);
    }
    return -x - m * log_t + log_sum_exp(terms);
  }

  double alpha() const { return alpha_; }

 private:
  double alpha_;
  std::vector<std::vector<double>> coef_;
};

// C_{j|1..j-1} for Archimedean copulas: psi^(m)(s_cur) / psi^(m)(s_prev), m = j-1.
inline double clayton_conditional(double theta, int m, double s_prev, double s_cur) {
  return std::pow((1.0 + s_cur) / (1.0 + s_prev), -1.0 / theta - m);
}

inline double gumbel_conditional(const GumbelDerivatives& g, int m, double s_prev, double s_cur) {
  if (s_cur == s_prev) return 1.0;
  if (s_prev == 0.0) return g.alpha() < 1.0 ? 0.0 : std::exp(-(s_cur - s_prev));  // u_1..u_{j-1} all at 1
  return std::exp(g.log_abs_derivative(m, s_cur) - g.log_abs_derivative(m, s_prev));
}

// Deterministic stand-in for the auxiliary uniform of a randomized Rosenblatt
// transform, keyed on the bit patterns of the point.
inline double atom_uniform(double u1, double u2) {
  auto mix = [](std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  };
  const std::uint64_t h = mix(std::bit_cast<std::uint64_t>(u1) ^ mix(std::bit_cast<std::uint64_t>(u2)));
  return (static_cast<double>(h >> 11) + 0.5) * 0x1.0p-53;
}

inline constexpr double kAtomTolerance = 1e-9;

inline Interval marshall_olkin_conditional(const MarshallOlkin& s, double u1, double u2) {
  const double a1 = s.alpha1, a2 = s.alpha2;
  if (a2 == 0.0) return {u2, u2};  // U2 independent of the shock
  const double knot = std::pow(u1, a1 / a2);
  const double below = (1.0 - a1) * std::pow(u1, -a1);  // slope for u2 < knot
  const double left = below * knot;
  const double right = std::pow(knot, 1.0 - a2);
  if (std::abs(u2 - knot) <= kAtomTolerance * knot) return {left, right};
  if (u2 < knot) return {below * u2, below * u2};
  const double v = std::pow(u2, 1.0 - a2);
  return {v, v};
}

inline Interval flip(Interval i) { return {1.0 - i.hi, 1.0 - i.lo}; }

}  // namespace detail

/// C_{2|1}(u2 | u1) for a bivariate spec.
inline Interval conditional_2_given_1(const CopulaSpec& spec, double u1, double u2) {
  return std::visit(
      Overloaded{
          [&](const Independence&) { return Interval{u2, u2}; },
          [&](const TCopula& s) {
            const double rho = s.corr(1, 0);
            const double x1 = dist::student_t_quantile(u1, s.dof);
            const double x2 = dist::student_t_quantile(u2, s.dof);
            const double z2 = (x2 - rho * x1) / std::sqrt(1.0 - rho * rho);
            const double v = dist::student_t_cdf(z2 * std::sqrt((s.dof + 1.0) / (s.dof + x1 * x1)), s.dof + 1.0);
            return Interval{v, v};
          },
          [&](const Clayton& s) {
            const double t1 = clayton_psi_inv(u1, s.theta);
            const double v = detail::clayton_conditional(s.theta, 1, t1, t1 + clayton_psi_inv(u2, s.theta));
            return Interval{v, v};
          },
          [&](const Gumbel& s) {
            const detail::GumbelDerivatives g(s.theta, 1);
            const double t1 = gumbel_psi_inv(u1, s.theta);
            const double v = detail::gumbel_conditional(g, 1, t1, t1 + gumbel_psi_inv(u2, s.theta));
            return Interval{v, v};
          },
          [&](const NestedArchimedean&) -> Interval {
            throw UnsupportedError("rosenblatt: no conditional distributions for nested Archimedean copulas");
          },
          [&](const MarshallOlkin& s) { return detail::marshall_olkin_conditional(s, u1, u2); },
          [&](const Rotated& s) {
            switch (s.degrees) {
              case 0: return conditional_2_given_1(*s.base, u1, u2);
              case 90: return conditional_2_given_1(*s.base, 1.0 - u1, u2);
              case 180: return detail::flip(conditional_2_given_1(*s.base, 1.0 - u1, 1.0 - u2));
              default: return detail::flip(conditional_2_given_1(*s.base, u1, 1.0 - u2));
            }
          },
          [&](const Mixture& s) {
            Interval acc{0.0, 0.0};
            for (std::size_t k = 0; k < s.components.size(); ++k) {
              const Interval c = conditional_2_given_1(s.components[k], u1, u2);
              acc.lo += s.weights[k] * c.lo;
              acc.hi += s.weights[k] * c.hi;
            }
            return acc;
          }},
      spec.model);
}

/// True when rosenblatt() accepts this copula.
inline bool has_rosenblatt(const CopulaSpec& spec) {
  const int d = dimension(spec);
  return std::visit(Overloaded{[](const NestedArchimedean&) { return false; },
                               [&](const Rotated& s) { return d == 2 && has_rosenblatt(*s.base); },
                               [&](const Mixture& s) {
                                 if (d != 2) return false;
                                 for (const auto& c : s.components) {
                                   if (!has_rosenblatt(c)) return false;
                                 }
                                 return true;
                               },
                               [](const auto&) { return true; }},
                    spec.model);
}

/// Maps a sample of the copula to (approximately) independent uniforms.
/// Atoms of the Marshall-Olkin conditional law are spread with a
/// point-keyed auxiliary uniform, so the output stays uniform.
inline Matrix rosenblatt(const CopulaSpec& spec, const Matrix& u) {
  validate(spec);
  const int d = dimension(spec);
  if (u.cols() != d) throw ValidationError("rosenblatt: sample dimension does not match the copula");
  if (!has_rosenblatt(spec)) {
    throw UnsupportedError("rosenblatt: unsupported for " + family_name(spec));
  }
  Matrix r = u;
  const auto n = u.rows();
  std::visit(
      Overloaded{
          [&](const Independence&) {},
          [&](const TCopula& s) {
            const Eigen::MatrixXd l = Eigen::LLT<Eigen::MatrixXd>(Eigen::MatrixXd(s.corr)).matrixL();
            Eigen::VectorXd z(d);
            for (Eigen::Index i = 0; i < n; ++i) {
              double q = 0.0;
              for (int j = 0; j < d; ++j) {
                const double x = dist::student_t_quantile(u(i, j), s.dof);
                double acc = x;
                for (int k = 0; k < j; ++k) acc -= l(j, k) * z[k];
                z[j] = acc / l(j, j);
                const double dof = s.dof + j;
                r(i, j) = clamp_open(dist::student_t_cdf(z[j] * std::sqrt(dof / (s.dof + q)), dof));
                q += z[j] * z[j];
              }
            }
          },
          [&](const Clayton& s) {
            for (Eigen::Index i = 0; i < n; ++i) {
              double sum = clayton_psi_inv(u(i, 0), s.theta);
              for (int j = 1; j < d; ++j) {
                const double next = sum + clayton_psi_inv(u(i, j), s.theta);
                r(i, j) = clamp_open(detail::clayton_conditional(s.theta, j, sum, next));
                sum = next;
              }
            }
          },
          [&](const Gumbel& s) {
            const detail::GumbelDerivatives g(s.theta, d - 1);
            for (Eigen::Index i = 0; i < n; ++i) {
              double sum = gumbel_psi_inv(u(i, 0), s.theta);
              for (int j = 1; j < d; ++j) {
                const double next = sum + gumbel_psi_inv(u(i, j), s.theta);
                r(i, j) = clamp_open(detail::gumbel_conditional(g, j, sum, next));
                sum = next;
              }
            }
          },
          [&](const auto&) {
            for (Eigen::Index i = 0; i < n; ++i) {
              const Interval c = conditional_2_given_1(spec, u(i, 0), u(i, 1));
              const double v = c.hi > c.lo ? c.lo + detail::atom_uniform(u(i, 0), u(i, 1)) * (c.hi - c.lo) : c.lo;
              r(i, 1) = clamp_open(v);
            }
          }},
      spec.model);
  return r;
}

struct InverseOptions {
  /// Allow Gumbel through bracketed root finding (slow; off by default).
  bool numeric_gumbel = false;
};

/// True when inverse_rosenblatt() accepts this copula under the given options.
inline bool has_inverse_rosenblatt(const CopulaSpec& spec, InverseOptions opts = {}) {
  return std::visit(Overloaded{[](const Independence&) { return true; },
                               [](const TCopula&) { return true; },
                               [](const Clayton&) { return true; },
                               [](const MarshallOlkin&) { return true; },
                               [&](const Gumbel&) { return opts.numeric_gumbel; },
                               [](const auto&) { return false; }},
                    spec.model);
}

/// Conditional distribution method: maps uniforms v to a copula sample u with
/// rosenblatt(u) = v.
inline Matrix inverse_rosenblatt(const CopulaSpec& spec, const Matrix& v, InverseOptions opts = {}) {
  validate(spec);
  const int d = dimension(spec);
  if (v.cols() != d) throw ValidationError("inverse_rosenblatt: sample dimension does not match the copula");
  if (!has_inverse_rosenblatt(spec, opts)) {
    throw UnsupportedError("inverse_rosenblatt: no conditional distribution method available for " +
                           family_name(spec));
  }
  Matrix u = v;
  const auto n = v.rows();
  std::visit(
      Overloaded{
          [&](const Independence&) {},
          [&](const TCopula& s) {
            const Eigen::MatrixXd l = Eigen::LLT<Eigen::MatrixXd>(Eigen::MatrixXd(s.corr)).matrixL();
            Eigen::VectorXd z(d);
            for (Eigen::Index i = 0; i < n; ++i) {
              double q = 0.0;
              for (int j = 0; j < d; ++j) {
                const double dof = s.dof + j;
                z[j] = dist::student_t_quantile(v(i, j), dof) * std::sqrt((s.dof + q) / dof);
                double x = 0.0;
                for (int k = 0; k <= j; ++k) x += l(j, k) * z[k];
                u(i, j) = clamp_open(dist::student_t_cdf(x, s.dof));
                q += z[j] * z[j];
              }
            }
          },
          [&](const Clayton& s) {
            for (Eigen::Index i = 0; i < n; ++i) {
              double sum = clayton_psi_inv(v(i, 0), s.theta);
              for (int j = 1; j < d; ++j) {
                const double power = 1.0 / s.theta + j;
                const double t = (1.0 + sum) * std::expm1(-std::log(v(i, j)) / power);
                u(i, j) = clamp_open(clayton_psi(t, s.theta));
                sum += t;
              }
            }
          },
          [&](const MarshallOlkin& s) {
            for (Eigen::Index i = 0; i < n; ++i) {
              const double u1 = v(i, 0), w = v(i, 1);
              if (s.alpha2 == 0.0) continue;
              const double knot = std::pow(u1, s.alpha1 / s.alpha2);
              const double below = (1.0 - s.alpha1) * std::pow(u1, -s.alpha1);
              const double left = below * knot;
              const double right = std::pow(knot, 1.0 - s.alpha2);
              double x;
              if (w < left) {
                x = w / below;
              } else if (w <= right) {
                x = knot;
              } else {
                x = std::pow(w, 1.0 / (1.0 - s.alpha2));
              }
              u(i, 1) = clamp_open(x);
            }
          },
          [&](const Gumbel& s) {
            const detail::GumbelDerivatives g(s.theta, d - 1);
            for (Eigen::Index i = 0; i < n; ++i) {
              double sum = gumbel_psi_inv(v(i, 0), s.theta);
              for (int j = 1; j < d; ++j) {
                const double target = v(i, j);
                auto f = [&](double x) {
                  return detail::gumbel_conditional(g, j, sum, sum + gumbel_psi_inv(x, s.theta)) - target;
                };
                double lo = 0x1.0p-1000, hi = 1.0 - 0x1.0p-53;
                double x;
                if (f(lo) >= 0.0) {
                  x = lo;
                } else if (f(hi) <= 0.0) {
                  x = hi;
                } else {
                  std::uintmax_t iters = 200;
                  const auto root = boost::math::tools::toms748_solve(
                      f, lo, hi, boost::math::tools::eps_tolerance<double>(52), iters);
                  x = 0.5 * (root.first + root.second);
                }
                u(i, j) = x;
                sum += gumbel_psi_inv(x, s.theta);
              }
            }
          },
          [&](const auto&) {}},
      spec.model);
  return u;
}

}  // namespace gmmnqmc::copula

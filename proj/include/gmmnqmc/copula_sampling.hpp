#pragma once

// Exact pseudo-random samplers (frailty, stochastic-representation and
// common-shock constructions).

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "gmmnqmc/copula_spec.hpp"
#include "gmmnqmc/dist.hpp"

namespace gmmnqmc::copula {

/// Clamp into the open unit interval; generators can round to exactly 0 or 1.
inline double clamp_open(double u) {
  constexpr double lo = 0x1.0p-1022;
  constexpr double hi = 1.0 - 0x1.0p-53;
  return std::clamp(u, lo, hi);
}

/// Frailty of a nested child with parameter theta_c under a root frailty v0.
inline double nested_child_frailty(ArchimedeanFamily family, double theta0, double theta_c,
                                   double v0, dist::RngStream& stream) {
  const double alpha = theta0 / theta_c;
  if (alpha >= 1.0) return v0;
  if (family == ArchimedeanFamily::gumbel) {
    // LST exp(-v0 t^alpha)
    return std::pow(v0, 1.0 / alpha) * dist::positive_stable(stream, alpha);
  }
  // LST exp(-v0 ((1+t)^alpha - 1)): sum of m tilted stables with v0/m each so
  // that every rejection step accepts with probability >= exp(-1).
  const auto m = static_cast<int>(std::max(1.0, std::ceil(v0)));
  const double scale = std::pow(v0 / m, 1.0 / alpha);
  double v = 0.0;
  for (int i = 0; i < m; ++i) v += scale * dist::tilted_positive_stable(stream, alpha, scale);
  return v;
}

/// Sampler compiled from a spec; precomputes Cholesky factors and mixture
/// weights once.
class Sampler {
 public:
  explicit Sampler(CopulaSpec spec) : spec_(std::move(spec)) {
    validate(spec_);
    dim_ = copula::dimension(spec_);
    std::visit(Overloaded{[&](const TCopula& s) {
                            chol_ = Eigen::LLT<Eigen::MatrixXd>(Eigen::MatrixXd(s.corr)).matrixL();
                          },
                          [&](const Rotated& s) { children_.emplace_back(*s.base); },
                          [&](const Mixture& s) {
                            double acc = 0.0;
                            for (std::size_t i = 0; i < s.components.size(); ++i) {
                              children_.emplace_back(s.components[i]);
                              acc += s.weights[i];
                              cumulative_.push_back(acc);
                            }
                            cumulative_.back() = 1.0;
                          },
                          [](const auto&) {}},
               spec_.model);
  }

  int dimension() const { return dim_; }
  const CopulaSpec& spec() const { return spec_; }

  /// Index of the mixture component chosen for the next row (mixtures only).
  std::size_t choose_component(double u) const {
    return static_cast<std::size_t>(
        std::upper_bound(cumulative_.begin(), cumulative_.end() - 1, u) - cumulative_.begin());
  }

  void draw(dist::RngStream& stream, std::span<double> out) const {
    std::visit(
        Overloaded{
            [&](const Independence&) {
              for (auto& u : out) u = stream.next_uniform();
            },
            [&](const TCopula& s) {
              Eigen::VectorXd z(dim_);
              for (int j = 0; j < dim_; ++j) z[j] = dist::normal(stream);
              const Eigen::VectorXd x = chol_ * z;
              const double w = dist::chi_square(stream, s.dof);
              const double scale = std::sqrt(s.dof / w);
              for (int j = 0; j < dim_; ++j) {
                out[static_cast<std::size_t>(j)] = clamp_open(dist::student_t_cdf(scale * x[j], s.dof));
              }
            },
            [&](const Clayton& s) {
              const double v = dist::gamma_variate(stream, 1.0 / s.theta, 1.0);
              for (auto& u : out) u = clamp_open(clayton_psi(dist::exponential(stream) / v, s.theta));
            },
            [&](const Gumbel& s) {
              const double v = dist::positive_stable(stream, 1.0 / s.theta);
              for (auto& u : out) u = clamp_open(gumbel_psi(dist::exponential(stream) / v, s.theta));
            },
            [&](const NestedArchimedean& s) { draw_nested(s, stream, out); },
            [&](const MarshallOlkin& s) {
              const double v1 = stream.next_uniform();
              const double v2 = stream.next_uniform();
              const double v3 = stream.next_uniform();
              out[0] = clamp_open(std::max(std::pow(v1, 1.0 / (1.0 - s.alpha1)), std::pow(v3, 1.0 / s.alpha1)));
              out[1] = clamp_open(std::max(std::pow(v2, 1.0 / (1.0 - s.alpha2)), std::pow(v3, 1.0 / s.alpha2)));
            },
            [&](const Rotated& s) {
              children_.front().draw(stream, out);
              if (s.degrees == 90 || s.degrees == 180) out[0] = 1.0 - out[0];
              if (s.degrees == 180 || s.degrees == 270) out[1] = 1.0 - out[1];
            },
            [&](const Mixture&) {
              children_[choose_component(stream.next_uniform())].draw(stream, out);
            }},
        spec_.model);
  }

  Matrix sample(std::size_t n, dist::RngStream& stream) const {
    Matrix u(static_cast<Eigen::Index>(n), dim_);
    for (Eigen::Index i = 0; i < u.rows(); ++i) {
      draw(stream, std::span<double>(u.row(i).data(), static_cast<std::size_t>(dim_)));
    }
    return u;
  }

 private:
  void draw_nested(const NestedArchimedean& s, dist::RngStream& stream, std::span<double> out) const {
    const bool clayton = s.family == ArchimedeanFamily::clayton;
    const double v0 = clayton ? dist::gamma_variate(stream, 1.0 / s.theta0, 1.0)
                              : dist::positive_stable(stream, 1.0 / s.theta0);
    for (const auto& child : s.children) {
      const bool direct = child.indices.size() == 1;
      const double theta = direct ? s.theta0 : child.theta;
      const double v = direct ? v0 : nested_child_frailty(s.family, s.theta0, theta, v0, stream);
      for (const int j : child.indices) {
        out[static_cast<std::size_t>(j)] = clamp_open(psi(s.family, dist::exponential(stream) / v, theta));
      }
    }
  }

  CopulaSpec spec_;
  int dim_ = 0;
  Eigen::MatrixXd chol_;
  std::vector<Sampler> children_;
  std::vector<double> cumulative_;
};

/// n pseudo-random draws from the copula, one row each.
inline Matrix sample(const CopulaSpec& spec, std::size_t n, dist::RngStream& stream) {
  return Sampler(spec).sample(n, stream);
}

}  // namespace gmmnqmc::copula

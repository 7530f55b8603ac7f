#pragma once

// Functionals of dependent samples, their (RQ)MC estimators and convergence
// studies.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <iostream>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "gmmnqmc/copula_sampling.hpp"
#include "gmmnqmc/gmmn.hpp"
#include "gmmnqmc/qmc.hpp"
#include "gmmnqmc/rosenblatt.hpp"

namespace gmmnqmc::estimate {

using copula::CopulaSpec;

struct Margin {
  enum class Kind { normal, lognormal, student_t };
  Kind kind = Kind::normal;
  double location = 0.0;  // mean, meanlog, or t location
  double scale = 1.0;     // sd, sdlog, or t scale
  double dof = 4.0;       // student_t only

  static Margin standard_normal() { return {}; }
  static Margin normal(double mean, double sd) { return {Kind::normal, mean, sd, 0.0}; }
  static Margin lognormal(double meanlog, double sdlog) { return {Kind::lognormal, meanlog, sdlog, 0.0}; }
  static Margin student_t(double dof, double scale = 1.0) { return {Kind::student_t, 0.0, scale, dof}; }

  double quantile(double u) const {
    switch (kind) {
      case Kind::normal: return location + scale * dist::normal_quantile(u);
      case Kind::lognormal: return std::exp(location + scale * dist::normal_quantile(u));
      case Kind::student_t: return location + scale * dist::student_t_quantile(u, dof);
    }
    return 0.0;
  }
};

/// Componentwise quantile transform. A single margin applies to every column.
inline Matrix apply_margins(const Matrix& u, const std::vector<Margin>& margins) {
  if (margins.size() != 1 && static_cast<Eigen::Index>(margins.size()) != u.cols()) {
    throw ValidationError("apply_margins: need one margin or one per column");
  }
  Matrix x(u.rows(), u.cols());
  for (Eigen::Index j = 0; j < u.cols(); ++j) {
    const Margin& m = margins.size() == 1 ? margins.front() : margins[static_cast<std::size_t>(j)];
    for (Eigen::Index i = 0; i < u.rows(); ++i) x(i, j) = m.quantile(u(i, j));
  }
  return x;
}

/// prod_j (|4 r_j - 2| + j) / (1 + j), j = 1..d.
inline double sobol_g(std::span<const double> r) {
  double v = 1.0;
  for (std::size_t j = 0; j < r.size(); ++j) {
    const double jj = static_cast<double>(j + 1);
    v *= (std::abs(4.0 * r[j] - 2.0) + jj) / (1.0 + jj);
  }
  return v;
}

/// Sobol' g applied to the Rosenblatt transform of u under `spec`.
inline std::vector<double> psi_sobol_g(const CopulaSpec& spec, const Matrix& u) {
  const Matrix r = copula::rosenblatt(spec, u);
  std::vector<double> out(static_cast<std::size_t>(r.rows()));
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    out[static_cast<std::size_t>(i)] = sobol_g(std::span<const double>(r.row(i).data(), static_cast<std::size_t>(r.cols())));
  }
  return out;
}

namespace detail {

// k = ceil(n (1 - level)), robust to the rounding in 1 - level.
inline std::size_t tail_count(std::size_t n, double level) {
  if (!(level > 0.0 && level < 1.0)) throw DomainError("level must lie in (0,1)");
  const double raw = static_cast<double>(n) * (1.0 - level);
  if (raw < 1.0 - 1e-9) {
    throw ValidationError("expected shortfall: n = " + std::to_string(n) + " is below 1/(1-level)");
  }
  return static_cast<std::size_t>(std::ceil(raw - 1e-9));
}

// Row indices of the k largest values, in decreasing order of value.
inline std::vector<std::size_t> top_k(const std::vector<double>& v, std::size_t k) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) { return v[a] > v[b] || (v[a] == v[b] && a < b); });
  idx.resize(k);
  return idx;
}

inline std::vector<double> row_sums(const Matrix& x) {
  std::vector<double> s(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) s[static_cast<std::size_t>(i)] = x.row(i).sum();
  return s;
}

}  // namespace detail

/// Mean of the ceil(n (1 - level)) largest values.
inline double es_estimate(const std::vector<double>& sums, double level) {
  const std::size_t k = detail::tail_count(sums.size(), level);
  double total = 0.0;
  for (const auto i : detail::top_k(sums, k)) total += sums[i];
  return total / static_cast<double>(k);
}

/// Mean of column `component` over the rows whose row sum is among the k largest.
inline double allocation_estimate(const Matrix& x, double level, Eigen::Index component = 0) {
  if (component < 0 || component >= x.cols()) throw ValidationError("allocation: component out of range");
  const auto sums = detail::row_sums(x);
  const std::size_t k = detail::tail_count(sums.size(), level);
  double total = 0.0;
  for (const auto i : detail::top_k(sums, k)) total += x(static_cast<Eigen::Index>(i), component);
  return total / static_cast<double>(k);
}

/// exp(-r (T - t)) max(sum_j S_T,j - K, 0) per row.
inline std::vector<double> basket_call_payoff(const Matrix& s_T, double r, double t, double T, double K) {
  const double disc = std::exp(-r * (T - t));
  std::vector<double> out(static_cast<std::size_t>(s_T.rows()));
  for (Eigen::Index i = 0; i < s_T.rows(); ++i) out[static_cast<std::size_t>(i)] = disc * std::max(s_T.row(i).sum() - K, 0.0);
  return out;
}

struct SobolG {
  CopulaSpec spec;
};

struct ExpectedShortfall {
  double level = 0.99;
  std::vector<Margin> margins{Margin::standard_normal()};
};

struct Allocation {
  Eigen::Index component = 0;
  double level = 0.99;
  std::vector<Margin> margins{Margin::standard_normal()};
};

struct BasketCall {
  double r = 0.01;
  double t = 0.0;
  double T = 1.0;
  double K = 100.0;
  std::vector<double> spots{100.0};
  std::vector<double> vols{0.2};

  /// Lognormal terminal-price margins under the risk-neutral drift.
  std::vector<Margin> margins() const {
    if (spots.size() != vols.size()) throw ValidationError("basket call: spots and vols differ in length");
    std::vector<Margin> m;
    for (std::size_t j = 0; j < spots.size(); ++j) {
      const double tau = T - t;
      m.push_back(Margin::lognormal(std::log(spots[j]) + (r - 0.5 * vols[j] * vols[j]) * tau, vols[j] * std::sqrt(tau)));
    }
    return m;
  }
};

/// Psi(u) = prod_j u_j, a smooth integrand with mean 2^-d under independence.
struct Product {};

/// User-supplied rowwise integrand on the unit hypercube.
struct Custom {
  std::string name;
  std::function<double(std::span<const double>)> psi;
};

using Functional = std::variant<SobolG, ExpectedShortfall, Allocation, BasketCall, Product, Custom>;

inline std::string functional_name(const Functional& f) {
  return std::visit(copula::Overloaded{[](const SobolG&) { return std::string("sobol_g"); },
                                       [](const ExpectedShortfall&) { return std::string("expected_shortfall"); },
                                       [](const Allocation&) { return std::string("allocation"); },
                                       [](const BasketCall&) { return std::string("basket_call"); },
                                       [](const Product&) { return std::string("product"); },
                                       [](const Custom& c) { return c.name; }},
                    f);
}

/// Estimate of the functional from one sample on the unit hypercube.
inline double evaluate(const Functional& f, const Matrix& u) {
  auto mean = [](const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  return std::visit(
      copula::Overloaded{
          [&](const SobolG& s) { return mean(psi_sobol_g(s.spec, u)); },
          [&](const ExpectedShortfall& s) { return es_estimate(detail::row_sums(apply_margins(u, s.margins)), s.level); },
          [&](const Allocation& s) { return allocation_estimate(apply_margins(u, s.margins), s.level, s.component); },
          [&](const BasketCall& s) { return mean(basket_call_payoff(apply_margins(u, s.margins()), s.r, s.t, s.T, s.K)); },
          [&](const Product&) {
            double total = 0.0;
            for (Eigen::Index i = 0; i < u.rows(); ++i) total += u.row(i).prod();
            return total / static_cast<double>(u.rows());
          },
          [&](const Custom& c) {
            double total = 0.0;
            for (Eigen::Index i = 0; i < u.rows(); ++i) {
              total += c.psi(std::span<const double>(u.row(i).data(), static_cast<std::size_t>(u.cols())));
            }
            return total / static_cast<double>(u.rows());
          }},
      f);
}

enum class Method { copula_prs, copula_qrs, gmmn_prs, gmmn_qrs };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::copula_prs: return "copula_PRS";
    case Method::copula_qrs: return "copula_QRS";
    case Method::gmmn_prs: return "gmmn_PRS";
    case Method::gmmn_qrs: return "gmmn_QRS";
  }
  return "?";
}

/// Accepts "copula-prs", "copula_PRS" and similar spellings.
inline Method method_from_string(std::string s) {
  for (auto& c : s) c = static_cast<char>(c == '-' ? '_' : std::tolower(static_cast<unsigned char>(c)));
  if (s == "copula_prs") return Method::copula_prs;
  if (s == "copula_qrs") return Method::copula_qrs;
  if (s == "gmmn_prs") return Method::gmmn_prs;
  if (s == "gmmn_qrs") return Method::gmmn_qrs;
  throw ValidationError("unknown method '" + s + "'");
}

inline bool is_quasi(Method m) { return m == Method::copula_qrs || m == Method::gmmn_qrs; }

/// Where samples come from. Copula methods need `spec`, GMMN methods `model`.
struct Source {
  Method method = Method::copula_prs;
  std::optional<CopulaSpec> spec;
  const gmmn::TrainedModel* model = nullptr;
  qmc::Randomization randomization = qmc::Randomization::scrambled;
  std::uint64_t seed = 0;
  copula::InverseOptions inverse;
};

/// Scramble seed of replication b.
inline std::uint64_t replication_seed(std::uint64_t base, std::uint64_t b) {
  return qmc::detail::mix64(base ^ 0x51525321ull) + b;
}

inline void check_source(const Source& src) {
  const bool copula_side = src.method == Method::copula_prs || src.method == Method::copula_qrs;
  if (copula_side && !src.spec) throw ValidationError(to_string(src.method) + ": copula spec required");
  if (!copula_side && src.model == nullptr) throw ValidationError(to_string(src.method) + ": trained model required");
  if (is_quasi(src.method) && src.randomization == qmc::Randomization::raw) {
    throw ValidationError(to_string(src.method) + ": raw point sets are refused; randomize them");
  }
  if (src.method == Method::copula_qrs && !copula::has_inverse_rosenblatt(*src.spec, src.inverse)) {
    throw UnsupportedError("copula_QRS: no conditional distribution method available for " +
                           copula::family_name(*src.spec) + " (NA)");
  }
}

/// Sample of size n for replication b: PRS uses stream id b, QRS scramble seed b.
inline Matrix generate(const Source& src, std::size_t n, std::uint64_t b) {
  check_source(src);
  switch (src.method) {
    case Method::copula_prs: {
      dist::RngStream stream(src.seed, b);
      return copula::sample(*src.spec, n, stream);
    }
    case Method::copula_qrs: {
      const auto ps = qmc::sobol(copula::dimension(*src.spec), n, src.randomization, replication_seed(src.seed, b));
      const Matrix v = ps.points.unaryExpr([](double u) { return copula::clamp_open(u); });
      return copula::inverse_rosenblatt(*src.spec, v, src.inverse);
    }
    case Method::gmmn_prs: {
      dist::RngStream stream(src.seed, b);
      return gmmn::generate_pseudo(*src.model, n, stream);
    }
    case Method::gmmn_qrs: {
      const auto ps = qmc::sobol(src.model->input_dim(), n, src.randomization, replication_seed(src.seed, b));
      return gmmn::generate_quasi(*src.model, ps);
    }
  }
  throw ValidationError("unknown method");
}

inline double run_estimator(const Functional& f, const Source& src, std::size_t n, std::uint64_t b) {
  return evaluate(f, generate(src, n, b));
}

inline double sample_mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double sample_variance(const std::vector<double>& v) {
  if (v.size() < 2) throw ValidationError("sample variance needs at least two replications");
  const double m = sample_mean(v);
  double ss = 0.0;
  for (const double x : v) ss += (x - m) * (x - m);
  return ss / static_cast<double>(v.size() - 1);
}

inline double sample_sd(const std::vector<double>& v) { return std::sqrt(sample_variance(v)); }

/// Variance ratio var(mc) / var(rqmc); +infinity (with a warning) when the
/// RQMC replications do not vary.
inline double vrf(const std::vector<double>& mc, const std::vector<double>& rqmc) {
  const double num = sample_variance(mc);
  const double den = sample_variance(rqmc);
  if (den == 0.0) {
    std::cerr << "warning: vrf: RQMC estimates have zero variance; reporting +inf\n";
    return std::numeric_limits<double>::infinity();
  }
  return num / den;
}

/// round(2^(lo + k/2)) for k = 0 .. 2 (hi - lo).
inline std::vector<std::size_t> n_grid(int lo_exp = 10, int hi_exp = 18) {
  std::vector<std::size_t> grid;
  for (int k = 0; k <= 2 * (hi_exp - lo_exp); ++k) {
    grid.push_back(static_cast<std::size_t>(std::llround(std::pow(2.0, lo_exp + 0.5 * k))));
  }
  return grid;
}

struct RateFit {
  double alpha = 0.0;      // sd ~ n^-alpha
  double intercept = 0.0;  // log sd at n = 1
  double r_squared = 0.0;
};

/// Ordinary least squares of log sd on log n.
inline RateFit fit_rate(const std::vector<double>& n, const std::vector<double>& sd) {
  if (n.size() != sd.size() || n.size() < 2) throw ValidationError("fit_rate: need at least two grid points");
  std::vector<double> x, y;
  for (std::size_t i = 0; i < n.size(); ++i) {
    if (!(sd[i] > 0.0)) throw ValidationError("fit_rate: standard deviations must be positive");
    x.push_back(std::log(n[i]));
    y.push_back(std::log(sd[i]));
  }
  const double mx = sample_mean(x), my = sample_mean(y);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw ValidationError("fit_rate: grid needs distinct sizes");
  const double slope = sxy / sxx;
  RateFit fit;
  fit.alpha = -slope;
  fit.intercept = my - slope * mx;
  fit.r_squared = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
  return fit;
}

struct EstimateRow {
  std::string method;
  std::size_t n = 0;
  std::size_t replication = 0;
  double estimate = 0.0;
};

struct SummaryRow {
  std::string method;
  std::size_t n = 0;
  double mean = 0.0;
  double sd = 0.0;
};

struct FitRow {
  std::string method;
  RateFit fit;
};

struct EstimatorReport {
  std::string functional;
  std::vector<EstimateRow> estimates;
  std::vector<SummaryRow> summary;
  std::vector<FitRow> fits;

  std::vector<double> replications(const std::string& method, std::size_t n) const {
    std::vector<double> v;
    for (const auto& r : estimates) {
      if (r.method == method && r.n == n) v.push_back(r.estimate);
    }
    return v;
  }

  const SummaryRow& summary_at(const std::string& method, std::size_t n) const {
    for (const auto& s : summary) {
      if (s.method == method && s.n == n) return s;
    }
    throw ValidationError("report: no summary for " + method + " at n = " + std::to_string(n));
  }

  const RateFit& fit(const std::string& method) const {
    for (const auto& f : fits) {
      if (f.method == method) return f.fit;
    }
    throw ValidationError("report: no fit for " + method);
  }
};

/// B replications of every source at every grid size, per-size sd and the
/// fitted convergence rate.
inline EstimatorReport convergence_study(const Functional& f, const std::vector<Source>& sources,
                                         const std::vector<std::size_t>& grid, std::size_t B) {
  if (B < 2) throw ValidationError("convergence_study: B must be at least 2");
  if (grid.size() < 2) throw ValidationError("convergence_study: grid needs at least two sizes");
  for (const auto& s : sources) check_source(s);
  EstimatorReport rep;
  rep.functional = functional_name(f);
  for (const auto& src : sources) {
    const std::string tag = to_string(src.method);
    std::vector<double> ns, sds;
    for (const std::size_t n : grid) {
      std::vector<double> est;
      for (std::size_t b = 0; b < B; ++b) {
        est.push_back(run_estimator(f, src, n, b));
        rep.estimates.push_back({tag, n, b, est.back()});
      }
      rep.summary.push_back({tag, n, sample_mean(est), sample_sd(est)});
      ns.push_back(static_cast<double>(n));
      sds.push_back(rep.summary.back().sd);
    }
    rep.fits.push_back({tag, fit_rate(ns, sds)});
  }
  return rep;
}

}  // namespace gmmnqmc::estimate

// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "gmmnqmc/config.hpp"
#include "gmmnqmc/copula_cdf.hpp"
#include "gmmnqmc/copula_sampling.hpp"
#include "gmmnqmc/empirical.hpp"
#include "gmmnqmc/estimate.hpp"
#include "gmmnqmc/gmmn.hpp"
#include "gmmnqmc/gof.hpp"
#include "gmmnqmc/qmc.hpp"
#include "gmmnqmc/rosenblatt.hpp"

using namespace gmmnqmc;
using copula::CopulaSpec;
using estimate::Method;
using estimate::Source;

namespace {

struct Outcome {
  bool ok = true;
  std::ostringstream note;

  void check(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      note << " [failed: " << what << "]";
    }
  }
};

const boost::math::normal_distribution<double> kStdNormal;

Matrix uniforms(Eigen::Index n, Eigen::Index d, dist::RngStream& s) {
  Matrix m(n, d);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = s.next_uniform();
  return m;
}

Matrix normals(Eigen::Index n, Eigen::Index d, dist::RngStream& s) {
  Matrix m(n, d);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist::normal(s);
  return m;
}

Matrix draw(const CopulaSpec& spec, std::size_t n, std::uint64_t seed, std::uint64_t stream = 0) {
  dist::RngStream s(seed, stream);
  return copula::sample(spec, n, s);
}

double quantile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  return v[static_cast<std::size_t>(std::ceil(p * static_cast<double>(v.size()))) - 1];
}

Source copula_source(Method m, const CopulaSpec& spec, std::uint64_t seed) {
  Source s;
  s.method = m;
  s.spec = spec;
  s.seed = seed;
  return s;
}

Source gmmn_source(Method m, const gmmn::TrainedModel& model, std::uint64_t seed) {
  Source s;
  s.method = m;
  s.model = &model;
  s.seed = seed;
  return s;
}

// Cramer-von Mises statistics of B replications against the target copula.
std::vector<double> s_n(const Source& src, const CopulaSpec& target, std::size_t n, std::size_t B) {
  std::vector<double> out;
  for (std::size_t b = 0; b < B; ++b) {
    out.push_back(gof::cvm_one_sample(copula::pseudo_observations(estimate::generate(src, n, b)), target));
  }
  return out;
}

const CopulaSpec kClayton2 = copula::Clayton{2, 2.0};

// Shared between criteria 8, 9 and 10.
std::optional<gmmn::TrainedModel> g_model;

void criterion_1(Outcome& o) {
  const gmmn::KernelSpec k;
  const double h = 1e-6;
  double worst = 0.0;
  dist::RngStream shapes(11, 0);
  for (std::uint64_t c = 0; c < 20; ++c) {
    const int p = 1 + static_cast<int>(shapes.next_below(3));
    const int width = 1 + static_cast<int>(shapes.next_below(6));
    const int d = 1 + static_cast<int>(shapes.next_below(3));
    gmmn::NetParams net = gmmn::glorot_init({p, width, d}, 100 + c);
    dist::RngStream s(200 + c, 0);
    for (auto& l : net.layers) {
      for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias(i) = 0.2 * (s.next_uniform() - 0.5);
    }
    const Matrix z = normals(8, p, s);
    const Matrix x = uniforms(8, d, s);
    const gmmn::Gradient g = gmmn::mmd_gradient(net, z, x, k).grad;
    auto loss = [&] { return gmmn::mmd(x, gmmn::forward(net, z), k); };
    auto check = [&](double analytic, double& param) {
      const double keep = param;
      param = keep + h;
      const double up = loss();
      param = keep - h;
      const double down = loss();
      param = keep;
      const double fd = (up - down) / (2 * h);
      worst = std::max(worst, std::abs(fd - analytic) / std::max({std::abs(fd), std::abs(analytic), 1e-6}));
    };
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      for (Eigen::Index i = 0; i < net.layers[l].weights.size(); ++i) {
        check(g.weights[l].data()[i], net.layers[l].weights.data()[i]);
      }
      for (Eigen::Index i = 0; i < net.layers[l].bias.size(); ++i) check(g.bias[l](i), net.layers[l].bias(i));
    }
  }
  o.note << "worst relative error " << worst;
  o.check(worst < 1e-4, "relative error < 1e-4");
}

void criterion_2(Outcome& o) {
  dist::RngStream s(21, 0);
  double self = 0.0;
  bool symmetric = true, nonneg = true;
  for (int rep = 0; rep < 100; ++rep) {
    const auto d = static_cast<Eigen::Index>(1 + s.next_below(4));
    const Matrix x = uniforms(static_cast<Eigen::Index>(20 + s.next_below(200)), d, s);
    const Matrix y = rep % 2 == 0 ? uniforms(static_cast<Eigen::Index>(20 + s.next_below(200)), d, s)
                                  : Matrix(x.array().square());
    self = std::max({self, gmmn::mmd(x, x), gmmn::mmd(y, y)});
    symmetric = symmetric && gmmn::mmd(x, y) == gmmn::mmd(y, x);
    nonneg = nonneg && gmmn::mmd(x, y) >= 0.0;
  }
  o.note << "max mmd(X,X) " << self;
  o.check(self <= 1e-7, "mmd(X,X) <= 1e-7");
  o.check(symmetric, "symmetry");
  o.check(nonneg, "nonnegativity");
}

void criterion_3(Outcome& o) {
  int checked = 0;
  for (const auto r : {qmc::Randomization::raw, qmc::Randomization::scrambled, qmc::Randomization::digital_shift}) {
    for (const int p : {1, 2, 5, 16}) {
      const Matrix pts = qmc::sobol(p, 1 << 12, r, 31).points;
      for (int m = 4; m <= 12; ++m) {
        const long bins = 1L << m;
        for (int j = 0; j < p; ++j) {
          std::set<long> seen;
          for (long i = 0; i < bins; ++i) seen.insert(static_cast<long>(std::floor(pts(i, j) * static_cast<double>(bins))));
          o.check(static_cast<long>(seen.size()) == bins && *seen.begin() == 0 && *seen.rbegin() == bins - 1,
                  qmc::to_string(r) + " p=" + std::to_string(p) + " m=" + std::to_string(m));
          ++checked;
        }
      }
    }
  }
  o.note << checked << " coordinate prefixes stratified";
}

void criterion_4(Outcome& o) {
  const CopulaSpec indep = copula::Independence{2};
  const std::vector<Source> src{copula_source(Method::copula_prs, indep, 41), copula_source(Method::copula_qrs, indep, 41)};
  const auto rep = estimate::convergence_study(estimate::Product{}, src, estimate::n_grid(10, 18), 25);
  const std::size_t n = 1 << 14;
  const double sd_mc = rep.summary_at("copula_PRS", n).sd, sd_qmc = rep.summary_at("copula_QRS", n).sd;
  const double a_mc = rep.fit("copula_PRS").alpha, a_qmc = rep.fit("copula_QRS").alpha;
  o.note << "sd MC " << sd_mc << " sd QMC " << sd_qmc << " alpha MC " << a_mc << " alpha QMC " << a_qmc;
  o.check(sd_qmc < sd_mc / 4.0, "sd QMC < sd MC / 4");
  o.check(a_mc >= 0.40 && a_mc <= 0.60, "alpha MC in [0.40, 0.60]");
  o.check(a_qmc > 0.8, "alpha QMC > 0.8");
}

void criterion_5(Outcome& o) {
  const double clayton = copula::cdf(kClayton2, {0.5, 0.5});
  const double gumbel = copula::cdf(copula::Gumbel{2, 2.0}, {0.5, 0.5});
  o.check(std::abs(clayton - 1.0 / std::sqrt(7.0)) < 1e-12 && std::abs(clayton - 0.377964) < 5e-7, "Clayton cdf");
  o.check(std::abs(gumbel - std::pow(2.0, -std::numbers::sqrt2)) < 1e-12 && std::abs(gumbel - 0.375214) < 5e-7,
          "Gumbel cdf");

  const Matrix v = draw(copula::Independence{3}, 2000, 51);
  double round_trip = 0.0;
  for (const CopulaSpec& spec : {CopulaSpec{copula::Clayton{3, 2.0}},
                                 CopulaSpec{copula::TCopula{4.0, copula::equicorrelation(3, 0.5)}}}) {
    round_trip = std::max(round_trip, (copula::rosenblatt(spec, copula::inverse_rosenblatt(spec, v)) - v).cwiseAbs().maxCoeff());
    const Matrix u = draw(spec, 2000, 52);
    round_trip = std::max(round_trip, (copula::inverse_rosenblatt(spec, copula::rosenblatt(spec, u)) - u).cwiseAbs().maxCoeff());
  }
  const Matrix v2 = v.leftCols(2);
  const copula::Gumbel g{2, 2.0};
  round_trip = std::max(
      round_trip, (copula::rosenblatt(g, copula::inverse_rosenblatt(g, v2, {.numeric_gumbel = true})) - v2).cwiseAbs().maxCoeff());
  o.check(round_trip < 1e-10, "Rosenblatt round trip < 1e-10");

  double worst_tau = 0.0;
  std::uint64_t seed = 53;
  for (const double tau : {0.25, 0.5, 0.75}) {
    const double mo = 2.0 * tau / (1.0 + tau);  // alpha/(2 - alpha) = tau
    const double rho = copula::tau_to_param(copula::TauFamily::elliptical, tau);
    for (const CopulaSpec& spec :
         {CopulaSpec{copula::Clayton{2, copula::tau_to_param(copula::TauFamily::clayton, tau)}},
          CopulaSpec{copula::Gumbel{2, copula::tau_to_param(copula::TauFamily::gumbel, tau)}},
          CopulaSpec{copula::TCopula{4.0, copula::equicorrelation(2, rho)}}, CopulaSpec{copula::MarshallOlkin{mo, mo}}}) {
      const double err = std::abs(copula::kendall_tau(draw(spec, 100'000, seed++), 0, 1) - tau);
      worst_tau = std::max(worst_tau, err);
      o.check(err < 0.01, copula::family_name(spec) + " tau " + std::to_string(tau));
    }
  }
  o.note << "cdf " << clayton << ", " << gumbel << "; round trip " << round_trip << "; worst tau error " << worst_tau;
}

void criterion_6(Outcome& o) {
  const double rho = copula::tau_to_param(copula::TauFamily::elliptical, 0.5);
  for (const int d : {2, 5}) {
    for (const CopulaSpec& spec :
         {CopulaSpec{copula::TCopula{4.0, copula::equicorrelation(d, rho)}}, CopulaSpec{copula::Clayton{d, 2.0}}}) {
      const std::vector<Source> src{copula_source(Method::copula_prs, spec, 61), copula_source(Method::copula_qrs, spec, 61)};
      const auto rep = estimate::convergence_study(estimate::SobolG{spec}, src, {1 << 13, 1 << 14}, 25);
      for (const auto* m : {"copula_PRS", "copula_QRS"}) {
        const double mean = rep.summary_at(m, 1 << 14).mean;
        o.note << copula::family_name(spec) << " d=" << d << " " << m << " " << mean << "; ";
        o.check(std::abs(mean - 1.0) < 0.02, copula::family_name(spec) + " " + m);
      }
    }
  }
}

void criterion_7(Outcome& o) {
  const double q = boost::math::quantile(kStdNormal, 0.99);
  const double exact = 2.0 * boost::math::pdf(kStdNormal, q) / 0.01;
  dist::RngStream s(71, 0);
  const Matrix u = uniforms(1'000'000, 1, s);
  Matrix uu(u.rows(), 2);
  uu << u, u;
  const double es = estimate::evaluate(estimate::ExpectedShortfall{}, uu);
  o.check(std::abs(exact - 5.3305) < 1e-4, "closed form 5.3305");
  o.check(std::abs(es - 5.3305) < 0.05, "ES within 0.05 of 5.3305");

  // Black-Scholes, S = K = 100, r = 0.01, sigma = 0.2, T = 1.
  const double sig = 0.2, r = 0.01, T = 1.0;
  const double d1 = (r + 0.5 * sig * sig) * T / (sig * std::sqrt(T)), d2 = d1 - sig * std::sqrt(T);
  const double bs = 100.0 * (boost::math::cdf(kStdNormal, d1) - std::exp(-r * T) * boost::math::cdf(kStdNormal, d2));
  const estimate::BasketCall call{r, 0.0, T, 100.0, {100.0}, {sig}};
  const Matrix v = uniforms(1'000'000, 1, s);
  const auto pay = estimate::basket_call_payoff(estimate::apply_margins(v, call.margins()), call.r, call.t, call.T, call.K);
  const double price = estimate::evaluate(call, v);
  const double se = estimate::sample_sd(pay) / 1000.0;
  o.check(std::abs(bs - 8.433) < 1e-3, "Black-Scholes 8.433");
  o.check(std::abs(price - bs) < 3.0 * se, "basket call within 3 sigma");
  o.note << "ES " << es << " (exact " << exact << "); call " << price << " vs " << bs << " (sigma " << se << ")";
}

void criterion_8(Outcome& o) {
  const std::uint64_t seed = 1;
  gmmn::TrainConfig tc = config::parse_train(config::json(), "desk", seed);
  tc.validate();
  const Matrix x = draw(kClayton2, tc.n_trn, seed * 4);
  g_model = gmmn::train(x, tc);
  const auto& trace = g_model->loss_trace;
  o.note << "loss " << trace.front() << " -> " << trace.back();
  o.check(trace.back() < trace.front(), "epoch loss decreases");

  const Matrix target = draw(kClayton2, 5000, 81);
  dist::RngStream gs(82, 0);
  const Matrix gen = gmmn::generate_pseudo(*g_model, 5000, gs);
  const Matrix indep = draw(copula::Independence{2}, 5000, 83);
  const double m_gen = gmmn::mmd(target, gen), m_ind = gmmn::mmd(target, indep);
  o.note << "; mmd gmmn " << m_gen << " vs independence " << m_ind;
  o.check(m_gen < 0.5 * m_ind, "mmd(target, GMMN) < 0.5 mmd(target, independence)");

  const double s_gmmn = gof::median(s_n(gmmn_source(Method::gmmn_prs, *g_model, seed), kClayton2, 1000, 30));
  const double s_cop = gof::median(s_n(copula_source(Method::copula_prs, kClayton2, seed), kClayton2, 1000, 30));
  o.note << "; median S_n GMMN PRS " << s_gmmn << " copula PRS " << s_cop;
  o.check(s_gmmn < 5.0 * s_cop && s_cop < 5.0 * s_gmmn, "S_n medians within a factor 5");
}

void criterion_9(Outcome& o) {
  if (!g_model) {
    o.check(false, "no trained model");
    return;
  }
  const auto prs = gmmn_source(Method::gmmn_prs, *g_model, 1), qrs = gmmn_source(Method::gmmn_qrs, *g_model, 1);
  const auto s_prs = s_n(prs, kClayton2, 1000, 30), s_qrs = s_n(qrs, kClayton2, 1000, 30);
  const double p = gof::rank_test_less(s_qrs, s_prs);
  o.note << "median S_n QRS " << gof::median(s_qrs) << " PRS " << gof::median(s_prs) << " p=" << p;
  o.check(gof::median(s_qrs) < gof::median(s_prs) && p < 0.05, "QRS S_n below PRS at level 0.05");

  const auto rep = estimate::convergence_study(estimate::SobolG{kClayton2}, {prs, qrs}, estimate::n_grid(10, 15), 25);
  const double a_prs = rep.fit("gmmn_PRS").alpha, a_qrs = rep.fit("gmmn_QRS").alpha;
  o.note << "; alpha PRS " << a_prs << " QRS " << a_qrs;
  o.check(a_qrs > a_prs, "alpha QRS > alpha PRS");
  for (const auto n : estimate::n_grid(10, 15)) {
    if (n < (1u << 12)) continue;
    o.check(rep.summary_at("gmmn_QRS", n).sd < rep.summary_at("gmmn_PRS", n).sd, "sd QRS < sd PRS at n=" + std::to_string(n));
  }
}

void criterion_10(Outcome& o) {
  const std::size_t n = 10'000, B = 50;
  const estimate::ExpectedShortfall es;
  auto vrf_of = [&](const Source& mc, const Source& qmc) {
    std::vector<double> a, b;
    for (std::size_t k = 0; k < B; ++k) {
      a.push_back(estimate::run_estimator(es, mc, n, k));
      b.push_back(estimate::run_estimator(es, qmc, n, k));
    }
    return estimate::vrf(a, b);
  };
  const double v_cop = vrf_of(copula_source(Method::copula_prs, kClayton2, 1), copula_source(Method::copula_qrs, kClayton2, 1));
  o.note << "VRF copula " << v_cop;
  o.check(v_cop > 2.0, "copula VRF > 2");
  if (!g_model) {
    o.check(false, "no trained model");
    return;
  }
  const double v_gmmn = vrf_of(gmmn_source(Method::gmmn_prs, *g_model, 1), gmmn_source(Method::gmmn_qrs, *g_model, 1));
  o.note << " GMMN " << v_gmmn;
  o.check(v_gmmn > 2.0, "GMMN VRF > 2");
}

void criterion_11(Outcome& o) {
  const Matrix u = copula::pseudo_observations(draw(kClayton2, 500, 111));
  o.check(gof::cvm_two_sample(u, u) <= 1e-10, "zero on identical inputs");

  // Midpoint rule on a 200 x 200 grid; exact for points on multiples of 1/200.
  auto grid = [](const Matrix& a, const Matrix& b) {
    const int g = 200;
    double integral = 0.0;
    for (int i = 0; i < g; ++i) {
      for (int j = 0; j < g; ++j) {
        const double x = (i + 0.5) / g, y = (j + 0.5) / g;
        const double diff = copula::empirical_copula(a, {x, y}) - copula::empirical_copula(b, {x, y});
        integral += diff * diff;
      }
    }
    integral /= g * g;
    return integral / (1.0 / static_cast<double>(a.rows()) + 1.0 / static_cast<double>(b.rows()));
  };
  dist::RngStream s(112, 0);
  double worst = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    Matrix a(static_cast<Eigen::Index>(3 + s.next_below(10)), 2), b(static_cast<Eigen::Index>(3 + s.next_below(10)), 2);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = static_cast<double>(1 + s.next_below(199)) / 200.0;
    for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = static_cast<double>(1 + s.next_below(199)) / 200.0;
    const double oracle = grid(a, b);
    const double rel = std::abs(gof::cvm_two_sample(a, b) - oracle) / std::max(oracle, 1e-12);
    worst = std::max(worst, rel);
  }
  o.check(worst <= 1e-3, "grid oracle agreement 1e-3");

  const CopulaSpec clayton = copula::Clayton{2, copula::tau_to_param(copula::TauFamily::clayton, 0.5)};
  const CopulaSpec gumbel = copula::Gumbel{2, copula::tau_to_param(copula::TauFamily::gumbel, 0.5)};
  std::vector<double> same, cross;
  for (std::uint64_t b = 0; b < 50; ++b) {
    const Matrix trn = copula::pseudo_observations(draw(clayton, 2000, 113, b));
    same.push_back(gof::cvm_two_sample(copula::pseudo_observations(draw(clayton, 2000, 114, b)), trn));
    cross.push_back(gof::cvm_two_sample(copula::pseudo_observations(draw(gumbel, 2000, 115, b)), trn));
  }
  o.note << "grid relative error " << worst << "; median cross " << gof::median(cross) << " vs same 95% "
         << quantile(same, 0.95);
  o.check(gof::median(cross) > quantile(same, 0.95), "Clayton vs Gumbel separation");
}

void criterion_12(Outcome& o) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "gmmnqmc_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const config::json cfg = {
      {"copula",
       {{"family", "nested_gumbel"},
        {"theta0", 1.5},
        {"children", {{{"theta", 2.0}, {"indices", {0, 1}}}, {{"theta", 3.0}, {"indices", {2, 3}}}}}}},
      {"sample", {{"mode", "copula_qrs"}, {"n", 128}}}};
  std::ofstream(dir / "config.json") << cfg.dump(2);
  const std::string cmd = std::string("\"") + GMMNQMC_CLI_PATH + "\" sample --config \"" + (dir / "config.json").string() +
                          "\" --out \"" + (dir / "out").string() + "\" 2> \"" + (dir / "stderr.txt").string() + "\"";
  const int status = std::system(cmd.c_str());
  const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  o.note << "exit code " << code;
  o.check(code == 3, "exit code 3");
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    double budget_s;  // 0: no runtime bound
    std::function<void(Outcome&)> run;
  };
  const std::vector<Criterion> criteria{
      {1, 10, criterion_1},  {2, 0, criterion_2},      {3, 5, criterion_3},     {4, 60, criterion_4},
      {5, 60, criterion_5},  {6, 120, criterion_6},    {7, 60, criterion_7},    {8, 1200, criterion_8},
      {9, 900, criterion_9}, {10, 600, criterion_10}, {11, 300, criterion_11}, {12, 0, criterion_12},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.run(o);
    } catch (const std::exception& e) {
      o.check(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget_s > 0) o.check(secs < c.budget_s, "runtime < " + std::to_string(static_cast<int>(c.budget_s)) + " s");
    failed += !o.ok;
    std::printf("criterion %2d: %s  (%.1f s)  %s\n", c.id, o.ok ? "PASS" : "FAIL", secs, o.note.str().c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}

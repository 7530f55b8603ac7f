#pragma once

// Generative moment matching network: training and sampling.

#include <cmath>
#include <cstdio>
#include <numeric>
#include <string>
#include <vector>

#include "gmmnqmc/copula_sampling.hpp"
#include "gmmnqmc/empirical.hpp"
#include "gmmnqmc/mmd.hpp"
#include "gmmnqmc/nn.hpp"
#include "gmmnqmc/qmc.hpp"

namespace gmmnqmc::gmmn {

enum class InputLaw { normal, uniform };
enum class Loss { mmd, mmd2 };

inline std::string to_string(InputLaw l) { return l == InputLaw::normal ? "normal" : "uniform"; }
inline std::string to_string(Loss l) { return l == Loss::mmd ? "mmd" : "mmd2"; }

inline InputLaw input_law_from_string(const std::string& s) {
  if (s == "normal") return InputLaw::normal;
  if (s == "uniform") return InputLaw::uniform;
  throw ValidationError("unknown input law '" + s + "'");
}

inline Loss loss_from_string(const std::string& s) {
  if (s == "mmd") return Loss::mmd;
  if (s == "mmd2") return Loss::mmd2;
  throw ValidationError("unknown loss '" + s + "'");
}

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  std::size_t n_trn = 20000;
  std::size_t n_bat = 2000;
  std::size_t n_epo = 100;
  std::vector<int> hidden{64};
  Activation hidden_activation = Activation::relu;
  Activation output_activation = Activation::sigmoid;
  int input_dim = 0;  // 0: same as the data dimension
  InputLaw input_law = InputLaw::normal;
  KernelSpec kernel;
  AdamConfig adam;
  Loss loss = Loss::mmd;
  double mmd_floor = 1e-12;
  bool cache_input = false;  // draw Z once instead of every epoch
  std::uint64_t init_seed = 1;
  std::uint64_t shuffle_seed = 2;
  std::uint64_t input_seed = 3;

  void validate() const {
    if (n_bat < 1 || n_bat > n_trn) throw ValidationError("train: need 1 <= n_bat <= n_trn");
    if (n_trn % n_bat != 0) throw ValidationError("train: n_bat must divide n_trn");
    if (n_epo < 1) throw ValidationError("train: n_epo must be positive");
    if (hidden.empty() || hidden.size() > 3) throw ValidationError("train: between 1 and 3 hidden layers");
    for (const int h : hidden) {
      if (h < 1) throw ValidationError("train: hidden widths must be positive");
    }
    if (input_dim < 0) throw ValidationError("train: input_dim must be nonnegative");
    if (!(adam.lr > 0.0) || !(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) ||
        !(adam.eps > 0.0)) {
      throw ValidationError("train: invalid Adam hyperparameters");
    }
    if (!(mmd_floor > 0.0)) throw ValidationError("train: mmd_floor must be positive");
    kernel.validate();
  }
};

/// Single hidden layer of 300 units, 60000 training points, batches of 5000, 300 epochs.
inline TrainConfig paper_preset() {
  TrainConfig c;
  c.n_trn = 60000;
  c.n_bat = 5000;
  c.n_epo = 300;
  c.hidden = {300};
  return c;
}

/// Reduced profile for a single CPU core.
inline TrainConfig desk_preset() { return TrainConfig{}; }

inline TrainConfig preset(const std::string& name) {
  if (name == "paper") return paper_preset();
  if (name == "desk") return desk_preset();
  throw ValidationError("unknown preset '" + name + "' (expected paper or desk)");
}

struct TrainedModel {
  NetParams params;
  KernelSpec kernel;
  InputLaw input_law = InputLaw::normal;
  std::string config_hash;
  std::vector<double> loss_trace;  // mean batch MMD per epoch

  int input_dim() const { return params.input_dim(); }
  int output_dim() const { return params.output_dim(); }
};

inline std::string config_fingerprint(const TrainConfig& c) {
  std::string s;
  char buf[64];
  auto put = [&](const char* fmt, auto v) {
    std::snprintf(buf, sizeof buf, fmt, v);
    s += buf;
  };
  put("%zu;", c.n_trn);
  put("%zu;", c.n_bat);
  put("%zu;", c.n_epo);
  for (const int h : c.hidden) put("h%d;", h);
  s += to_string(c.hidden_activation) + ";" + to_string(c.output_activation) + ";";
  put("%d;", c.input_dim);
  s += to_string(c.input_law) + ";" + to_string(c.loss) + ";";
  for (const double b : c.kernel.bandwidths) put("%.17g;", b);
  put("%.17g;", c.adam.lr);
  put("%.17g;", c.adam.beta1);
  put("%.17g;", c.adam.beta2);
  put("%.17g;", c.adam.eps);
  put("%.17g;", c.mmd_floor);
  put("%d;", static_cast<int>(c.cache_input));
  put("%llu;", static_cast<unsigned long long>(c.init_seed));
  put("%llu;", static_cast<unsigned long long>(c.shuffle_seed));
  put("%llu", static_cast<unsigned long long>(c.input_seed));
  return s;
}

/// FNV-1a of the canonical config string, as 16 hex digits.
inline std::string config_hash(const TrainConfig& c) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const unsigned char ch : config_fingerprint(c)) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Map uniforms in (0,1) to the network input law.
inline Matrix input_from_uniform(InputLaw law, const Matrix& v) {
  if (law == InputLaw::uniform) return v;
  return v.unaryExpr([](double u) { return dist::normal_quantile(u); });
}

inline Matrix draw_input(InputLaw law, std::size_t n, int p, dist::RngStream& stream) {
  Matrix v(static_cast<Eigen::Index>(n), p);
  for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = stream.next_uniform();
  return input_from_uniform(law, v);
}

/// Loss and parameter gradient for one batch.
struct BatchGradient {
  double mmd = 0.0;
  Gradient grad;
};

/// Gradient of MMD(X, f(Z)) (or MMD^2) with respect to all weights and biases.
inline BatchGradient mmd_gradient(const NetParams& net, const Matrix& z, const Matrix& x,
                                  const KernelSpec& kernel, Loss loss = Loss::mmd, double mmd_floor = 1e-12) {
  if (z.rows() == 0 || x.rows() == 0) throw ValidationError("mmd_gradient: empty batch");
  const ForwardTrace trace = forward_trace(net, z);
  const MmdValueGrad vg = mmd_squared_grad(x, trace.output(), kernel);
  BatchGradient out;
  out.mmd = std::sqrt(std::max(0.0, vg.mmd2));
  const double scale = loss == Loss::mmd ? 1.0 / (2.0 * std::max(out.mmd, mmd_floor)) : 1.0;
  out.grad = backward(net, trace, scale * vg.grad_y);
  return out;
}

class Adam {
 public:
  Adam(const NetParams& net, AdamConfig cfg) : cfg_(cfg) {
    for (const auto& l : net.layers) {
      mw_.push_back(Matrix::Zero(l.weights.rows(), l.weights.cols()));
      vw_.push_back(Matrix::Zero(l.weights.rows(), l.weights.cols()));
      mb_.push_back(Vector::Zero(l.bias.size()));
      vb_.push_back(Vector::Zero(l.bias.size()));
    }
  }

  void step(NetParams& net, const Gradient& g) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      update(net.layers[l].weights, g.weights[l], mw_[l], vw_[l], c1, c2);
      update(net.layers[l].bias, g.bias[l], mb_[l], vb_[l], c1, c2);
    }
  }

 private:
  template <class P, class G, class S>
  void update(P& param, const G& grad, S& m, S& v, double c1, double c2) const {
    m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * grad;
    v = (cfg_.beta2 * v.array() + (1.0 - cfg_.beta2) * grad.array().square()).matrix();
    param.array() -= cfg_.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg_.eps);
  }

  AdamConfig cfg_;
  std::uint64_t t_ = 0;
  std::vector<Matrix> mw_, vw_;
  std::vector<Vector> mb_, vb_;
};

namespace detail {

inline std::vector<Eigen::Index> permutation(std::size_t n, dist::RngStream& stream) {
  std::vector<Eigen::Index> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(stream.next_below(i));
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

inline Matrix gather(const Matrix& m, const std::vector<Eigen::Index>& idx, std::size_t lo, std::size_t len) {
  Matrix out(static_cast<Eigen::Index>(len), m.cols());
  for (std::size_t i = 0; i < len; ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(idx[lo + i]);
  return out;
}

}  // namespace detail

/// Mini-batch Adam on the MMD between training rows and network outputs.
/// Progress callback receives (epoch, mean batch MMD).
template <class Progress>
TrainedModel train(const Matrix& x, const TrainConfig& cfg, Progress&& progress) {
  cfg.validate();
  if (static_cast<std::size_t>(x.rows()) != cfg.n_trn) {
    throw ValidationError("train: data has " + std::to_string(x.rows()) + " rows but n_trn is " +
                          std::to_string(cfg.n_trn));
  }
  if ((x.array() <= 0.0).any() || (x.array() >= 1.0).any() || !x.allFinite()) {
    throw ValidationError("train: training data must lie in (0,1)^d");
  }
  const int d = static_cast<int>(x.cols());
  const int p = cfg.input_dim > 0 ? cfg.input_dim : d;
  std::vector<int> dims{p};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(d);

  TrainedModel model;
  model.params = glorot_init(dims, cfg.init_seed, cfg.hidden_activation, cfg.output_activation);
  model.kernel = cfg.kernel;
  model.input_law = cfg.input_law;
  model.config_hash = config_hash(cfg);

  Adam adam(model.params, cfg.adam);
  const std::size_t batches = cfg.n_trn / cfg.n_bat;
  Matrix z;
  for (std::size_t epoch = 0; epoch < cfg.n_epo; ++epoch) {
    if (epoch == 0 || !cfg.cache_input) {
      dist::RngStream zs(cfg.input_seed, cfg.cache_input ? 0 : epoch);
      z = draw_input(cfg.input_law, cfg.n_trn, p, zs);
    }
    dist::RngStream shuffle(cfg.shuffle_seed, epoch);
    const auto px = detail::permutation(cfg.n_trn, shuffle);
    const auto pz = detail::permutation(cfg.n_trn, shuffle);
    double total = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      const Matrix xb = detail::gather(x, px, b * cfg.n_bat, cfg.n_bat);
      const Matrix zb = detail::gather(z, pz, b * cfg.n_bat, cfg.n_bat);
      const BatchGradient bg = mmd_gradient(model.params, zb, xb, cfg.kernel, cfg.loss, cfg.mmd_floor);
      total += bg.mmd;
      adam.step(model.params, bg.grad);
    }
    model.loss_trace.push_back(total / static_cast<double>(batches));
    progress(epoch + 1, model.loss_trace.back());
  }
  return model;
}

inline TrainedModel train(const Matrix& x, const TrainConfig& cfg) {
  return train(x, cfg, [](std::size_t, double) {});
}

/// Pseudo-random GMMN sample: network applied to i.i.d. input draws.
inline Matrix generate_pseudo(const TrainedModel& model, std::size_t n, dist::RngStream& stream,
                              bool pseudo_obs = false) {
  if (n == 0) return Matrix(0, model.output_dim());
  const Matrix y = forward(model.params, draw_input(model.input_law, n, model.input_dim(), stream));
  return pseudo_obs ? copula::pseudo_observations(y) : y;
}

/// Quasi-random GMMN sample: network applied to the transformed point set.
inline Matrix generate_quasi(const TrainedModel& model, const qmc::PointSet& points, bool pseudo_obs = false) {
  if (points.randomization == qmc::Randomization::raw) {
    throw ValidationError(
        "generate_quasi: raw point sets are refused; the origin has no finite normal quantile. "
        "Use a scrambled or digitally shifted point set");
  }
  if (points.dimension() != model.input_dim()) {
    throw ValidationError("generate_quasi: point set dimension " + std::to_string(points.dimension()) +
                          " does not match model input dimension " + std::to_string(model.input_dim()));
  }
  if (points.size() == 0) return Matrix(0, model.output_dim());
  const Matrix v = points.points.unaryExpr([](double u) { return copula::clamp_open(u); });
  const Matrix y = forward(model.params, input_from_uniform(model.input_law, v));
  return pseudo_obs ? copula::pseudo_observations(y) : y;
}

}  // namespace gmmnqmc::gmmn

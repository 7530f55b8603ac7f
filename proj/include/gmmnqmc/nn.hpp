#pragma once

// Fully connected feed-forward network with hand-written backpropagation.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "gmmnqmc/dist.hpp"
#include "gmmnqmc/error.hpp"
#include "gmmnqmc/matrix.hpp"

namespace gmmnqmc::gmmn {

enum class Activation { relu, sigmoid, linear, tanh, softplus };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::linear: return "linear";
    case Activation::tanh: return "tanh";
    case Activation::softplus: return "softplus";
  }
  return "?";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "linear") return Activation::linear;
  if (s == "tanh") return Activation::tanh;
  if (s == "softplus") return Activation::softplus;
  throw ValidationError("unknown activation '" + s + "'");
}

/// One layer a_out = phi(a_in W^T + b); W is out x in.
struct Layer {
  Matrix weights;
  Vector bias;
  Activation activation = Activation::relu;

  int in_dim() const { return static_cast<int>(weights.cols()); }
  int out_dim() const { return static_cast<int>(weights.rows()); }
};

struct NetParams {
  std::vector<Layer> layers;

  int input_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }
  int output_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }

  std::vector<int> layer_dims() const {
    std::vector<int> dims{input_dim()};
    for (const auto& l : layers) dims.push_back(l.out_dim());
    return dims;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
    return n;
  }

  bool operator==(const NetParams& o) const {
    if (layers.size() != o.layers.size()) return false;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& a = layers[i];
      const auto& b = o.layers[i];
      if (a.activation != b.activation || a.weights.rows() != b.weights.rows() ||
          a.weights.cols() != b.weights.cols() || a.weights != b.weights || a.bias != b.bias) {
        return false;
      }
    }
    return true;
  }
};

namespace detail {

inline double sigmoid(double x) {
  // Kept strictly inside (0,1) so outputs are valid copula samples.
  constexpr double lo = 0x1.0p-1022;
  constexpr double hi = 1.0 - 0x1.0p-53;
  const double s = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  return std::clamp(s, lo, hi);
}

inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

inline void activate(Activation a, const Matrix& pre, Matrix& out) {
  switch (a) {
    case Activation::relu: out = pre.cwiseMax(0.0); break;
    case Activation::sigmoid: out = pre.unaryExpr([](double x) { return sigmoid(x); }); break;
    case Activation::linear: out = pre; break;
    case Activation::tanh: out = pre.array().tanh().matrix(); break;
    case Activation::softplus: out = pre.unaryExpr([](double x) { return softplus(x); }); break;
  }
}

// Multiplies grad in place by phi'(pre), using the post-activation where cheaper.
inline void activation_backward(Activation a, const Matrix& pre, const Matrix& post, Matrix& grad) {
  switch (a) {
    case Activation::relu:
      grad.array() *= (pre.array() > 0.0).cast<double>();  // relu'(0) = 0
      break;
    case Activation::sigmoid: grad.array() *= post.array() * (1.0 - post.array()); break;
    case Activation::linear: break;
    case Activation::tanh: grad.array() *= 1.0 - post.array().square(); break;
    case Activation::softplus: grad.array() *= pre.unaryExpr([](double x) { return sigmoid(x); }).array(); break;
  }
}

}  // namespace detail

/// Layers of widths dims[0] -> ... -> dims.back(); hidden layers use `hidden`,
/// the last one `output`.
inline NetParams make_network(const std::vector<int>& dims, Activation hidden, Activation output) {
  if (dims.size() < 2) throw ValidationError("network: need at least input and output widths");
  for (const int d : dims) {
    if (d < 1) throw ValidationError("network: layer widths must be positive");
  }
  NetParams net;
  for (std::size_t l = 1; l < dims.size(); ++l) {
    Layer layer;
    layer.weights = Matrix::Zero(dims[l], dims[l - 1]);
    layer.bias = Vector::Zero(dims[l]);
    layer.activation = l + 1 == dims.size() ? output : hidden;
    net.layers.push_back(std::move(layer));
  }
  return net;
}

/// Glorot uniform weights U(-sqrt(6/(fan_in+fan_out)), +...), zero biases.
inline NetParams glorot_init(const std::vector<int>& dims, std::uint64_t seed,
                             Activation hidden = Activation::relu, Activation output = Activation::sigmoid) {
  NetParams net = make_network(dims, hidden, output);
  dist::RngStream stream(seed, 0);
  for (auto& layer : net.layers) {
    const double bound = std::sqrt(6.0 / (layer.in_dim() + layer.out_dim()));
    for (Eigen::Index i = 0; i < layer.weights.size(); ++i) {
      layer.weights.data()[i] = bound * (2.0 * stream.next_uniform() - 1.0);
    }
  }
  return net;
}

/// Activations of every layer for backpropagation; post[0] is the input.
struct ForwardTrace {
  std::vector<Matrix> pre;
  std::vector<Matrix> post;
  const Matrix& output() const { return post.back(); }
};

inline ForwardTrace forward_trace(const NetParams& net, const Matrix& z) {
  if (net.layers.empty()) throw ValidationError("forward: empty network");
  if (z.cols() != net.input_dim()) {
    throw ValidationError("forward: input has " + std::to_string(z.cols()) + " columns, network expects " +
                          std::to_string(net.input_dim()));
  }
  ForwardTrace t;
  t.post.push_back(z);
  for (const auto& layer : net.layers) {
    Matrix h = t.post.back() * layer.weights.transpose();
    h.rowwise() += layer.bias.transpose();
    Matrix a;
    detail::activate(layer.activation, h, a);
    t.pre.push_back(std::move(h));
    t.post.push_back(std::move(a));
  }
  return t;
}

inline Matrix forward(const NetParams& net, const Matrix& z) { return forward_trace(net, z).post.back(); }

/// Same shapes as the network, holding derivatives.
struct Gradient {
  std::vector<Matrix> weights;
  std::vector<Vector> bias;
};

/// Pull dL/d(output) back through the recorded trace.
inline Gradient backward(const NetParams& net, const ForwardTrace& t, Matrix grad_out) {
  Gradient g;
  g.weights.resize(net.layers.size());
  g.bias.resize(net.layers.size());
  for (std::size_t l = net.layers.size(); l-- > 0;) {
    const auto& layer = net.layers[l];
    detail::activation_backward(layer.activation, t.pre[l], t.post[l + 1], grad_out);
    g.weights[l] = grad_out.transpose() * t.post[l];
    g.bias[l] = grad_out.colwise().sum().transpose();
    if (l > 0) grad_out = grad_out * layer.weights;
  }
  return g;
}

}  // namespace gmmnqmc::gmmn

#pragma once

// Versioned plain-text model files. Numbers are written with 17 significant
// digits so that a save/load round trip is bitwise exact.

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gmmnqmc/gmmn.hpp"

namespace gmmnqmc::gmmn {

inline constexpr const char* kModelSchema = "gmmnqmc-model";
inline constexpr int kModelVersion = 1;

namespace detail {

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  std::string word() {
    std::string w;
    if (!(in_ >> w)) throw SchemaError("model file: unexpected end of file");
    return w;
  }

  void expect(const std::string& key) {
    const std::string w = word();
    if (w != key) throw SchemaError("model file: expected '" + key + "', found '" + w + "'");
  }

  double number() {
    const std::string w = word();
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(w.c_str(), &end);
    if (end == w.c_str() || *end != '\0' || errno == ERANGE) {
      throw SchemaError("model file: malformed number '" + w + "'");
    }
    return v;
  }

  long long integer(long long lo, long long hi) {
    const std::string w = word();
    char* end = nullptr;
    const long long v = std::strtoll(w.c_str(), &end, 10);
    if (end == w.c_str() || *end != '\0' || v < lo || v > hi) {
      throw SchemaError("model file: bad integer '" + w + "'");
    }
    return v;
  }

 private:
  std::istream& in_;
};

}  // namespace detail

inline void write_model(std::ostream& out, const TrainedModel& m) {
  out << kModelSchema << ' ' << kModelVersion << '\n';
  out << "input_law " << to_string(m.input_law) << '\n';
  out << "config_hash " << (m.config_hash.empty() ? "-" : m.config_hash) << '\n';
  out << "kernel " << m.kernel.bandwidths.size();
  for (const double s : m.kernel.bandwidths) out << ' ' << detail::fmt17(s);
  out << '\n';
  out << "layers " << m.params.layers.size() << '\n';
  for (const auto& l : m.params.layers) {
    out << "layer " << l.out_dim() << ' ' << l.in_dim() << ' ' << to_string(l.activation) << '\n';
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) out << (c ? " " : "") << detail::fmt17(l.weights(r, c));
      out << '\n';
    }
    out << "bias";
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) out << ' ' << detail::fmt17(l.bias[r]);
    out << '\n';
  }
  out << "loss_trace " << m.loss_trace.size();
  for (const double v : m.loss_trace) out << ' ' << detail::fmt17(v);
  out << "\nend\n";
}

inline TrainedModel read_model(std::istream& in) {
  detail::Reader r(in);
  r.expect(kModelSchema);
  const auto version = r.integer(0, 1'000'000);
  if (version != kModelVersion) {
    throw SchemaError("model file: version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kModelVersion) + ")");
  }
  TrainedModel m;
  r.expect("input_law");
  try {
    m.input_law = input_law_from_string(r.word());
  } catch (const SchemaError&) {
    throw;
  } catch (const ValidationError& e) {
    throw SchemaError(std::string("model file: ") + e.what());
  }
  r.expect("config_hash");
  m.config_hash = r.word();
  if (m.config_hash == "-") m.config_hash.clear();
  r.expect("kernel");
  const auto nk = r.integer(1, 1000);
  m.kernel.bandwidths.clear();
  for (long long k = 0; k < nk; ++k) m.kernel.bandwidths.push_back(r.number());
  try {
    m.kernel.validate();
  } catch (const ValidationError& e) {
    throw SchemaError(std::string("model file: ") + e.what());
  }
  r.expect("layers");
  const auto nl = r.integer(1, 16);
  int prev_out = -1;
  for (long long l = 0; l < nl; ++l) {
    r.expect("layer");
    const auto rows = r.integer(1, 1'000'000);
    const auto cols = r.integer(1, 1'000'000);
    if (prev_out >= 0 && cols != prev_out) throw SchemaError("model file: layer shapes do not chain");
    Layer layer;
    try {
      layer.activation = activation_from_string(r.word());
    } catch (const SchemaError&) {
      throw;
    } catch (const ValidationError& e) {
      throw SchemaError(std::string("model file: ") + e.what());
    }
    layer.weights.resize(rows, cols);
    for (Eigen::Index i = 0; i < layer.weights.size(); ++i) layer.weights.data()[i] = r.number();
    r.expect("bias");
    layer.bias.resize(rows);
    for (Eigen::Index i = 0; i < rows; ++i) layer.bias[i] = r.number();
    prev_out = static_cast<int>(rows);
    m.params.layers.push_back(std::move(layer));
  }
  r.expect("loss_trace");
  const auto nt = r.integer(0, 100'000'000);
  for (long long k = 0; k < nt; ++k) m.loss_trace.push_back(r.number());
  r.expect("end");
  return m;
}

inline void save_model(const TrainedModel& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot open '" + path + "' for writing");
  write_model(out, m);
  if (!out) throw RuntimeFailure("failed writing '" + path + "'");
}

/// Parses the whole file before returning; a corrupt file yields SchemaError
/// and no model.
inline TrainedModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw RuntimeFailure("cannot open model file '" + path + "'");
  return read_model(in);
}

}  // namespace gmmnqmc::gmmn

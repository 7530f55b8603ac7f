#pragma once

// Seed-addressable random streams and the univariate distributions used by
// the samplers, the network input law and the risk functionals.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "gmmnqmc/error.hpp"

namespace gmmnqmc::dist {

namespace detail {

// Philox4x32-10 (Salmon et al., "Parallel random numbers: as easy as 1, 2, 3").
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                               std::array<std::uint32_t, 2> key) {
  constexpr std::uint64_t kM0 = 0xD2511F53u;
  constexpr std::uint64_t kM1 = 0xCD9E8D57u;
  constexpr std::uint32_t kW0 = 0x9E3779B9u;
  constexpr std::uint32_t kW1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = kM0 * ctr[0];
    const std::uint64_t p1 = kM1 * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kW0;
    key[1] += kW1;
  }
  return ctr;
}

}  // namespace detail

/// Counter-based random stream. The output at `position` is a pure function of
/// (seed, stream_id, position), so streams never share state and can be
/// cloned onto any worker.
class RngStream {
 public:
  RngStream() = default;
  RngStream(std::uint64_t seed, std::uint64_t stream_id) : seed_(seed), stream_id_(stream_id) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }
  std::uint64_t position() const { return position_; }

  /// Same seed, different stream.
  RngStream split(std::uint64_t stream_id) const { return RngStream(seed_, stream_id); }

  std::uint64_t next_u64() {
    const std::uint64_t block = position_ >> 1;
    if (!cached_ || block != cached_block_) {
      const std::array<std::uint32_t, 4> ctr{
          static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32),
          static_cast<std::uint32_t>(stream_id_), static_cast<std::uint32_t>(stream_id_ >> 32)};
      const std::array<std::uint32_t, 2> key{static_cast<std::uint32_t>(seed_),
                                             static_cast<std::uint32_t>(seed_ >> 32)};
      buffer_ = detail::philox4x32(ctr, key);
      cached_block_ = block;
      cached_ = true;
    }
    const std::size_t half = (position_ & 1u) * 2;
    ++position_;
    return (static_cast<std::uint64_t>(buffer_[half]) << 32) | buffer_[half + 1];
  }

  /// Uniform on the open interval (0,1), 53-bit resolution.
  double next_uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Uniform integer in [0, bound) by rejection, bound >= 1.
  std::uint64_t next_below(std::uint64_t bound) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % bound;
  }

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t stream_id_ = 0;
  std::uint64_t position_ = 0;
  std::uint64_t cached_block_ = 0;
  bool cached_ = false;
  std::array<std::uint32_t, 4> buffer_{};
};

inline std::vector<double> uniform(RngStream& stream, std::size_t n) {
  std::vector<double> out(n);
  for (auto& u : out) u = stream.next_uniform();
  return out;
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

inline double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

/// Inverse of the standard normal cdf: Acklam's rational approximation
/// followed by one Halley step against erfc.
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw DomainError("normal_quantile: p must lie in (0,1), got " + std::to_string(p));
  }
  if (p > 0.5) return -normal_quantile(1.0 - p);  // 1-p is exact here

  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};

  double x;
  if (p < 0.02425) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  }
  const double e = normal_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

inline double normal(RngStream& stream) { return normal_quantile(stream.next_uniform()); }

inline double exponential(RngStream& stream, double rate = 1.0) {
  return -std::log(stream.next_uniform()) / rate;
}

inline double student_t_cdf(double x, double dof) {
  if (!(dof > 0.0)) throw DomainError("student_t_cdf: dof must be positive");
  if (std::isinf(x)) return x > 0 ? 1.0 : 0.0;
  return boost::math::cdf(boost::math::students_t_distribution<double>(dof), x);
}

inline double student_t_quantile(double p, double dof) {
  if (!(dof > 0.0)) throw DomainError("student_t_quantile: dof must be positive");
  if (!(p > 0.0 && p < 1.0)) throw DomainError("student_t_quantile: p must lie in (0,1)");
  return boost::math::quantile(boost::math::students_t_distribution<double>(dof), p);
}

/// Gamma(shape, rate) by the Marsaglia-Tsang squeeze; shape < 1 is boosted
/// through Gamma(shape + 1) * U^(1/shape).
inline double gamma_variate(RngStream& stream, double shape, double rate = 1.0) {
  if (!(shape > 0.0) || !(rate > 0.0)) {
    throw DomainError("gamma_variate: shape and rate must be positive");
  }
  if (shape < 1.0) {
    const double g = gamma_variate(stream, shape + 1.0, 1.0);
    return g * std::pow(stream.next_uniform(), 1.0 / shape) / rate;
  }
  const double dd = shape - 1.0 / 3.0;
  const double cc = 1.0 / std::sqrt(9.0 * dd);
  for (;;) {
    double x, v;
    do {
      x = normal(stream);
      v = 1.0 + cc * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = stream.next_uniform();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return dd * v / rate;
    if (std::log(u) < 0.5 * x2 + dd * (1.0 - v + std::log(v))) return dd * v / rate;
  }
}

inline double chi_square(RngStream& stream, double dof) {
  if (!(dof > 0.0)) throw DomainError("chi_square: dof must be positive");
  return gamma_variate(stream, 0.5 * dof, 0.5);
}

/// One-sided stable variate S with Laplace transform E exp(-tS) = exp(-t^alpha),
/// via Kanter's representation of the Chambers-Mallows-Stuck formula.
inline double positive_stable(RngStream& stream, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw DomainError("positive_stable: alpha must lie in (0,1]");
  }
  if (alpha == 1.0) return 1.0;
  const double u = std::numbers::pi * stream.next_uniform();
  const double e = exponential(stream);
  // log of Zolotarev's A(u)^(1-alpha), kept in log space so alpha -> 1 stays finite
  const double log_a = alpha * std::log(std::sin(alpha * u)) +
                       (1.0 - alpha) * std::log(std::sin((1.0 - alpha) * u)) -
                       std::log(std::sin(u));
  return std::exp(log_a / alpha - (1.0 - alpha) / alpha * std::log(e));
}

inline constexpr std::uint64_t kTiltedStableRetryCap = 1'000'000;

/// Exponentially tilted one-sided stable variate: density proportional to
/// exp(-tilt * s) times the positive_stable(alpha) density, so that
/// E exp(-tV) = exp(-((tilt + t)^alpha - tilt^alpha)). Simple rejection with
/// acceptance probability exp(-tilt^alpha).
inline double tilted_positive_stable(RngStream& stream, double alpha, double tilt) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw DomainError("tilted_positive_stable: alpha must lie in (0,1)");
  }
  if (!(tilt >= 0.0)) throw DomainError("tilted_positive_stable: tilt must be nonnegative");
  if (tilt == 0.0) return positive_stable(stream, alpha);
  for (std::uint64_t attempt = 0; attempt < kTiltedStableRetryCap; ++attempt) {
    const double s = positive_stable(stream, alpha);
    if (stream.next_uniform() <= std::exp(-tilt * s)) return s;
  }
  throw RuntimeFailure("tilted_positive_stable: rejection retry cap exceeded (tilt^alpha = " +
                       std::to_string(std::pow(tilt, alpha)) + ")");
}

}  // namespace gmmnqmc::dist

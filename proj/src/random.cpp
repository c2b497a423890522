#include "bnp/random.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "bnp/errors.hpp"

namespace bnp {

RandomStream::RandomStream(std::uint64_t seed, std::uint64_t stream_id)
    : state_(0),
      increment_((stream_id << 1u) | 1u),
      seed_(seed),
      stream_id_(stream_id) {
  next_u32();
  state_ += seed;
  next_u32();
}

std::uint32_t RandomStream::next_u32() {
  const std::uint64_t old = state_;
  state_ = old * 6364136223846793005ULL + increment_;
  const auto xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
  const auto rot = static_cast<std::uint32_t>(old >> 59u);
  return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
}

double RandomStream::uniform() {
  const std::uint64_t hi = next_u32();
  const std::uint64_t lo = next_u32();
  return static_cast<double>(((hi << 32u) | lo) >> 11u) * 0x1.0p-53;
}

double RandomStream::normal() {
  const double u1 = 1.0 - uniform();  // (0, 1], keeps the log finite
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

double RandomStream::normal(double mean, double sd) {
  if (!(sd >= 0.0)) throw UsageError("normal: sd must be nonnegative");
  return mean + sd * normal();
}

double RandomStream::gamma(double shape, double rate) {
  if (!(shape > 0.0) || !(rate > 0.0))
    throw UsageError("gamma: shape and rate must be positive");
  if (shape < 1.0) {
    const double u = 1.0 - uniform();
    return gamma(shape + 1.0, rate) * std::pow(u, 1.0 / shape);
  }
  // Marsaglia & Tsang squeeze method.
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    const double x = normal();
    const double t = 1.0 + c * x;
    if (t <= 0.0) continue;
    const double v = t * t * t;
    const double u = 1.0 - uniform();
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v)))
      return d * v / rate;
  }
}

double RandomStream::beta(double a, double b) {
  if (!(a > 0.0) || !(b > 0.0))
    throw UsageError("beta: both shapes must be positive");
  // Inverse CDF when one shape is 1; exact even for tiny opposite shape.
  if (b == 1.0) return std::exp(std::log1p(-uniform()) / a);
  if (a == 1.0) return 1.0 - std::exp(std::log1p(-uniform()) / b);
  const double x = gamma(a, 1.0);
  const double y = gamma(b, 1.0);
  return x / (x + y);
}

std::vector<double> RandomStream::dirichlet(
    const std::vector<double>& concentration) {
  if (concentration.empty()) throw UsageError("dirichlet: empty concentration");
  std::vector<double> out(concentration.size());
  double total = 0.0;
  for (std::size_t i = 0; i < concentration.size(); ++i) {
    out[i] = gamma(concentration[i], 1.0);
    total += out[i];
  }
  if (total <= 0.0) {
    // Tiny shapes can underflow every coordinate; fall back to the argmax
    // of the log-scale draws, which is the correct limiting behavior.
    out.assign(out.size(), 0.0);
    out[0] = 1.0;
    return out;
  }
  for (double& v : out) v /= total;
  return out;
}

long RandomStream::poisson_small(double mean) {
  const double limit = std::exp(-mean);
  long count = -1;
  double product = 1.0;
  do {
    ++count;
    product *= uniform();
  } while (product > limit);
  return count;
}

long RandomStream::poisson(double mean) {
  if (!(mean >= 0.0)) throw UsageError("poisson: mean must be nonnegative");
  if (mean == 0.0) return 0;
  long total = 0;
  while (mean > 30.0) {  // Poisson(a+b) = Poisson(a) + Poisson(b)
    total += poisson_small(30.0);
    mean -= 30.0;
  }
  return total + poisson_small(mean);
}

int RandomStream::categorical(const std::vector<double>& weights) {
  if (weights.empty()) throw UsageError("categorical: empty weight vector");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw UsageError("categorical: negative weight");
    total += w;
  }
  if (!(total > 0.0)) throw UsageError("categorical: weights sum to zero");
  double u = uniform() * total;
  for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
    u -= weights[i];
    if (u < 0.0) return static_cast<int>(i);
  }
  return static_cast<int>(weights.size() - 1);
}

int RandomStream::categorical_from_log(
    const std::vector<double>& log_weights) {
  if (log_weights.empty())
    throw UsageError("categorical_from_log: empty weight vector");
  double max_log = -std::numeric_limits<double>::infinity();
  for (double lw : log_weights) max_log = std::max(max_log, lw);
  if (max_log == -std::numeric_limits<double>::infinity())
    throw UsageError("categorical_from_log: all weights are zero");
  std::vector<double> weights(log_weights.size());
  for (std::size_t i = 0; i < log_weights.size(); ++i)
    weights[i] = std::exp(log_weights[i] - max_log);
  return categorical(weights);
}

}  // namespace bnp

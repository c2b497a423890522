#pragma once

#include <cstdint>
#include <vector>

namespace bnp {

// Seeded random stream with an explicit stream id, so that independent
// chains can share one seed without sharing draws.
//
// Generator pinning: the uniform source is PCG-XSH-RR 64/32 (pcg32) with
// the stream id selecting the increment, and all conversions to
// distributions are fixed algorithms implemented here (Box-Muller normal,
// Marsaglia-Tsang gamma, inverse-CDF beta for unit shapes, chunked Knuth
// Poisson). Equal (seed, stream_id) therefore reproduces bit-identical
// sequences across runs and platforms.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed, std::uint64_t stream_id = 0);

  std::uint32_t next_u32();

  /// Uniform on [0, 1) with 53-bit resolution.
  double uniform();

  /// Standard normal via Box-Muller (two uniforms per draw).
  double normal();
  double normal(double mean, double sd);

  /// Gamma with given shape and rate (mean shape/rate).
  double gamma(double shape, double rate = 1.0);

  double beta(double a, double b);

  std::vector<double> dirichlet(const std::vector<double>& concentration);

  long poisson(double mean);

  /// Index draw proportional to nonnegative weights.
  int categorical(const std::vector<double>& weights);

  /// Index draw proportional to exp(log_weights), max-shifted.
  int categorical_from_log(const std::vector<double>& log_weights);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

 private:
  long poisson_small(double mean);

  std::uint64_t state_;
  std::uint64_t increment_;
  std::uint64_t seed_;
  std::uint64_t stream_id_;
};

}  // namespace bnp

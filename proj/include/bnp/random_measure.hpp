#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "bnp/gaussian.hpp"
#include "bnp/random.hpp"

namespace bnp {

enum class MeasureKind {
  probability,     // weights sum to 1 (after truncation closure)
  bounded_weight,  // each weight in (0,1]; no sum constraint
};

struct RandomMeasure {
  std::vector<double> weights;
  std::vector<double> atoms;
  MeasureKind kind = MeasureKind::probability;
};

/// Stick-breaking weights pi_k = beta_k * prod_{j<k} (1 - beta_j) for the
/// given break fractions. Callers wanting a probability measure must close
/// the truncation with a final break of 1.
std::vector<double> gem_weights_from_breaks(std::span<const double> breaks);

/// Random truncated stick-breaking weights: beta_k ~ Beta(1, alpha) for
/// k < T and beta_T = 1, so the result always sums to 1.
std::vector<double> gem_weights(double alpha, std::size_t T,
                                RandomStream& stream);

/// Decreasing stick remainders pi_k = prod_{j<=k} (1 - beta_j).
std::vector<double> bp_weights_from_breaks(std::span<const double> breaks);

/// Truncated feature-weight sticks: beta_j ~ Beta(1, alpha), weights are the
/// running remainders. Strictly decreasing, not normalized; the truncation
/// understates the process's total mass.
std::vector<double> bp_stick_weights(double alpha, std::size_t T,
                                     RandomStream& stream);

/// Truncated atomic probability measure: gem_weights plus atoms drawn
/// i.i.d. from the base prior over means.
RandomMeasure draw_dp_measure(double alpha, const NormalNormalModel& base,
                              std::size_t T, RandomStream& stream);

/// Index of one atom sampled by weight.
std::size_t sample_atom(const RandomMeasure& measure, RandomStream& stream);

/// Half-open interval [lo, hi); use infinities for the outer regions.
struct Interval {
  double lo;
  double hi;
};

struct MomentReport {
  std::vector<double> mean;
  std::vector<double> expected_mean;      // base mass of each region
  std::vector<double> variance;
  std::vector<double> expected_variance;  // m (1 - m) / (alpha + 1)
  double max_mean_deviation = 0.0;
  double max_variance_deviation = 0.0;
};

/// Empirical first and second moments of the random vector of region masses
/// against the Dirichlet moments they must follow. Regions must tile the
/// whole line with no overlap.
MomentReport dp_marginal_check(double alpha, const NormalNormalModel& base,
                               std::span<const Interval> regions,
                               std::size_t draws, RandomStream& stream);

/// Independent Bernoulli indicator per atom of a bounded-weight measure.
std::vector<int> draw_bernoulli_process(const RandomMeasure& measure,
                                        RandomStream& stream);

std::string measure_to_json(const RandomMeasure& measure);

}  // namespace bnp

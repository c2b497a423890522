#include "bnp/random_measure.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "bnp/errors.hpp"

namespace bnp {

std::vector<double> gem_weights_from_breaks(std::span<const double> breaks) {
  if (breaks.empty()) throw UsageError("gem_weights_from_breaks: no breaks");
  std::vector<double> weights(breaks.size());
  double remainder = 1.0;
  for (std::size_t k = 0; k < breaks.size(); ++k) {
    const double b = breaks[k];
    if (!(b >= 0.0) || !(b <= 1.0))
      throw UsageError("gem_weights_from_breaks: break outside [0, 1]");
    weights[k] = b * remainder;
    remainder *= 1.0 - b;
  }
  return weights;
}

std::vector<double> gem_weights(double alpha, std::size_t T,
                                RandomStream& stream) {
  if (T < 1) throw UsageError("gem_weights: T must be at least 1");
  if (!(alpha > 0.0)) throw UsageError("gem_weights: alpha must be positive");
  std::vector<double> breaks(T);
  for (std::size_t k = 0; k + 1 < T; ++k) breaks[k] = stream.beta(1.0, alpha);
  breaks[T - 1] = 1.0;  // truncation closure
  return gem_weights_from_breaks(breaks);
}

std::vector<double> bp_weights_from_breaks(std::span<const double> breaks) {
  if (breaks.empty()) throw UsageError("bp_weights_from_breaks: no breaks");
  std::vector<double> weights(breaks.size());
  double remainder = 1.0;
  for (std::size_t k = 0; k < breaks.size(); ++k) {
    const double b = breaks[k];
    if (!(b >= 0.0) || !(b <= 1.0))
      throw UsageError("bp_weights_from_breaks: break outside [0, 1]");
    remainder *= 1.0 - b;
    weights[k] = remainder;
  }
  return weights;
}

std::vector<double> bp_stick_weights(double alpha, std::size_t T,
                                     RandomStream& stream) {
  if (T < 1) throw UsageError("bp_stick_weights: T must be at least 1");
  if (!(alpha > 0.0))
    throw UsageError("bp_stick_weights: alpha must be positive");
  std::vector<double> breaks(T);
  for (std::size_t k = 0; k < T; ++k) breaks[k] = stream.beta(1.0, alpha);
  return bp_weights_from_breaks(breaks);
}

RandomMeasure draw_dp_measure(double alpha, const NormalNormalModel& base,
                              std::size_t T, RandomStream& stream) {
  base.validate();
  RandomMeasure measure;
  measure.kind = MeasureKind::probability;
  measure.weights = gem_weights(alpha, T, stream);
  measure.atoms.resize(T);
  for (double& atom : measure.atoms)
    atom = stream.normal(base.prior_mean, std::sqrt(base.prior_var));
  return measure;
}

std::size_t sample_atom(const RandomMeasure& measure, RandomStream& stream) {
  if (measure.kind != MeasureKind::probability)
    throw UsageError("sample_atom: needs a probability measure");
  return static_cast<std::size_t>(stream.categorical(measure.weights));
}

namespace {

// Truncation deep enough that the expected leftover stick mass, which the
// closure lumps onto the final atom, is below 1e-10.
std::size_t truncation_for(double alpha) {
  const double per_stick = std::log(alpha / (alpha + 1.0));  // negative
  const auto depth =
      static_cast<std::size_t>(std::ceil(-10.0 * std::log(10.0) / per_stick));
  return std::clamp<std::size_t>(depth + 1, 8, 4000);
}

}  // namespace

MomentReport dp_marginal_check(double alpha, const NormalNormalModel& base,
                               std::span<const Interval> regions,
                               std::size_t draws, RandomStream& stream) {
  base.validate();
  if (!(alpha > 0.0))
    throw UsageError("dp_marginal_check: alpha must be positive");
  if (regions.empty() || draws == 0)
    throw UsageError("dp_marginal_check: need regions and draws");

  std::vector<Interval> sorted(regions.begin(), regions.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
  const double inf = std::numeric_limits<double>::infinity();
  if (sorted.front().lo != -inf || sorted.back().hi != inf)
    throw UsageError("dp_marginal_check: regions must cover the whole line");
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (!(sorted[i].lo < sorted[i].hi))
      throw UsageError("dp_marginal_check: empty or inverted region");
    if (i + 1 < sorted.size() && sorted[i].hi != sorted[i + 1].lo)
      throw UsageError("dp_marginal_check: regions overlap or leave a gap");
  }

  const std::size_t R = sorted.size();
  const double sd = std::sqrt(base.prior_var);
  MomentReport report;
  report.expected_mean.resize(R);
  for (std::size_t r = 0; r < R; ++r) {
    const double hi_cdf =
        sorted[r].hi == inf ? 1.0
                            : normal_cdf((sorted[r].hi - base.prior_mean) / sd);
    const double lo_cdf =
        sorted[r].lo == -inf
            ? 0.0
            : normal_cdf((sorted[r].lo - base.prior_mean) / sd);
    report.expected_mean[r] = hi_cdf - lo_cdf;
  }
  report.expected_variance.resize(R);
  for (std::size_t r = 0; r < R; ++r)
    report.expected_variance[r] =
        report.expected_mean[r] * (1.0 - report.expected_mean[r]) /
        (alpha + 1.0);

  const std::size_t T = truncation_for(alpha);
  std::vector<double> sum(R, 0.0), sum_sq(R, 0.0), mass(R);
  for (std::size_t d = 0; d < draws; ++d) {
    const auto measure = draw_dp_measure(alpha, base, T, stream);
    std::fill(mass.begin(), mass.end(), 0.0);
    for (std::size_t k = 0; k < measure.atoms.size(); ++k) {
      const double atom = measure.atoms[k];
      for (std::size_t r = 0; r < R; ++r) {
        if (atom >= sorted[r].lo && atom < sorted[r].hi) {
          mass[r] += measure.weights[k];
          break;
        }
      }
    }
    for (std::size_t r = 0; r < R; ++r) {
      sum[r] += mass[r];
      sum_sq[r] += mass[r] * mass[r];
    }
  }

  report.mean.resize(R);
  report.variance.resize(R);
  const auto n = static_cast<double>(draws);
  for (std::size_t r = 0; r < R; ++r) {
    report.mean[r] = sum[r] / n;
    report.variance[r] =
        (sum_sq[r] - n * report.mean[r] * report.mean[r]) /
        std::max(1.0, n - 1.0);
    report.max_mean_deviation =
        std::max(report.max_mean_deviation,
                 std::abs(report.mean[r] - report.expected_mean[r]));
    report.max_variance_deviation =
        std::max(report.max_variance_deviation,
                 std::abs(report.variance[r] - report.expected_variance[r]));
  }
  return report;
}

std::vector<int> draw_bernoulli_process(const RandomMeasure& measure,
                                        RandomStream& stream) {
  if (measure.kind != MeasureKind::bounded_weight)
    throw UsageError(
        "draw_bernoulli_process: needs a bounded-weight measure, not a "
        "probability measure");
  std::vector<int> indicators(measure.weights.size());
  for (std::size_t k = 0; k < measure.weights.size(); ++k) {
    const double w = measure.weights[k];
    if (!(w > 0.0) || !(w <= 1.0))
      throw UsageError("draw_bernoulli_process: weight outside (0, 1]");
    indicators[k] = stream.uniform() < w ? 1 : 0;
  }
  return indicators;
}

std::string measure_to_json(const RandomMeasure& measure) {
  nlohmann::json j;
  j["kind"] = measure.kind == MeasureKind::probability ? "probability"
                                                       : "bounded-weight";
  j["weights"] = measure.weights;
  j["atoms"] = measure.atoms;
  return j.dump(2);
}

}  // namespace bnp

#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace bnp {

/// Normal likelihood with known observation variance and a Normal prior on
/// the mean. Conjugacy gives closed forms for the posterior, the marginal
/// likelihood, and the posterior predictive.
struct NormalNormalModel {
  double prior_mean = 0.0;
  double prior_var = 1.0;  // > 0
  double obs_var = 1.0;    // > 0

  /// Throws UsageError unless both variances are positive and finite.
  void validate() const;
};

/// Sufficient statistics of a set of scalar observations.
struct GaussianSummary {
  std::size_t count = 0;
  double sum = 0.0;
  double sum_sq = 0.0;

  void add(double y);
  void remove(double y);  // caller guarantees y was previously added
};

struct PosteriorNormal {
  double mean;
  double var;
};

/// log Σ exp(v_i) via max shift; exact for singletons, tolerates -inf entries.
double log_sum_exp(std::span<const double> values);

PosteriorNormal conjugate_posterior(const NormalNormalModel& model,
                                    const GaussianSummary& summary);
PosteriorNormal conjugate_posterior(const NormalNormalModel& model,
                                    std::span<const double> data);

/// log ∫ Π_i N(y_i | θ, obs_var) N(θ | prior_mean, prior_var) dθ.
/// Empty data yields 0 (the vacuous product).
double marginal_likelihood_normal(const NormalNormalModel& model,
                                  const GaussianSummary& summary);
double marginal_likelihood_normal(const NormalNormalModel& model,
                                  std::span<const double> data);

/// Log density of y under the posterior predictive after absorbing summary.
double log_posterior_predictive(const NormalNormalModel& model,
                                const GaussianSummary& summary, double y);

/// Log density of y with no data absorbed: N(y | prior_mean, obs+prior var).
double log_prior_predictive(const NormalNormalModel& model, double y);

double log_normal_pdf(double y, double mean, double var);
double normal_cdf(double x);  // standard normal

}  // namespace bnp

#include "bnp/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "bnp/errors.hpp"

namespace bnp {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
}

void NormalNormalModel::validate() const {
  if (!(prior_var > 0.0) || !std::isfinite(prior_var))
    throw UsageError("NormalNormalModel: prior_var must be positive");
  if (!(obs_var > 0.0) || !std::isfinite(obs_var))
    throw UsageError("NormalNormalModel: obs_var must be positive");
  if (!std::isfinite(prior_mean))
    throw UsageError("NormalNormalModel: prior_mean must be finite");
}

void GaussianSummary::add(double y) {
  ++count;
  sum += y;
  sum_sq += y * y;
}

void GaussianSummary::remove(double y) {
  if (count == 0) throw UsageError("GaussianSummary: remove from empty set");
  --count;
  sum -= y;
  sum_sq -= y * y;
  if (count == 0) {  // clear rounding residue so empty means exactly empty
    sum = 0.0;
    sum_sq = 0.0;
  }
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) throw UsageError("log_sum_exp: empty input");
  double max_v = -std::numeric_limits<double>::infinity();
  for (double v : values) max_v = std::max(max_v, v);
  if (!std::isfinite(max_v)) return max_v;  // all -inf (or a stray +inf)
  double total = 0.0;
  for (double v : values) total += std::exp(v - max_v);
  return max_v + std::log(total);
}

PosteriorNormal conjugate_posterior(const NormalNormalModel& model,
                                    const GaussianSummary& summary) {
  model.validate();
  const double precision =
      1.0 / model.prior_var + static_cast<double>(summary.count) / model.obs_var;
  const double var = 1.0 / precision;
  const double mean =
      var * (model.prior_mean / model.prior_var + summary.sum / model.obs_var);
  return {mean, var};
}

PosteriorNormal conjugate_posterior(const NormalNormalModel& model,
                                    std::span<const double> data) {
  GaussianSummary s;
  for (double y : data) s.add(y);
  return conjugate_posterior(model, s);
}

double marginal_likelihood_normal(const NormalNormalModel& model,
                                  const GaussianSummary& summary) {
  model.validate();
  if (summary.count == 0) return 0.0;
  const auto n = static_cast<double>(summary.count);
  const auto [mean, var] = conjugate_posterior(model, summary);
  const double quad = summary.sum_sq / model.obs_var +
                      model.prior_mean * model.prior_mean / model.prior_var -
                      mean * mean / var;
  return -0.5 * n * (kLog2Pi + std::log(model.obs_var)) +
         0.5 * std::log(var / model.prior_var) - 0.5 * quad;
}

double marginal_likelihood_normal(const NormalNormalModel& model,
                                  std::span<const double> data) {
  GaussianSummary s;
  for (double y : data) s.add(y);
  return marginal_likelihood_normal(model, s);
}

double log_posterior_predictive(const NormalNormalModel& model,
                                const GaussianSummary& summary, double y) {
  const auto [mean, var] = conjugate_posterior(model, summary);
  return log_normal_pdf(y, mean, var + model.obs_var);
}

double log_prior_predictive(const NormalNormalModel& model, double y) {
  model.validate();
  return log_normal_pdf(y, model.prior_mean, model.prior_var + model.obs_var);
}

double log_normal_pdf(double y, double mean, double var) {
  if (!(var > 0.0)) throw UsageError("log_normal_pdf: variance must be positive");
  const double z = y - mean;
  return -0.5 * (kLog2Pi + std::log(var)) - 0.5 * z * z / var;
}

double normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

}  // namespace bnp

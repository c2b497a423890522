#include "bnp/finite_mixture.hpp"

#include <cmath>
#include <string>

#include "bnp/errors.hpp"

namespace bnp {

void FiniteMixtureModel::validate() const {
  if (K < 1) throw UsageError("FiniteMixtureModel: K must be at least 1");
  if (!(dirichlet_concentration > 0.0))
    throw UsageError("FiniteMixtureModel: concentration must be positive");
  base.validate();
}

double dirichlet_multinomial_log_prob(int K, double alpha,
                                      std::span<const int> assignments) {
  if (K < 1 || !(alpha > 0.0))
    throw UsageError("dirichlet_multinomial_log_prob: bad K or alpha");
  const double per_component = alpha / static_cast<double>(K);
  std::vector<std::size_t> counts(static_cast<std::size_t>(K), 0);
  for (int c : assignments) {
    if (c < 1 || c > K)
      throw UsageError("dirichlet_multinomial_log_prob: label out of range");
    ++counts[static_cast<std::size_t>(c) - 1];
  }
  double log_p = std::lgamma(alpha) -
                 std::lgamma(alpha + static_cast<double>(assignments.size()));
  for (std::size_t count : counts) {
    if (count == 0) continue;  // lgamma terms cancel for empty components
    log_p += std::lgamma(per_component + static_cast<double>(count)) -
             std::lgamma(per_component);
  }
  return log_p;
}

double finite_joint_log_prob(const FiniteMixtureModel& model,
                             std::span<const int> assignments,
                             std::span<const double> component_means,
                             std::span<const double> data) {
  model.validate();
  if (assignments.size() != data.size())
    throw UsageError("finite_joint_log_prob: |assignments| must equal |data|");
  if (component_means.size() != static_cast<std::size_t>(model.K))
    throw UsageError("finite_joint_log_prob: need one mean per component");
  double log_p = 0.0;
  for (double theta : component_means)
    log_p += log_normal_pdf(theta, model.base.prior_mean, model.base.prior_var);
  for (std::size_t n = 0; n < data.size(); ++n) {
    const int c = assignments[n];
    if (c < 1 || c > model.K)
      throw UsageError("finite_joint_log_prob: label out of range");
    log_p += log_normal_pdf(data[n],
                            component_means[static_cast<std::size_t>(c) - 1],
                            model.base.obs_var);
  }
  log_p += dirichlet_multinomial_log_prob(
      model.K, model.dirichlet_concentration, assignments);
  return log_p;
}

namespace {

// Collapsed score of a labeled assignment vector: Dirichlet-multinomial
// prior times the per-group Normal marginal likelihoods.
double labeled_log_score(const FiniteMixtureModel& model,
                         std::span<const int> assignments,
                         std::span<const double> data) {
  std::vector<GaussianSummary> groups(static_cast<std::size_t>(model.K));
  for (std::size_t n = 0; n < data.size(); ++n)
    groups[static_cast<std::size_t>(assignments[n]) - 1].add(data[n]);
  double log_p = dirichlet_multinomial_log_prob(
      model.K, model.dirichlet_concentration, assignments);
  for (const auto& g : groups)
    log_p += marginal_likelihood_normal(model.base, g);
  return log_p;
}

}  // namespace

std::map<std::vector<int>, double> exact_assignment_posterior(
    const FiniteMixtureModel& model, std::span<const double> data) {
  model.validate();
  if (data.empty())
    throw UsageError("exact_assignment_posterior: no data");
  const double table_size =
      std::pow(static_cast<double>(model.K), static_cast<double>(data.size()));
  if (table_size > 1e6)
    throw GuardRailError(
        "exact_assignment_posterior: K^N exceeds the 10^6 enumeration cap");

  std::vector<std::vector<int>> keys;
  std::vector<double> log_scores;
  std::vector<int> c(data.size(), 1);
  for (;;) {
    keys.push_back(c);
    log_scores.push_back(labeled_log_score(model, c, data));
    std::size_t pos = 0;
    while (pos < c.size() && c[pos] == model.K) c[pos++] = 1;
    if (pos == c.size()) break;
    ++c[pos];
  }
  const double log_z = log_sum_exp(log_scores);
  std::map<std::vector<int>, double> posterior;
  for (std::size_t i = 0; i < keys.size(); ++i)
    posterior[keys[i]] = std::exp(log_scores[i] - log_z);
  return posterior;
}

std::map<std::vector<int>, double> aggregate_to_partitions(
    const std::map<std::vector<int>, double>& assignment_posterior) {
  std::map<std::vector<int>, double> collapsed;
  for (const auto& [labels, probability] : assignment_posterior)
    collapsed[canonicalize(labels).assignments] += probability;
  return collapsed;
}

double collapsed_marginal_likelihood(const NormalNormalModel& base,
                                     const Partition& partition,
                                     std::span<const double> data) {
  if (partition.n() != data.size())
    throw UsageError(
        "collapsed_marginal_likelihood: partition must cover the data");
  std::vector<GaussianSummary> groups(partition.group_sizes.size());
  for (std::size_t n = 0; n < data.size(); ++n)
    groups[static_cast<std::size_t>(partition.assignments[n]) - 1].add(data[n]);
  double log_p = 0.0;
  for (const auto& g : groups) log_p += marginal_likelihood_normal(base, g);
  return log_p;
}

double collapsed_marginal_likelihood(const FiniteMixtureModel& model,
                                     const Partition& partition,
                                     std::span<const double> data) {
  model.validate();
  return collapsed_marginal_likelihood(model.base, partition, data);
}

FiniteGibbsState finite_gibbs_init(const FiniteMixtureModel& model,
                                   std::span<const double> data,
                                   RandomStream& stream) {
  model.validate();
  FiniteGibbsState state;
  state.summaries.resize(static_cast<std::size_t>(model.K));
  state.assignments.reserve(data.size());
  const std::vector<double> uniform(static_cast<std::size_t>(model.K),
                                    1.0 / static_cast<double>(model.K));
  for (double y : data) {
    const int c = stream.categorical(uniform) + 1;
    state.assignments.push_back(c);
    state.summaries[static_cast<std::size_t>(c) - 1].add(y);
  }
  if (!data.empty())
    state.log_score = labeled_log_score(model, state.assignments, data);
  return state;
}

void finite_gibbs_sweep(FiniteGibbsState& state,
                        const FiniteMixtureModel& model,
                        std::span<const double> data, RandomStream& stream) {
  if (state.assignments.size() != data.size())
    throw UsageError("finite_gibbs_sweep: state does not match data");
  const double per_component =
      model.dirichlet_concentration / static_cast<double>(model.K);
  std::vector<double> log_weights(static_cast<std::size_t>(model.K));
  for (std::size_t n = 0; n < data.size(); ++n) {
    const double y = data[n];
    auto& old_summary =
        state.summaries[static_cast<std::size_t>(state.assignments[n]) - 1];
    old_summary.remove(y);
    for (std::size_t k = 0; k < log_weights.size(); ++k) {
      const auto& s = state.summaries[k];
      log_weights[k] =
          std::log(static_cast<double>(s.count) + per_component) +
          log_posterior_predictive(model.base, s, y);
    }
    const int c = stream.categorical_from_log(log_weights) + 1;
    state.assignments[n] = c;
    state.summaries[static_cast<std::size_t>(c) - 1].add(y);
  }
  state.log_score = labeled_log_score(model, state.assignments, data);
}

std::map<std::vector<int>, double> finite_partition_prior_mc(
    int K, double alpha, std::size_t n, std::size_t draws,
    RandomStream& stream) {
  if (K < 1 || !(alpha > 0.0))
    throw UsageError("finite_partition_prior_mc: bad K or alpha");
  if (n == 0 || n > 6)
    throw UsageError("finite_partition_prior_mc: n must be in 1..6");
  if (draws == 0) throw UsageError("finite_partition_prior_mc: zero draws");
  const std::vector<double> concentration(
      static_cast<std::size_t>(K), alpha / static_cast<double>(K));
  std::map<std::vector<int>, std::size_t> counts;
  std::vector<int> labels(n);
  for (std::size_t d = 0; d < draws; ++d) {
    const auto weights = stream.dirichlet(concentration);
    for (std::size_t i = 0; i < n; ++i)
      labels[i] = stream.categorical(weights) + 1;
    ++counts[canonicalize(labels).assignments];
  }
  std::map<std::vector<int>, double> frequencies;
  for (const auto& [key, count] : counts)
    frequencies[key] =
        static_cast<double>(count) / static_cast<double>(draws);
  return frequencies;
}

}  // namespace bnp

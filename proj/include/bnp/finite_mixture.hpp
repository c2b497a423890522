#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "bnp/gaussian.hpp"
#include "bnp/partition.hpp"
#include "bnp/random.hpp"

namespace bnp {

/// Gaussian mixture with K components, component means drawn from the base
/// prior, and mixing weights integrated out of a symmetric Dirichlet with
/// per-component concentration alpha / K. That scaling makes the induced
/// partition law converge to the CRP with parameter alpha as K grows.
struct FiniteMixtureModel {
  int K = 1;
  double dirichlet_concentration = 1.0;  // total mass alpha, split as alpha/K
  NormalNormalModel base;

  void validate() const;
};

/// Log probability of a specific label sequence (not its counts) with the
/// mixing weights integrated out.
double dirichlet_multinomial_log_prob(int K, double alpha,
                                      std::span<const int> assignments);

/// log of prior(means) * likelihood(data | means, assignments) * prior(c),
/// with assignments scored by the collapsed Dirichlet weight integral.
/// With no data this reduces to the log prior of the means.
double finite_joint_log_prob(const FiniteMixtureModel& model,
                             std::span<const int> assignments,
                             std::span<const double> component_means,
                             std::span<const double> data);

/// Exact posterior over all K^N labeled assignment vectors, computed by
/// enumeration. Keys keep component identities (so one data point yields K
/// entries of 1/K each). Refuses K^N > 10^6.
std::map<std::vector<int>, double> exact_assignment_posterior(
    const FiniteMixtureModel& model, std::span<const double> data);

/// Collapses an assignment-vector distribution onto canonical partitions.
std::map<std::vector<int>, double> aggregate_to_partitions(
    const std::map<std::vector<int>, double>& assignment_posterior);

/// Sum over groups of the Normal-Normal marginal likelihood of that group's
/// observations; components are independent given the partition.
double collapsed_marginal_likelihood(const NormalNormalModel& base,
                                     const Partition& partition,
                                     std::span<const double> data);
double collapsed_marginal_likelihood(const FiniteMixtureModel& model,
                                     const Partition& partition,
                                     std::span<const double> data);

struct FiniteGibbsState {
  std::vector<int> assignments;            // labels in 1..K, K fixed
  std::vector<GaussianSummary> summaries;  // one per component, may be empty
  double log_score = 0.0;  // unnormalized log posterior of the labeling
};

FiniteGibbsState finite_gibbs_init(const FiniteMixtureModel& model,
                                   std::span<const double> data,
                                   RandomStream& stream);

/// One full conditional resampling pass over all assignments, in index
/// order. Weight of component k for item n: (N_{k,-n} + alpha/K) times the
/// posterior predictive of y_n given the other members of k.
void finite_gibbs_sweep(FiniteGibbsState& state,
                        const FiniteMixtureModel& model,
                        std::span<const double> data, RandomStream& stream);

/// Empirical distribution over canonical partitions of n items induced by
/// sampling Dirichlet(alpha/K, ..., alpha/K) weights and n labels.
std::map<std::vector<int>, double> finite_partition_prior_mc(
    int K, double alpha, std::size_t n, std::size_t draws,
    RandomStream& stream);

}  // namespace bnp

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bnp/gaussian.hpp"
#include "bnp/partition.hpp"
#include "bnp/random.hpp"

namespace bnp {

/// Sampler state over a partition of the data with component means
/// integrated out. Group labels are 1..K but in arbitrary order between
/// sweeps; canonical labels are produced only when recording.
struct MixtureGibbsState {
  std::vector<int> assignments;         // values in 1..groups.size()
  std::vector<GaussianSummary> groups;  // sufficient statistics per group
  double log_joint = 0.0;
  std::size_t sweep_index = 0;

  int K() const { return static_cast<int>(groups.size()); }
};

struct TraceRecord {
  std::size_t sweep_index = 0;
  std::vector<int> assignments;          // canonicalized
  std::vector<GaussianSummary> groups;   // aligned with canonical labels
  int K = 0;
  double log_joint = 0.0;
  double alpha = 0.0;                    // value in force when recorded
};

struct PosteriorTrace {
  std::vector<TraceRecord> records;
  std::size_t burn_in = 0;
  std::size_t total_sweeps = 0;
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;
};

/// Seats points one at a time by their posterior predictive weights; a
/// reasonable over-dispersed start that is still deterministic per stream.
MixtureGibbsState dp_gibbs_init(std::span<const double> data,
                                const NormalNormalModel& base,
                                const Concentration& conc,
                                RandomStream& stream);

struct SweepOptions {
  /// Drops the new-group term from every conditional (except when a point
  /// has nowhere else to go). Exists only so the prior-equivalence check
  /// can prove it detects a broken sampler.
  bool skip_new_group = false;
};

/// One full conditional pass in index order: each point is lifted out of
/// its group (empty groups vanish immediately), then reseated with weight
/// m_k * pred_k(y) for occupied groups and alpha * prior_pred(y) for a
/// fresh one. Updates log_joint and sweep_index.
void dp_gibbs_sweep(MixtureGibbsState& state, const NormalNormalModel& base,
                    const Concentration& conc, std::span<const double> data,
                    RandomStream& stream, const SweepOptions& options = {});

/// Joint log density of the current grouping and data with means
/// integrated out: seating prior times per-group marginal likelihoods.
double mixture_log_joint(const MixtureGibbsState& state,
                         const NormalNormalModel& base,
                         const Concentration& conc);

/// Draws a new concentration from its conditional given the group count,
/// via the beta auxiliary variable and a two-Gamma mixture. Requires the
/// Concentration to carry its Gamma hyperprior.
Concentration resample_alpha(const MixtureGibbsState& state,
                             const Concentration& current,
                             RandomStream& stream);

struct ChainSettings {
  std::size_t sweeps = 1100;
  std::size_t burn_in = 100;
  std::size_t thin = 1;
  bool resample_concentration = false;
};

PosteriorTrace run_mixture_chain(std::span<const double> data,
                                 const NormalNormalModel& base,
                                 const Concentration& conc,
                                 const ChainSettings& settings,
                                 std::uint64_t seed, std::uint64_t stream_id);

/// Average over recorded states of the one-point predictive mixture:
/// occupied groups weighted m_k / (n + alpha), the unoccupied remainder
/// alpha / (n + alpha) at the prior predictive.
std::vector<double> posterior_predictive_density(
    const PosteriorTrace& trace, const NormalNormalModel& base,
    std::span<const double> grid);

/// Fraction of recorded states in which items i and j share a group.
Eigen::MatrixXd coclustering_matrix(const PosteriorTrace& trace);

/// Most frequently recorded canonical assignment vector.
std::vector<int> modal_partition(const PosteriorTrace& trace);

/// Histogram of recorded group counts, normalized to frequencies.
std::vector<std::pair<int, double>> group_count_histogram(
    const PosteriorTrace& trace);

struct GewekeStat {
  std::string name;
  double forward_mean = 0.0;
  double forward_se = 0.0;
  double chain_mean = 0.0;
  double chain_se = 0.0;
  double z = 0.0;
  bool flagged = false;
};

struct GewekeReport {
  std::vector<GewekeStat> stats;
  bool any_flagged = false;
  std::size_t sweeps = 0;
};

/// Compare an iid forward series against a Markov chain series. Chain
/// uncertainty uses batch means; gaps beyond 4 combined standard errors
/// are flagged.
GewekeStat geweke_compare(const std::string& name,
                          const std::vector<double>& forward,
                          const std::vector<double>& chain);

/// Prior-equivalence check for the sweep kernel: a forward sampler of
/// (partition, data) and a chain alternating data refresh with the Gibbs
/// sweep must agree on partition statistics. Discrepancies beyond 4
/// combined standard errors are flagged.
GewekeReport geweke_prior_check(const NormalNormalModel& base,
                                const Concentration& conc, std::size_t n,
                                std::size_t sweeps, RandomStream& stream,
                                const SweepOptions& options = {});

}  // namespace bnp

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "bnp/dp_mixture.hpp"
#include "bnp/random.hpp"

namespace bnp {

// Denominator of the new-feature rate when row i arrives: the arriving
// row's index (the default, consistent with the finite-model limit) or
// the total row count.
enum class NewFeatureRate { arrival_index, total_rows };

// Binary feature-assignment matrix. Columns are kept in first-activation
// order and every retained column has at least one active row.
struct BinaryFeatureMatrix {
  Eigen::MatrixXi Z;
  double alpha = 0.0;

  Eigen::Index rows() const { return Z.rows(); }
  Eigen::Index cols() const { return Z.cols(); }
  std::vector<int> column_popularity() const;
};

/// Sequential buffet simulation: row i takes existing feature k with
/// probability h_k / i, then opens Poisson(alpha / i) fresh features
/// (denominator selectable via `rate`).
BinaryFeatureMatrix ibp_simulate(
    std::size_t M, double alpha, RandomStream& stream,
    NewFeatureRate rate = NewFeatureRate::arrival_index);

/// Finite beta-Bernoulli matrix: w_k ~ Beta(alpha/K, 1) per column, then
/// z_mk ~ Bernoulli(w_k). Columns may be all-zero here.
Eigen::MatrixXi finite_bb_simulate(std::size_t M, std::size_t K, double alpha,
                                   RandomStream& stream);

/// Conditional prior probability that a row keeps an existing feature
/// whose popularity among the other rows is h_minus (out of M rows).
double existing_feature_prior(int h_minus, int M);

struct FactorPriors {
  double weight_var = 1.0;      // variance of active loadings
  double activation_var = 1.0;  // variance of factor activations
  double alpha = 1.0;           // feature-count concentration
  double noise_shape = 1.0;     // inverse-gamma prior on the noise variance
  double noise_scale = 1.0;
  void validate() const;
};

// Spike-and-slab linear-Gaussian factor state. W is dense M x K with
// zeros wherever Z is zero; X stacks factor activations as K x N rows.
struct FactorModelState {
  Eigen::MatrixXi Z;
  Eigen::MatrixXd W;
  Eigen::MatrixXd X;
  double noise_var = 1.0;

  std::size_t K() const { return static_cast<std::size_t>(Z.cols()); }
  void validate(Eigen::Index M, Eigen::Index N) const;
};

/// Noiseless reconstruction (Z .* W) X.
Eigen::MatrixXd factor_mean(const FactorModelState& state);

struct FactorGenConfig {
  double weight_var = 1.0;
  double activation_var = 1.0;
  double noise_var = 0.05;
  double alpha = 1.0;
  // Replace the Gaussian loading draw with constant 1 on active entries;
  // calibration tests use this to make the reconstruction deterministic.
  bool unit_weights = false;
};

/// Synthetic generator. The ground-truth Z activates factor k on rows
/// congruent to k modulo K_true, so K_true = M yields the identity
/// pattern; loadings and activations are Gaussian draws.
std::pair<Eigen::MatrixXd, FactorModelState> factor_generate(
    const FactorGenConfig& config, std::size_t M, std::size_t N,
    std::size_t K_true, RandomStream& stream);

struct FactorSweepOptions {
  // Disabling births freezes feature creation; the prior-equivalence
  // harness uses this as an injectable fault.
  bool birth_moves = true;
  bool resample_noise = true;
};

/// One Gibbs sweep: per-entry feature resampling with the loading
/// integrated out, birth proposals replacing each row's private features,
/// Gaussian loading/activation updates, and a conjugate noise draw.
void factor_gibbs_sweep(FactorModelState& state, const Eigen::MatrixXd& Y,
                        const FactorPriors& priors, RandomStream& stream,
                        const FactorSweepOptions& options = {});

/// Log joint density of (Z, W, X, noise_var, Y); invariant under
/// simultaneous column permutations of Z, W and row permutations of X.
double factor_log_joint(const FactorModelState& state,
                        const Eigen::MatrixXd& Y, const FactorPriors& priors);

struct FactorRecord {
  std::size_t sweep_index = 0;
  FactorModelState state;
  double log_joint = 0.0;
};

struct FactorChainSettings {
  std::size_t sweeps = 1000;
  std::size_t burn_in = 500;
  std::size_t thin = 1;
};

struct FactorTrace {
  std::vector<FactorRecord> records;
  std::size_t burn_in = 0;
  std::size_t total_sweeps = 0;
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;
};

/// Run one chain from a fresh single-feature start, recording post
/// burn-in states every `thin` sweeps.
FactorTrace run_factor_chain(const Eigen::MatrixXd& Y,
                             const FactorPriors& priors,
                             const FactorChainSettings& settings,
                             std::uint64_t seed, std::uint64_t stream_id = 0,
                             const FactorSweepOptions& options = {});

/// Frequencies of the retained-feature count over recorded states.
std::map<std::size_t, double> factor_count_histogram(const FactorTrace& trace);

/// Recorded state with the highest log joint; earliest sweep wins ties.
FactorModelState map_factor_estimate(const FactorTrace& trace);

/// Prior-equivalence check for the factor sweep kernel: forward draws of
/// (Z, W, X) against a chain that alternates data refresh with the sweep,
/// compared on feature count and first-column popularity. The noise
/// variance stays fixed at 1 on both sides.
GewekeReport factor_prior_check(std::size_t M, std::size_t N,
                                const FactorPriors& priors,
                                std::size_t sweeps, RandomStream& stream,
                                const FactorSweepOptions& options = {});

}  // namespace bnp

#include "bnp/ibp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bnp/errors.hpp"

namespace bnp {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

std::vector<int> column_sums(const Eigen::MatrixXi& Z) {
  std::vector<int> h(static_cast<std::size_t>(Z.cols()), 0);
  for (Eigen::Index k = 0; k < Z.cols(); ++k)
    h[static_cast<std::size_t>(k)] = Z.col(k).sum();
  return h;
}

double harmonic(std::size_t M) {
  double total = 0.0;
  for (std::size_t i = 1; i <= M; ++i) total += 1.0 / static_cast<double>(i);
  return total;
}

// Popularity of the leading feature: the column whose first active row
// is earliest, largest popularity breaking ties. Independent of stored
// column order, so forward draws and Gibbs states are comparable.
double leading_feature_popularity(const Eigen::MatrixXi& Z) {
  Eigen::Index best_first = Z.rows();
  int best_h = 0;
  for (Eigen::Index k = 0; k < Z.cols(); ++k) {
    Eigen::Index first = Z.rows();
    for (Eigen::Index m = 0; m < Z.rows(); ++m)
      if (Z(m, k) != 0) {
        first = m;
        break;
      }
    if (first == Z.rows()) continue;
    const int h = Z.col(k).sum();
    if (first < best_first || (first == best_first && h > best_h)) {
      best_first = first;
      best_h = h;
    }
  }
  return static_cast<double>(best_h);
}

// Log marginal likelihood of residual row r against a set of candidate
// activation rows with their loadings integrated out, up to terms that do
// not depend on the set. Empty set scores 0.
double collapsed_loading_score(const Eigen::MatrixXd& activations,
                               const Eigen::RowVectorXd& residual,
                               double weight_var, double noise_var) {
  const Eigen::Index j = activations.rows();
  if (j == 0) return 0.0;
  Eigen::MatrixXd A = activations * activations.transpose() / noise_var;
  A.diagonal().array() += 1.0 / weight_var;
  const Eigen::VectorXd b = activations * residual.transpose() / noise_var;
  const Eigen::LLT<Eigen::MatrixXd> llt(A);
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < j; ++i)
    log_det += 2.0 * std::log(llt.matrixL()(i, i));
  const double quad = b.dot(llt.solve(b));
  return -0.5 * (log_det +
                 static_cast<double>(j) * std::log(weight_var)) +
         0.5 * quad;
}

// Draw loadings for the given activation rows from their joint Gaussian
// conditional against the residual row.
Eigen::VectorXd draw_loadings(const Eigen::MatrixXd& activations,
                              const Eigen::RowVectorXd& residual,
                              double weight_var, double noise_var,
                              RandomStream& stream) {
  const Eigen::Index j = activations.rows();
  Eigen::MatrixXd A = activations * activations.transpose() / noise_var;
  A.diagonal().array() += 1.0 / weight_var;
  const Eigen::VectorXd b = activations * residual.transpose() / noise_var;
  const Eigen::LLT<Eigen::MatrixXd> llt(A);
  Eigen::VectorXd noise(j);
  for (Eigen::Index i = 0; i < j; ++i) noise(i) = stream.normal();
  return llt.solve(b) + llt.matrixU().solve(noise);
}

void drop_columns(FactorModelState& state, const std::vector<char>& keep) {
  const Eigen::Index K = state.Z.cols();
  Eigen::Index kept = 0;
  for (Eigen::Index k = 0; k < K; ++k)
    if (keep[static_cast<std::size_t>(k)]) ++kept;
  if (kept == K) return;
  Eigen::MatrixXi Z(state.Z.rows(), kept);
  Eigen::MatrixXd W(state.W.rows(), kept);
  Eigen::MatrixXd X(kept, state.X.cols());
  Eigen::Index out = 0;
  for (Eigen::Index k = 0; k < K; ++k)
    if (keep[static_cast<std::size_t>(k)]) {
      Z.col(out) = state.Z.col(k);
      W.col(out) = state.W.col(k);
      X.row(out) = state.X.row(k);
      ++out;
    }
  state.Z = std::move(Z);
  state.W = std::move(W);
  state.X = std::move(X);
}

void append_columns(FactorModelState& state, Eigen::Index row,
                    const Eigen::MatrixXd& activations,
                    const Eigen::VectorXd& loadings) {
  const Eigen::Index K = state.Z.cols();
  const Eigen::Index j = activations.rows();
  state.Z.conservativeResize(Eigen::NoChange, K + j);
  state.W.conservativeResize(Eigen::NoChange, K + j);
  state.X.conservativeResize(K + j, Eigen::NoChange);
  for (Eigen::Index i = 0; i < j; ++i) {
    state.Z.col(K + i).setZero();
    state.Z(row, K + i) = 1;
    state.W.col(K + i).setZero();
    state.W(row, K + i) = loadings(i);
    state.X.row(K + i) = activations.row(i);
  }
}

double log_normal_density(double x, double var) {
  return -0.5 * (kLog2Pi + std::log(var) + x * x / var);
}

}  // namespace

std::vector<int> BinaryFeatureMatrix::column_popularity() const {
  return column_sums(Z);
}

BinaryFeatureMatrix ibp_simulate(std::size_t M, double alpha,
                                 RandomStream& stream, NewFeatureRate rate) {
  if (M < 1) throw UsageError("ibp_simulate: need at least one row");
  if (alpha < 0.0 || !std::isfinite(alpha))
    throw UsageError("ibp_simulate: alpha must be finite and nonnegative");

  std::vector<std::vector<int>> columns;  // each column has M entries
  std::vector<int> h;
  for (std::size_t i = 1; i <= M; ++i) {
    for (std::size_t k = 0; k < columns.size(); ++k) {
      const bool take =
          stream.uniform() < static_cast<double>(h[k]) / static_cast<double>(i);
      columns[k][i - 1] = take ? 1 : 0;
      h[k] += take ? 1 : 0;
    }
    const double denom =
        rate == NewFeatureRate::arrival_index ? static_cast<double>(i)
                                              : static_cast<double>(M);
    const long fresh = alpha > 0.0 ? stream.poisson(alpha / denom) : 0;
    for (long f = 0; f < fresh; ++f) {
      columns.emplace_back(M, 0);
      columns.back()[i - 1] = 1;
      h.push_back(1);
    }
  }

  BinaryFeatureMatrix matrix;
  matrix.alpha = alpha;
  matrix.Z.resize(static_cast<Eigen::Index>(M),
                  static_cast<Eigen::Index>(columns.size()));
  for (std::size_t k = 0; k < columns.size(); ++k)
    for (std::size_t m = 0; m < M; ++m)
      matrix.Z(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k)) =
          columns[k][m];
  return matrix;
}

Eigen::MatrixXi finite_bb_simulate(std::size_t M, std::size_t K, double alpha,
                                   RandomStream& stream) {
  if (M < 1 || K < 1)
    throw UsageError("finite_bb_simulate: need rows and columns");
  if (!(alpha > 0.0))
    throw UsageError("finite_bb_simulate: alpha must be positive");
  Eigen::MatrixXi Z(static_cast<Eigen::Index>(M),
                    static_cast<Eigen::Index>(K));
  for (std::size_t k = 0; k < K; ++k) {
    const double bias = stream.beta(alpha / static_cast<double>(K), 1.0);
    for (std::size_t m = 0; m < M; ++m)
      Z(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k)) =
          stream.uniform() < bias ? 1 : 0;
  }
  return Z;
}

double existing_feature_prior(int h_minus, int M) {
  if (M < 1 || h_minus < 0 || h_minus > M)
    throw UsageError("existing_feature_prior: popularity out of range");
  return static_cast<double>(h_minus) / static_cast<double>(M);
}

void FactorPriors::validate() const {
  if (!(weight_var > 0.0) || !(activation_var > 0.0) || !(alpha > 0.0) ||
      !(noise_shape > 0.0) || !(noise_scale > 0.0))
    throw UsageError("FactorPriors: all parameters must be positive");
}

void FactorModelState::validate(Eigen::Index M, Eigen::Index N) const {
  if (Z.rows() != M || W.rows() != M || W.cols() != Z.cols() ||
      X.rows() != Z.cols() || X.cols() != N)
    throw UsageError("FactorModelState: dimension mismatch");
  if (!(noise_var > 0.0))
    throw UsageError("FactorModelState: noise variance must be positive");
}

Eigen::MatrixXd factor_mean(const FactorModelState& state) {
  return (state.Z.cast<double>().cwiseProduct(state.W)) * state.X;
}

std::pair<Eigen::MatrixXd, FactorModelState> factor_generate(
    const FactorGenConfig& config, std::size_t M, std::size_t N,
    std::size_t K_true, RandomStream& stream) {
  if (M < 1 || N < 1) throw UsageError("factor_generate: need data shape");
  if (!(config.weight_var > 0.0) || !(config.activation_var > 0.0) ||
      !(config.noise_var > 0.0))
    throw UsageError("factor_generate: variances must be positive");

  const auto rows = static_cast<Eigen::Index>(M);
  const auto cols = static_cast<Eigen::Index>(N);
  const auto K = static_cast<Eigen::Index>(K_true);

  FactorModelState truth;
  truth.noise_var = config.noise_var;
  truth.Z = Eigen::MatrixXi::Zero(rows, K);
  for (Eigen::Index m = 0; m < rows; ++m)
    if (K > 0) truth.Z(m, m % K) = 1;

  truth.W = Eigen::MatrixXd::Zero(rows, K);
  const double weight_sd = std::sqrt(config.weight_var);
  for (Eigen::Index m = 0; m < rows; ++m)
    for (Eigen::Index k = 0; k < K; ++k)
      if (truth.Z(m, k) != 0)
        truth.W(m, k) = config.unit_weights ? 1.0 : stream.normal(0.0, weight_sd);

  truth.X.resize(K, cols);
  const double activation_sd = std::sqrt(config.activation_var);
  for (Eigen::Index k = 0; k < K; ++k)
    for (Eigen::Index n = 0; n < cols; ++n)
      truth.X(k, n) = stream.normal(0.0, activation_sd);

  // Rows cover columns 0..min(M,K)-1, so a K_true beyond M leaves empty
  // columns; drop them to keep the popularity invariant.
  if (K > rows) {
    std::vector<char> keep(static_cast<std::size_t>(K), 1);
    for (Eigen::Index k = rows; k < K; ++k)
      keep[static_cast<std::size_t>(k)] = 0;
    drop_columns(truth, keep);
  }

  Eigen::MatrixXd Y = factor_mean(truth);
  const double noise_sd = std::sqrt(config.noise_var);
  for (Eigen::Index m = 0; m < rows; ++m)
    for (Eigen::Index n = 0; n < cols; ++n)
      Y(m, n) += stream.normal(0.0, noise_sd);
  return {std::move(Y), std::move(truth)};
}

void factor_gibbs_sweep(FactorModelState& state, const Eigen::MatrixXd& Y,
                        const FactorPriors& priors, RandomStream& stream,
                        const FactorSweepOptions& options) {
  priors.validate();
  const Eigen::Index M = Y.rows();
  const Eigen::Index N = Y.cols();
  state.validate(M, N);

  auto h = column_sums(state.Z);

  for (Eigen::Index m = 0; m < M; ++m) {
    Eigen::RowVectorXd row_mean = Eigen::RowVectorXd::Zero(N);
    for (Eigen::Index k = 0; k < state.Z.cols(); ++k)
      if (state.Z(m, k) != 0) row_mean += state.W(m, k) * state.X.row(k);

    // Shared features: integrate the loading out, flip, then redraw it.
    for (Eigen::Index k = 0; k < state.Z.cols(); ++k) {
      const int h_minus = h[static_cast<std::size_t>(k)] - state.Z(m, k);
      if (h_minus == 0) continue;
      Eigen::RowVectorXd base = row_mean;
      if (state.Z(m, k) != 0) base -= state.W(m, k) * state.X.row(k);
      const Eigen::RowVectorXd residual = Y.row(m) - base;

      const double xx = state.X.row(k).squaredNorm();
      const double precision = 1.0 / priors.weight_var + xx / state.noise_var;
      const double mean =
          state.X.row(k).dot(residual) / state.noise_var / precision;
      const double log_ratio =
          -0.5 * (std::log(priors.weight_var) + std::log(precision)) +
          0.5 * mean * mean * precision;
      const double log_odds =
          std::log(static_cast<double>(h_minus)) -
          std::log(static_cast<double>(M - h_minus)) + log_ratio;
      const bool active = stream.uniform() < 1.0 / (1.0 + std::exp(-log_odds));
      if (active) {
        const double loading = stream.normal(mean, std::sqrt(1.0 / precision));
        state.Z(m, k) = 1;
        state.W(m, k) = loading;
        row_mean = base + loading * state.X.row(k);
      } else {
        state.Z(m, k) = 0;
        state.W(m, k) = 0.0;
        row_mean = base;
      }
      h[static_cast<std::size_t>(k)] = h_minus + (active ? 1 : 0);
    }

    if (!options.birth_moves) continue;

    // Private features: propose replacing this row's singletons with a
    // Poisson(alpha/M) batch of fresh ones, loadings integrated out.
    std::vector<Eigen::Index> singletons;
    for (Eigen::Index k = 0; k < state.Z.cols(); ++k)
      if (state.Z(m, k) != 0 && h[static_cast<std::size_t>(k)] == 1)
        singletons.push_back(k);

    const long births =
        stream.poisson(priors.alpha / static_cast<double>(M));
    if (births == 0 && singletons.empty()) continue;

    Eigen::RowVectorXd shared_mean = row_mean;
    Eigen::MatrixXd old_rows(static_cast<Eigen::Index>(singletons.size()), N);
    for (std::size_t s = 0; s < singletons.size(); ++s) {
      shared_mean -= state.W(m, singletons[s]) * state.X.row(singletons[s]);
      old_rows.row(static_cast<Eigen::Index>(s)) =
          state.X.row(singletons[s]);
    }
    const Eigen::RowVectorXd residual = Y.row(m) - shared_mean;

    Eigen::MatrixXd fresh_rows(births, N);
    const double activation_sd = std::sqrt(priors.activation_var);
    for (Eigen::Index i = 0; i < births; ++i)
      for (Eigen::Index n = 0; n < N; ++n)
        fresh_rows(i, n) = stream.normal(0.0, activation_sd);

    const double score_old = collapsed_loading_score(
        old_rows, residual, priors.weight_var, state.noise_var);
    const double score_new = collapsed_loading_score(
        fresh_rows, residual, priors.weight_var, state.noise_var);
    if (std::log(stream.uniform()) < score_new - score_old) {
      std::vector<char> keep(static_cast<std::size_t>(state.Z.cols()), 1);
      for (const Eigen::Index k : singletons)
        keep[static_cast<std::size_t>(k)] = 0;
      drop_columns(state, keep);
      if (births > 0) {
        const Eigen::VectorXd loadings =
            draw_loadings(fresh_rows, residual, priors.weight_var,
                          state.noise_var, stream);
        append_columns(state, m, fresh_rows, loadings);
      }
      h = column_sums(state.Z);
    }
  }

  const Eigen::Index K = state.Z.cols();
  if (K > 0) {
    // Loadings row by row from their joint Gaussian conditional.
    for (Eigen::Index m = 0; m < M; ++m) {
      std::vector<Eigen::Index> active;
      for (Eigen::Index k = 0; k < K; ++k)
        if (state.Z(m, k) != 0) active.push_back(k);
      state.W.row(m).setZero();
      if (active.empty()) continue;
      Eigen::MatrixXd rows(static_cast<Eigen::Index>(active.size()), N);
      for (std::size_t a = 0; a < active.size(); ++a)
        rows.row(static_cast<Eigen::Index>(a)) = state.X.row(active[a]);
      const Eigen::VectorXd loadings = draw_loadings(
          rows, Y.row(m), priors.weight_var, state.noise_var, stream);
      for (std::size_t a = 0; a < active.size(); ++a)
        state.W(m, active[a]) = loadings(static_cast<Eigen::Index>(a));
    }

    // Activations share one precision matrix across data columns.
    const Eigen::MatrixXd G = state.Z.cast<double>().cwiseProduct(state.W);
    Eigen::MatrixXd A = G.transpose() * G / state.noise_var;
    A.diagonal().array() += 1.0 / priors.activation_var;
    const Eigen::LLT<Eigen::MatrixXd> llt(A);
    const Eigen::MatrixXd mean =
        llt.solve(G.transpose() * Y / state.noise_var);
    Eigen::MatrixXd noise(K, N);
    for (Eigen::Index k = 0; k < K; ++k)
      for (Eigen::Index n = 0; n < N; ++n) noise(k, n) = stream.normal();
    state.X = mean + llt.matrixU().solve(noise);
  }

  if (options.resample_noise) {
    const double ss = (Y - factor_mean(state)).squaredNorm();
    const double shape =
        priors.noise_shape + 0.5 * static_cast<double>(M * N);
    const double scale = priors.noise_scale + 0.5 * ss;
    state.noise_var = scale > 0.0 ? 1.0 / stream.gamma(shape, scale) : 1.0;
  }

  // Purge any column that lost all rows.
  h = column_sums(state.Z);
  std::vector<char> keep(h.size(), 1);
  bool purge = false;
  for (std::size_t k = 0; k < h.size(); ++k)
    if (h[k] == 0) {
      keep[k] = 0;
      purge = true;
    }
  if (purge) drop_columns(state, keep);
}

double factor_log_joint(const FactorModelState& state,
                        const Eigen::MatrixXd& Y,
                        const FactorPriors& priors) {
  priors.validate();
  const Eigen::Index M = Y.rows();
  const Eigen::Index N = Y.cols();
  state.validate(M, N);

  const auto h = column_sums(state.Z);
  const auto K = static_cast<double>(state.Z.cols());
  const auto rows = static_cast<double>(M);

  // Exchangeable feature-allocation mass over the retained columns.
  double total = -priors.alpha * harmonic(static_cast<std::size_t>(M));
  if (state.Z.cols() > 0) total += K * std::log(priors.alpha);
  for (const int hk : h) {
    if (hk < 1) throw UsageError("factor_log_joint: empty column");
    total += std::lgamma(rows - hk + 1.0) + std::lgamma(static_cast<double>(hk)) -
             std::lgamma(rows + 1.0);
  }

  for (Eigen::Index m = 0; m < M; ++m)
    for (Eigen::Index k = 0; k < state.Z.cols(); ++k)
      if (state.Z(m, k) != 0)
        total += log_normal_density(state.W(m, k), priors.weight_var);

  for (Eigen::Index k = 0; k < state.X.rows(); ++k)
    for (Eigen::Index n = 0; n < N; ++n)
      total += log_normal_density(state.X(k, n), priors.activation_var);

  const Eigen::MatrixXd mean = factor_mean(state);
  for (Eigen::Index m = 0; m < M; ++m)
    for (Eigen::Index n = 0; n < N; ++n)
      total += log_normal_density(Y(m, n) - mean(m, n), state.noise_var);

  total += priors.noise_shape * std::log(priors.noise_scale) -
           std::lgamma(priors.noise_shape) -
           (priors.noise_shape + 1.0) * std::log(state.noise_var) -
           priors.noise_scale / state.noise_var;
  return total;
}

FactorTrace run_factor_chain(const Eigen::MatrixXd& Y,
                             const FactorPriors& priors,
                             const FactorChainSettings& settings,
                             std::uint64_t seed, std::uint64_t stream_id,
                             const FactorSweepOptions& options) {
  priors.validate();
  if (settings.burn_in >= settings.sweeps)
    throw UsageError("run_factor_chain: burn-in must be below sweep count");
  if (settings.thin < 1) throw UsageError("run_factor_chain: thin must be >= 1");

  RandomStream stream(seed, stream_id);
  FactorModelState state;
  state.Z = Eigen::MatrixXi::Ones(Y.rows(), 1);
  state.W = Eigen::MatrixXd::Zero(Y.rows(), 1);
  state.X = Eigen::MatrixXd::Zero(1, Y.cols());
  state.noise_var = 1.0;

  FactorTrace trace;
  trace.burn_in = settings.burn_in;
  trace.total_sweeps = settings.sweeps;
  trace.seed = seed;
  trace.stream_id = stream_id;
  for (std::size_t sweep = 1; sweep <= settings.sweeps; ++sweep) {
    factor_gibbs_sweep(state, Y, priors, stream, options);
    if (sweep > settings.burn_in &&
        (sweep - settings.burn_in - 1) % settings.thin == 0) {
      FactorRecord record;
      record.sweep_index = sweep;
      record.state = state;
      record.log_joint = factor_log_joint(state, Y, priors);
      trace.records.push_back(std::move(record));
    }
  }
  return trace;
}

std::map<std::size_t, double> factor_count_histogram(
    const FactorTrace& trace) {
  if (trace.records.empty())
    throw UsageError("factor_count_histogram: empty trace");
  std::map<std::size_t, double> histogram;
  for (const auto& record : trace.records)
    histogram[record.state.K()] += 1.0;
  for (auto& [k, value] : histogram)
    value /= static_cast<double>(trace.records.size());
  return histogram;
}

FactorModelState map_factor_estimate(const FactorTrace& trace) {
  if (trace.records.empty())
    throw UsageError("map_factor_estimate: empty trace");
  const FactorRecord* best = &trace.records.front();
  for (const auto& record : trace.records)
    if (record.log_joint > best->log_joint) best = &record;
  return best->state;
}

GewekeReport factor_prior_check(std::size_t M, std::size_t N,
                                const FactorPriors& priors,
                                std::size_t sweeps, RandomStream& stream,
                                const FactorSweepOptions& options) {
  priors.validate();
  if (M < 1 || N < 1 || sweeps < 2)
    throw UsageError("factor_prior_check: need shape and sweeps");

  const double weight_sd = std::sqrt(priors.weight_var);
  const double activation_sd = std::sqrt(priors.activation_var);

  const auto forward_state = [&]() {
    FactorModelState state;
    state.Z = ibp_simulate(M, priors.alpha, stream).Z;
    const Eigen::Index K = state.Z.cols();
    state.W = Eigen::MatrixXd::Zero(state.Z.rows(), K);
    for (Eigen::Index m = 0; m < state.Z.rows(); ++m)
      for (Eigen::Index k = 0; k < K; ++k)
        if (state.Z(m, k) != 0) state.W(m, k) = stream.normal(0.0, weight_sd);
    state.X.resize(K, static_cast<Eigen::Index>(N));
    for (Eigen::Index k = 0; k < K; ++k)
      for (Eigen::Index n = 0; n < state.X.cols(); ++n)
        state.X(k, n) = stream.normal(0.0, activation_sd);
    state.noise_var = 1.0;
    return state;
  };

  std::vector<double> fwd_k, fwd_lead, chain_k, chain_lead;
  fwd_k.reserve(sweeps);
  for (std::size_t s = 0; s < sweeps; ++s) {
    const auto state = forward_state();
    fwd_k.push_back(static_cast<double>(state.K()));
    fwd_lead.push_back(leading_feature_popularity(state.Z));
  }

  FactorSweepOptions chain_options = options;
  chain_options.resample_noise = false;
  FactorModelState state = forward_state();
  Eigen::MatrixXd Y(static_cast<Eigen::Index>(M),
                    static_cast<Eigen::Index>(N));
  for (std::size_t s = 0; s < sweeps; ++s) {
    const Eigen::MatrixXd mean = factor_mean(state);
    for (Eigen::Index m = 0; m < Y.rows(); ++m)
      for (Eigen::Index n = 0; n < Y.cols(); ++n)
        Y(m, n) = mean(m, n) + stream.normal();
    factor_gibbs_sweep(state, Y, priors, stream, chain_options);
    chain_k.push_back(static_cast<double>(state.K()));
    chain_lead.push_back(leading_feature_popularity(state.Z));
  }

  GewekeReport report;
  report.sweeps = sweeps;
  report.stats.push_back(geweke_compare("feature_count", fwd_k, chain_k));
  report.stats.push_back(
      geweke_compare("leading_popularity", fwd_lead, chain_lead));
  for (const auto& stat : report.stats)
    report.any_flagged = report.any_flagged || stat.flagged;
  return report;
}

}  // namespace bnp

#include "bnp/dp_vi.hpp"

#include <boost/math/special_functions/digamma.hpp>
#include <cmath>

#include "bnp/errors.hpp"

namespace bnp {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

using boost::math::digamma;

double beta_entropy(double a, double b) {
  const double log_beta =
      std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
  return log_beta - (a - 1.0) * digamma(a) - (b - 1.0) * digamma(b) +
         (a + b - 2.0) * digamma(a + b);
}

// E[log pi_t] for every component; the last component owns the remainder
// of the stick, so it has no own-fraction term.
std::vector<double> expected_log_weights(const VariationalState& state) {
  std::vector<double> log_pi(state.T, 0.0);
  double acc = 0.0;  // sum of E[log(1 - v_j)] over sticks before t
  for (std::size_t t = 0; t < state.T; ++t) {
    log_pi[t] = acc;
    if (t + 1 < state.T) {
      const double g1 = state.stick_gamma1[t];
      const double g2 = state.stick_gamma2[t];
      const double psi_sum = digamma(g1 + g2);
      log_pi[t] += digamma(g1) - psi_sum;
      acc += digamma(g2) - psi_sum;
    }
  }
  return log_pi;
}

void validate_state(const VariationalState& state,
                    const Eigen::MatrixXd& data) {
  if (state.T < 1) throw UsageError("VariationalState: T must be at least 1");
  if (state.responsibilities.rows() != data.rows() ||
      state.responsibilities.cols() != static_cast<Eigen::Index>(state.T))
    throw UsageError("VariationalState: responsibilities shape mismatch");
  if (state.comp_mean.rows() != static_cast<Eigen::Index>(state.T) ||
      state.comp_mean.cols() != data.cols())
    throw UsageError("VariationalState: component mean shape mismatch");
}

}  // namespace

VariationalState vi_init(const Eigen::MatrixXd& data, std::size_t T,
                         double alpha, const NormalNormalModel& base,
                         RandomStream& stream) {
  base.validate();
  if (T < 1) throw UsageError("vi_init: T must be at least 1");
  if (data.rows() == 0) throw UsageError("vi_init: empty data");
  if (!(alpha > 0.0)) throw UsageError("vi_init: alpha must be positive");

  VariationalState state;
  state.T = T;
  state.stick_gamma1.assign(T - 1, 1.0);
  state.stick_gamma2.assign(T - 1, alpha);
  state.comp_mean = Eigen::MatrixXd::Constant(
      static_cast<Eigen::Index>(T), data.cols(), base.prior_mean);
  state.comp_var = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(T),
                                             base.prior_var);
  state.responsibilities.resize(data.rows(), static_cast<Eigen::Index>(T));
  if (T == 1) {
    state.responsibilities.setOnes();
    return state;
  }

  // Anchor each component on a data point, drawing every new anchor with
  // probability proportional to squared distance from those already chosen
  // so the anchors spread out. Duplicate anchors are harmless: a redundant
  // component drains within the first few update rounds.
  const auto N = data.rows();
  std::vector<Eigen::Index> anchors;
  anchors.reserve(T);
  anchors.push_back(
      static_cast<Eigen::Index>(stream.uniform() * static_cast<double>(N)));
  Eigen::VectorXd dist2 =
      (data.rowwise() - data.row(anchors[0])).rowwise().squaredNorm();
  while (anchors.size() < T) {
    Eigen::Index pick;
    if (dist2.sum() > 0.0) {
      const std::vector<double> weights(dist2.data(), dist2.data() + N);
      pick = static_cast<Eigen::Index>(stream.categorical(weights));
    } else {
      pick = static_cast<Eigen::Index>(stream.uniform() *
                                       static_cast<double>(N));
    }
    anchors.push_back(pick);
    dist2 = dist2.cwiseMin(
        (data.rowwise() - data.row(pick)).rowwise().squaredNorm());
  }

  // Soften the anchor assignment at the observation noise scale.
  std::vector<double> log_row(T);
  for (Eigen::Index n = 0; n < N; ++n) {
    for (std::size_t t = 0; t < T; ++t)
      log_row[t] = -(data.row(n) - data.row(anchors[t])).squaredNorm() /
                   (2.0 * base.obs_var);
    const double log_norm = log_sum_exp(log_row);
    for (std::size_t t = 0; t < T; ++t)
      state.responsibilities(n, static_cast<Eigen::Index>(t)) =
          std::exp(log_row[t] - log_norm);
  }
  return state;
}

double cavi_iterate(VariationalState& state, const Eigen::MatrixXd& data,
                    double alpha, const NormalNormalModel& base) {
  base.validate();
  validate_state(state, data);
  if (!(alpha > 0.0)) throw UsageError("cavi_iterate: alpha must be positive");

  const auto N = data.rows();
  const auto d = data.cols();
  const auto T = static_cast<Eigen::Index>(state.T);
  const double tau2 = base.prior_var;
  const double sigma2 = base.obs_var;

  // Component Gaussians from the soft counts.
  const Eigen::VectorXd counts =
      state.responsibilities.colwise().sum().transpose();
  const Eigen::MatrixXd weighted_sums =
      state.responsibilities.transpose() * data;  // T x d
  for (Eigen::Index t = 0; t < T; ++t) {
    const double precision = 1.0 / tau2 + counts(t) / sigma2;
    state.comp_var(t) = 1.0 / precision;
    for (Eigen::Index j = 0; j < d; ++j)
      state.comp_mean(t, j) =
          state.comp_var(t) *
          (base.prior_mean / tau2 + weighted_sums(t, j) / sigma2);
  }

  // Stick Betas: each stick sees its own soft count against everything
  // that flows past it.
  double downstream = 0.0;
  for (Eigen::Index t = T - 1; t >= 1; --t) {
    state.stick_gamma1[static_cast<std::size_t>(t) - 1] = 1.0 + counts(t - 1);
    downstream += counts(t);
    state.stick_gamma2[static_cast<std::size_t>(t) - 1] = alpha + downstream;
  }

  // Responsibilities from the refreshed parameters.
  const auto log_pi = expected_log_weights(state);
  std::vector<double> log_row(state.T);
  for (Eigen::Index n = 0; n < N; ++n) {
    for (Eigen::Index t = 0; t < T; ++t) {
      double log_lik = 0.0;
      for (Eigen::Index j = 0; j < d; ++j) {
        const double gap = data(n, j) - state.comp_mean(t, j);
        log_lik += -0.5 * (kLog2Pi + std::log(sigma2)) -
                   (gap * gap + state.comp_var(t)) / (2.0 * sigma2);
      }
      log_row[static_cast<std::size_t>(t)] =
          log_pi[static_cast<std::size_t>(t)] + log_lik;
    }
    const double log_z = log_sum_exp(log_row);
    for (Eigen::Index t = 0; t < T; ++t)
      state.responsibilities(n, t) =
          std::exp(log_row[static_cast<std::size_t>(t)] - log_z);
  }

  // Evidence lower bound of the updated state.
  const auto fresh_log_pi = expected_log_weights(state);
  double elbo = 0.0;
  for (Eigen::Index n = 0; n < N; ++n) {
    for (Eigen::Index t = 0; t < T; ++t) {
      const double r = state.responsibilities(n, t);
      if (r <= 0.0) continue;
      double log_lik = 0.0;
      for (Eigen::Index j = 0; j < d; ++j) {
        const double gap = data(n, j) - state.comp_mean(t, j);
        log_lik += -0.5 * (kLog2Pi + std::log(sigma2)) -
                   (gap * gap + state.comp_var(t)) / (2.0 * sigma2);
      }
      elbo += r * (log_lik + fresh_log_pi[static_cast<std::size_t>(t)] -
                   std::log(r));
    }
  }
  for (std::size_t t = 0; t + 1 < state.T; ++t) {
    const double g1 = state.stick_gamma1[t];
    const double g2 = state.stick_gamma2[t];
    elbo += std::log(alpha) +
            (alpha - 1.0) * (digamma(g2) - digamma(g1 + g2));
    elbo += beta_entropy(g1, g2);
  }
  for (Eigen::Index t = 0; t < T; ++t) {
    for (Eigen::Index j = 0; j < d; ++j) {
      const double gap = state.comp_mean(t, j) - base.prior_mean;
      elbo += -0.5 * (kLog2Pi + std::log(tau2)) -
              (gap * gap + state.comp_var(t)) / (2.0 * tau2);
      elbo += 0.5 * (kLog2Pi + std::log(state.comp_var(t)) + 1.0);
    }
  }
  return elbo;
}

CaviResult run_cavi(VariationalState& state, const Eigen::MatrixXd& data,
                    double alpha, const NormalNormalModel& base,
                    std::size_t max_iterations, double tolerance) {
  CaviResult result;
  int quiet_rounds = 0;
  double previous = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < max_iterations; ++i) {
    const double elbo = cavi_iterate(state, data, alpha, base);
    result.elbo_trace.push_back(elbo);
    ++result.iterations;
    quiet_rounds = (elbo - previous < tolerance) ? quiet_rounds + 1 : 0;
    previous = elbo;
    if (quiet_rounds >= 3) {
      result.converged = true;
      break;
    }
  }
  return result;
}

std::vector<double> expected_stick_weights(const VariationalState& state) {
  std::vector<double> weights(state.T, 0.0);
  double remainder = 1.0;
  for (std::size_t t = 0; t + 1 < state.T; ++t) {
    const double mean_v =
        state.stick_gamma1[t] / (state.stick_gamma1[t] + state.stick_gamma2[t]);
    weights[t] = mean_v * remainder;
    remainder *= 1.0 - mean_v;
  }
  weights[state.T - 1] = remainder;  // closure: last stick takes the rest
  return weights;
}

std::vector<double> vi_predictive_density(const VariationalState& state,
                                          const NormalNormalModel& base,
                                          std::span<const double> grid) {
  base.validate();
  if (state.comp_mean.cols() != 1)
    throw UsageError(
        "vi_predictive_density: only one-dimensional states supported");
  const auto weights = expected_stick_weights(state);
  double claimed = 0.0;
  for (double w : weights) claimed += w;
  const double tail = std::max(0.0, 1.0 - claimed);

  std::vector<double> density(grid.size(), 0.0);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const double y = grid[g];
    double value = tail * std::exp(log_prior_predictive(base, y));
    for (std::size_t t = 0; t < state.T; ++t)
      value += weights[t] *
               std::exp(log_normal_pdf(
                   y, state.comp_mean(static_cast<Eigen::Index>(t), 0),
                   state.comp_var(static_cast<Eigen::Index>(t)) +
                       base.obs_var));
    density[g] = value;
  }
  return density;
}

Eigen::MatrixXd vi_coclustering(const VariationalState& state) {
  return state.responsibilities * state.responsibilities.transpose();
}

}  // namespace bnp

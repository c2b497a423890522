#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <vector>

#include "bnp/errors.hpp"
#include "bnp/ibp.hpp"
#include "oracles.hpp"

using namespace bnp;

namespace {

double harmonic(int M) {
  double total = 0.0;
  for (int i = 1; i <= M; ++i) total += 1.0 / i;
  return total;
}

FactorModelState permuted_columns(const FactorModelState& state,
                                  const std::vector<Eigen::Index>& order) {
  FactorModelState out = state;
  for (std::size_t i = 0; i < order.size(); ++i) {
    out.Z.col(static_cast<Eigen::Index>(i)) = state.Z.col(order[i]);
    out.W.col(static_cast<Eigen::Index>(i)) = state.W.col(order[i]);
    out.X.row(static_cast<Eigen::Index>(i)) = state.X.row(order[i]);
  }
  return out;
}

}  // namespace

TEST_CASE("buffet simulation basics") {
  RandomStream stream(11u, 0u);

  for (int rep = 0; rep < 20; ++rep)
    CHECK(ibp_simulate(6, 0.0, stream).cols() == 0);

  // Retained columns are nonempty and ordered by first activation.
  for (int rep = 0; rep < 50; ++rep) {
    const auto matrix = ibp_simulate(8, 2.0, stream);
    Eigen::Index previous_first = 0;
    for (Eigen::Index k = 0; k < matrix.cols(); ++k) {
      Eigen::Index first = -1;
      for (Eigen::Index m = 0; m < matrix.rows(); ++m)
        if (matrix.Z(m, k) != 0) {
          first = m;
          break;
        }
      REQUIRE(first >= 0);
      REQUIRE(first >= previous_first);
      previous_first = first;
    }
    const auto h = matrix.column_popularity();
    for (const int hk : h) REQUIRE(hk >= 1);
  }

  RandomStream a(5u, 3u), b(5u, 3u);
  const auto first = ibp_simulate(10, 1.5, a);
  const auto second = ibp_simulate(10, 1.5, b);
  CHECK(first.Z == second.Z);
}

TEST_CASE("first row opens a Poisson number of features") {
  RandomStream stream(12u, 0u);
  const double alpha = 1.3;
  const int draws = 100000;
  double total = 0.0;
  for (int rep = 0; rep < draws; ++rep)
    total += static_cast<double>(ibp_simulate(1, alpha, stream).cols());
  const double se = std::sqrt(alpha / draws);
  CHECK(std::abs(total / draws - alpha) < 3.0 * se);
}

TEST_CASE("mean feature count follows the harmonic growth law") {
  RandomStream stream(13u, 0u);

  // Four rows at alpha 1: 1 + 1/2 + 1/3 + 1/4.
  {
    const int draws = 100000;
    double total = 0.0;
    for (int rep = 0; rep < draws; ++rep)
      total += static_cast<double>(ibp_simulate(4, 1.0, stream).cols());
    const double expected = harmonic(4);
    const double se = std::sqrt(expected / draws);
    CHECK(std::abs(total / draws - expected) < 3.0 * se);
  }

  for (const double alpha : {0.5, 2.0}) {
    const int draws = 20000;
    double total = 0.0;
    for (int rep = 0; rep < draws; ++rep)
      total += static_cast<double>(ibp_simulate(50, alpha, stream).cols());
    const double expected = alpha * harmonic(50);
    const double se = std::sqrt(expected / draws);
    CHECK(std::abs(total / draws - expected) < 3.0 * se);
  }
}

TEST_CASE("every row samples a Poisson number of features marginally") {
  RandomStream stream(14u, 0u);
  const double alpha = 1.5;
  const int draws = 30000;
  double last_row_total = 0.0;
  for (int rep = 0; rep < draws; ++rep) {
    const auto matrix = ibp_simulate(6, alpha, stream);
    if (matrix.cols() > 0)
      last_row_total += matrix.Z.row(matrix.rows() - 1).sum();
  }
  const double se = std::sqrt(alpha / draws);
  CHECK(std::abs(last_row_total / draws - alpha) < 3.0 * se);
}

TEST_CASE("finite bent-coin matrix matches its closed-form moments") {
  RandomStream stream(15u, 0u);

  const auto tiny = finite_bb_simulate(5, 50, 1e-12, stream);
  CHECK(tiny.sum() == 0);

  // Per-row active count has mean alpha / (1 + alpha/K).
  const double alpha = 2.0;
  const int K = 1000;
  std::vector<double> row_counts;
  for (int rep = 0; rep < 400; ++rep) {
    const auto Z = finite_bb_simulate(5, K, alpha, stream);
    for (Eigen::Index m = 0; m < Z.rows(); ++m)
      row_counts.push_back(static_cast<double>(Z.row(m).sum()));
  }
  const double expected = alpha / (1.0 + alpha / K);
  const double mean = oracle::mean(row_counts);
  const double se =
      std::sqrt(oracle::variance(row_counts) / row_counts.size());
  CHECK(std::abs(mean - expected) < 3.0 * se);
}

TEST_CASE("single-row finite model approaches the Poisson limit") {
  RandomStream stream(16u, 0u);
  const double alpha = 2.0;
  std::vector<long> counts;
  counts.reserve(40000);
  for (int rep = 0; rep < 40000; ++rep)
    counts.push_back(finite_bb_simulate(1, 1000, alpha, stream).sum());
  const double ks = oracle::ks_statistic_discrete(counts, [&](long k) {
    return boost::math::gamma_q(static_cast<double>(k) + 1.0, alpha);
  });
  CHECK(ks <= 0.02);
}

TEST_CASE("keeping an existing feature uses popularity odds") {
  CHECK(existing_feature_prior(2, 4) == 0.5);
  CHECK(existing_feature_prior(0, 4) == 0.0);
  CHECK(existing_feature_prior(5, 5) == 1.0);

  // Finite-model conditional (h + a/K) / (M + a/K) at K = 10^4.
  const double finite = (2.0 + 1e-4) / (4.0 + 1e-4);
  CHECK(std::abs(existing_feature_prior(2, 4) - finite) < 1e-4);

  CHECK_THROWS_AS((void)existing_feature_prior(-1, 4), UsageError);
  CHECK_THROWS_AS((void)existing_feature_prior(5, 4), UsageError);
}

TEST_CASE("generator produces the advertised data law") {
  RandomStream stream(17u, 0u);

  // No factors: pure observation noise.
  {
    FactorGenConfig config;
    config.noise_var = 0.7;
    const auto [Y, truth] = factor_generate(config, 40, 100, 0, stream);
    CHECK(truth.Z.cols() == 0);
    std::vector<double> entries(Y.data(), Y.data() + Y.size());
    const double var = oracle::variance(entries);
    const double se = 0.7 * std::sqrt(2.0 / (entries.size() - 1.0));
    CHECK(std::abs(var - 0.7) < 3.0 * se);
  }

  // Identity pattern with unit loadings and vanishing noise copies X.
  {
    FactorGenConfig config;
    config.noise_var = 1e-12;
    config.unit_weights = true;
    const auto [Y, truth] = factor_generate(config, 6, 40, 6, stream);
    CHECK((Y - truth.X).cwiseAbs().maxCoeff() < 1e-5);
  }

  // One active factor per row: entry variance w_var * x_var + noise.
  {
    FactorGenConfig config;
    config.weight_var = 1.5;
    config.activation_var = 0.8;
    config.noise_var = 0.3;
    std::vector<double> squares;
    for (int rep = 0; rep < 50; ++rep) {
      const auto [Y, truth] = factor_generate(config, 40, 50, 8, stream);
      for (Eigen::Index m = 0; m < Y.rows(); ++m)
        CHECK(truth.Z.row(m).sum() == 1);
      for (const double* p = Y.data(); p != Y.data() + Y.size(); ++p)
        squares.push_back(*p * *p);
    }
    const double expected = 1.5 * 0.8 + 0.3;
    CHECK(oracle::mean(squares) ==
          doctest::Approx(expected).epsilon(0.05));
  }
}

TEST_CASE("loading update recovers truth when the noise vanishes") {
  RandomStream stream(18u, 0u);
  FactorGenConfig config;
  config.noise_var = 1e-8;
  const auto [Y, truth] = factor_generate(config, 9, 100, 3, stream);

  FactorModelState state = truth;
  state.W.setZero();
  FactorPriors priors;
  FactorSweepOptions options;
  options.birth_moves = false;
  options.resample_noise = false;
  factor_gibbs_sweep(state, Y, priors, stream, options);

  for (Eigen::Index m = 0; m < truth.Z.rows(); ++m)
    for (Eigen::Index k = 0; k < truth.Z.cols(); ++k)
      if (truth.Z(m, k) != 0)
        CHECK(state.W(m, k) == doctest::Approx(truth.W(m, k)).epsilon(1e-3));
}

TEST_CASE("log joint ignores column order") {
  RandomStream stream(19u, 0u);
  FactorGenConfig config;
  const auto [Y, truth] = factor_generate(config, 7, 20, 3, stream);
  FactorPriors priors;

  const double base_value = factor_log_joint(truth, Y, priors);
  const auto swapped = permuted_columns(truth, {2, 0, 1});
  CHECK(factor_log_joint(swapped, Y, priors) ==
        doctest::Approx(base_value).epsilon(1e-10));
}

TEST_CASE("sweep kernel preserves its own prior") {
  FactorPriors priors;
  RandomStream stream(20u, 0u);
  const auto report = factor_prior_check(5, 6, priors, 12000, stream);
  for (const auto& stat : report.stats) {
    INFO(stat.name, " z=", stat.z);
    CHECK(!stat.flagged);
  }
  CHECK(!report.any_flagged);

  FactorSweepOptions broken;
  broken.birth_moves = false;
  RandomStream fault_stream(21u, 0u);
  const auto fault = factor_prior_check(5, 6, priors, 8000, fault_stream, broken);
  CHECK(fault.any_flagged);
}

TEST_CASE("three planted factors are recovered") {
  FactorGenConfig config;
  config.noise_var = 0.05;
  FactorPriors priors;
  FactorChainSettings settings;  // 1000 sweeps, 500 burn-in

  int mode_hits = 0;
  bool checked_first_seed = false;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    RandomStream gen(100u + seed, 0u);
    const auto [Y, truth] = factor_generate(config, 9, 100, 3, gen);
    const auto trace = run_factor_chain(Y, priors, settings, 200u + seed);

    const auto histogram = factor_count_histogram(trace);
    std::size_t mode = 0;
    double best = -1.0;
    double near_truth_mass = 0.0;
    for (const auto& [k, frequency] : histogram) {
      if (frequency > best) {
        best = frequency;
        mode = k;
      }
      if (k >= 2 && k <= 5) near_truth_mass += frequency;
    }
    if (mode == 3 || mode == 4) ++mode_hits;

    if (!checked_first_seed) {
      checked_first_seed = true;
      CHECK(near_truth_mass >= 0.8);
      const auto map_state = map_factor_estimate(trace);
      const double rmse =
          std::sqrt((factor_mean(map_state) - factor_mean(truth))
                        .squaredNorm() /
                    static_cast<double>(Y.size()));
      CHECK(rmse <= 1.2 * std::sqrt(config.noise_var));
    }
  }
  CHECK(mode_hits >= 7);
}

TEST_CASE("trace summaries behave") {
  RandomStream stream(23u, 0u);
  FactorGenConfig config;
  const auto [Y, truth] = factor_generate(config, 5, 12, 2, stream);
  FactorPriors priors;

  const auto tiny = run_factor_chain(Y, priors, {2, 1, 1}, 9u);
  REQUIRE(tiny.records.size() == 1);
  const auto histogram = factor_count_histogram(tiny);
  REQUIRE(histogram.size() == 1);
  CHECK(histogram.begin()->second == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(map_factor_estimate(tiny).Z == tiny.records.front().state.Z);

  const auto chain = run_factor_chain(Y, priors, {40, 10, 2}, 9u);
  double mass = 0.0;
  for (const auto& [k, frequency] : factor_count_histogram(chain))
    mass += frequency;
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));

  const auto replay = run_factor_chain(Y, priors, {40, 10, 2}, 9u);
  REQUIRE(replay.records.size() == chain.records.size());
  for (std::size_t i = 0; i < chain.records.size(); ++i) {
    CHECK(replay.records[i].log_joint == chain.records[i].log_joint);
    CHECK(replay.records[i].sweep_index == chain.records[i].sweep_index);
  }

  CHECK_THROWS_AS((void)run_factor_chain(Y, priors, {10, 10, 1}, 9u),
                  UsageError);
  CHECK_THROWS_AS((void)factor_count_histogram(FactorTrace{}), UsageError);
  CHECK_THROWS_AS((void)map_factor_estimate(FactorTrace{}), UsageError);
}

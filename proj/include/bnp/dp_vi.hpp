#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "bnp/gaussian.hpp"
#include "bnp/random.hpp"

namespace bnp {

/// Mean-field family for the stick-breaking mixture, truncated at T
/// components: T-1 free Beta factors over stick fractions (the T-th stick
/// takes all remaining mass by construction), an independent Gaussian per
/// component mean and dimension, and a categorical row per data point.
struct VariationalState {
  std::size_t T = 1;
  std::vector<double> stick_gamma1;  // size T-1
  std::vector<double> stick_gamma2;  // size T-1
  Eigen::MatrixXd comp_mean;         // T x d
  Eigen::VectorXd comp_var;          // per component, shared across dims
  Eigen::MatrixXd responsibilities;  // N x T, rows sum to 1
};

/// Random soft assignments, prior parameters everywhere else.
VariationalState vi_init(const Eigen::MatrixXd& data, std::size_t T,
                         double alpha, const NormalNormalModel& base,
                         RandomStream& stream);

/// One round of coordinate updates (component Gaussians, stick Betas,
/// responsibilities, in that order). Returns the evidence lower bound of
/// the updated state; successive values never decrease beyond rounding.
double cavi_iterate(VariationalState& state, const Eigen::MatrixXd& data,
                    double alpha, const NormalNormalModel& base);

struct CaviResult {
  std::vector<double> elbo_trace;
  bool converged = false;  // gain below tolerance three rounds in a row
  std::size_t iterations = 0;
};

CaviResult run_cavi(VariationalState& state, const Eigen::MatrixXd& data,
                    double alpha, const NormalNormalModel& base,
                    std::size_t max_iterations, double tolerance = 1e-6);

/// Expected mixture weights under the fitted sticks. The closure makes
/// them sum to 1; partial sums leave exactly the expected remainder
/// prod_{j<=k} E[1 - v_j] unclaimed.
std::vector<double> expected_stick_weights(const VariationalState& state);

/// One-dimensional predictive: components weighted by expected stick
/// weights plus any leftover truncation mass at the prior predictive.
std::vector<double> vi_predictive_density(const VariationalState& state,
                                          const NormalNormalModel& base,
                                          std::span<const double> grid);

/// Pairwise co-assignment probabilities r r^T under the fitted soft
/// assignments.
Eigen::MatrixXd vi_coclustering(const VariationalState& state);

}  // namespace bnp

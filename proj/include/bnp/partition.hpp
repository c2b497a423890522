#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "bnp/random.hpp"

namespace bnp {

/// Grouping of items 1..n into K nonempty groups. Canonical form labels
/// groups 1..K in order of first appearance, so equal partitions compare
/// equal as assignment vectors.
struct Partition {
  std::vector<int> assignments;           // canonical labels, 1-based
  std::vector<std::size_t> group_sizes;   // group_sizes[k-1] = N_k

  std::size_t n() const { return assignments.size(); }
  int K() const { return static_cast<int>(group_sizes.size()); }

  /// Appends one item to group `label`, which must be an existing group
  /// or K+1 (a new group). Preserves canonical form.
  void add_item(int label);
};

struct GammaHyperprior {
  double shape;
  double rate;
};

struct Concentration {
  double alpha = 1.0;  // > 0
  std::optional<GammaHyperprior> hyperprior;

  void validate() const;
};

/// Seating distribution for the next customer: entry k < K is
/// N_k / (n + alpha), the last entry is alpha / (n + alpha). An empty
/// restaurant returns {1.0}.
std::vector<double> crp_seat_probabilities(const Partition& so_far,
                                           const Concentration& conc);

Partition crp_simulate(std::size_t n, const Concentration& conc,
                       RandomStream& stream);

/// Log probability of a canonical partition under sequential seating:
/// K log(alpha) + sum_k lgamma(N_k) - sum_{i=1..n} log(i - 1 + alpha).
/// Depends only on the group sizes, not on which items share a group.
double crp_log_prob(const Partition& partition, const Concentration& conc);

struct TableGrowth {
  double exact;       // sum_{i=1..n} alpha / (alpha + i - 1)
  double asymptotic;  // alpha * log(n)
};

TableGrowth crp_expected_tables(std::size_t n, const Concentration& conc);

/// Relabels raw group labels by first appearance. Idempotent.
Partition canonicalize(std::span<const int> raw_labels);

/// Visits every partition of n items in canonical form via restricted
/// growth strings. Refuses n > 12 (Bell numbers explode past that).
void for_each_partition(std::size_t n,
                        const std::function<void(const Partition&)>& visit);

}  // namespace bnp

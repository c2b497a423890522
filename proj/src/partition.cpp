#include "bnp/partition.hpp"

#include <cmath>

#include "bnp/errors.hpp"

namespace bnp {

void Partition::add_item(int label) {
  const int next_new = K() + 1;
  if (label < 1 || label > next_new)
    throw UsageError("Partition::add_item: label breaks canonical order");
  assignments.push_back(label);
  if (label == next_new)
    group_sizes.push_back(1);
  else
    ++group_sizes[static_cast<std::size_t>(label) - 1];
}

void Concentration::validate() const {
  if (!(alpha > 0.0))
    throw UsageError("Concentration: alpha must be positive");
  if (hyperprior && (!(hyperprior->shape > 0.0) || !(hyperprior->rate > 0.0)))
    throw UsageError("Concentration: hyperprior parameters must be positive");
}

std::vector<double> crp_seat_probabilities(const Partition& so_far,
                                           const Concentration& conc) {
  conc.validate();
  const auto n = static_cast<double>(so_far.n());
  const double denom = n + conc.alpha;
  std::vector<double> probs;
  probs.reserve(so_far.group_sizes.size() + 1);
  for (std::size_t size : so_far.group_sizes)
    probs.push_back(static_cast<double>(size) / denom);
  probs.push_back(conc.alpha / denom);
  return probs;
}

Partition crp_simulate(std::size_t n, const Concentration& conc,
                       RandomStream& stream) {
  conc.validate();
  if (n == 0) throw UsageError("crp_simulate: n must be at least 1");
  Partition p;
  for (std::size_t i = 0; i < n; ++i) {
    const auto probs = crp_seat_probabilities(p, conc);
    p.add_item(stream.categorical(probs) + 1);
  }
  return p;
}

double crp_log_prob(const Partition& partition, const Concentration& conc) {
  conc.validate();
  double log_p =
      static_cast<double>(partition.K()) * std::log(conc.alpha);
  for (std::size_t size : partition.group_sizes)
    log_p += std::lgamma(static_cast<double>(size));  // log (N_k - 1)!
  const std::size_t n = partition.n();
  for (std::size_t i = 1; i <= n; ++i)
    log_p -= std::log(static_cast<double>(i) - 1.0 + conc.alpha);
  return log_p;
}

TableGrowth crp_expected_tables(std::size_t n, const Concentration& conc) {
  conc.validate();
  if (n == 0) throw UsageError("crp_expected_tables: n must be at least 1");
  double exact = 0.0;
  for (std::size_t i = 1; i <= n; ++i)
    exact += conc.alpha / (conc.alpha + static_cast<double>(i) - 1.0);
  return {exact, conc.alpha * std::log(static_cast<double>(n))};
}

Partition canonicalize(std::span<const int> raw_labels) {
  if (raw_labels.empty())
    throw UsageError("canonicalize: empty assignment list");
  Partition p;
  std::vector<int> remap;  // raw label -> canonical, in appearance order
  std::vector<int> seen_raw;
  for (int raw : raw_labels) {
    int canonical = 0;
    for (std::size_t j = 0; j < seen_raw.size(); ++j) {
      if (seen_raw[j] == raw) {
        canonical = remap[j];
        break;
      }
    }
    if (canonical == 0) {
      canonical = p.K() + 1;
      seen_raw.push_back(raw);
      remap.push_back(canonical);
    }
    p.add_item(canonical);
  }
  return p;
}

void for_each_partition(std::size_t n,
                        const std::function<void(const Partition&)>& visit) {
  if (n == 0) throw UsageError("for_each_partition: n must be at least 1");
  if (n > 12)
    throw GuardRailError(
        "for_each_partition: enumeration capped at n = 12");
  // Restricted growth strings: a[0] = 0 and a[i] <= 1 + max(a[0..i-1]).
  std::vector<int> a(n, 0);
  std::vector<int> max_prefix(n, 0);  // max of a[0..i] as we go
  for (;;) {
    Partition p;
    for (int label : a) p.add_item(label + 1);
    visit(p);
    std::size_t i = n;
    while (i-- > 1) {
      if (a[i] <= max_prefix[i - 1]) break;
    }
    if (i == 0) return;  // a was the last string (0,1,2,...)
    ++a[i];
    max_prefix[i] = std::max(max_prefix[i - 1], a[i]);
    for (std::size_t j = i + 1; j < n; ++j) {
      a[j] = 0;
      max_prefix[j] = max_prefix[j - 1];
    }
  }
}

}  // namespace bnp

#include "bnp/dp_mixture.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "bnp/errors.hpp"

namespace bnp {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Reorders a working state's labels by first appearance so that equal
// groupings compare equal. Returns canonical assignments and the group
// summaries aligned to the new labels.
std::pair<std::vector<int>, std::vector<GaussianSummary>> canonical_snapshot(
    const MixtureGibbsState& state) {
  std::vector<int> relabel(state.groups.size(), 0);
  std::vector<int> assignments(state.assignments.size());
  std::vector<GaussianSummary> groups;
  groups.reserve(state.groups.size());
  int next = 0;
  for (std::size_t i = 0; i < state.assignments.size(); ++i) {
    const auto old_label = static_cast<std::size_t>(state.assignments[i]);
    if (relabel[old_label - 1] == 0) {
      relabel[old_label - 1] = ++next;
      groups.push_back(state.groups[old_label - 1]);
    }
    assignments[i] = relabel[old_label - 1];
  }
  return {std::move(assignments), std::move(groups)};
}

double iid_se(const std::vector<double>& xs) {
  const auto n = static_cast<double>(xs.size());
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= std::max(1.0, n - 1.0);
  return std::sqrt(var / n);
}

// Standard error of the mean of a correlated series via batch means.
double batch_means_se(const std::vector<double>& xs) {
  const std::size_t S = xs.size();
  const auto m = static_cast<std::size_t>(std::sqrt(static_cast<double>(S)));
  const std::size_t B = S / std::max<std::size_t>(m, 1);
  if (B < 2) return iid_se(xs);
  std::vector<double> batch(B, 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t i = 0; i < m; ++i) batch[b] += xs[b * m + i];
    batch[b] /= static_cast<double>(m);
  }
  return iid_se(batch);  // sd(batch means) / sqrt(B)
}

double series_mean(const std::vector<double>& xs) {
  double total = 0.0;
  for (double x : xs) total += x;
  return total / static_cast<double>(xs.size());
}

}  // namespace

MixtureGibbsState dp_gibbs_init(std::span<const double> data,
                                const NormalNormalModel& base,
                                const Concentration& conc,
                                RandomStream& stream) {
  base.validate();
  conc.validate();
  MixtureGibbsState state;
  state.assignments.reserve(data.size());
  std::vector<double> log_weights;
  for (double y : data) {
    log_weights.clear();
    for (const auto& g : state.groups)
      log_weights.push_back(std::log(static_cast<double>(g.count)) +
                            log_posterior_predictive(base, g, y));
    log_weights.push_back(std::log(conc.alpha) +
                          log_prior_predictive(base, y));
    const auto choice =
        static_cast<std::size_t>(stream.categorical_from_log(log_weights));
    if (choice == state.groups.size()) state.groups.emplace_back();
    state.groups[choice].add(y);
    state.assignments.push_back(static_cast<int>(choice) + 1);
  }
  state.log_joint = mixture_log_joint(state, base, conc);
  return state;
}

void dp_gibbs_sweep(MixtureGibbsState& state, const NormalNormalModel& base,
                    const Concentration& conc, std::span<const double> data,
                    RandomStream& stream, const SweepOptions& options) {
  conc.validate();
  if (state.assignments.size() != data.size())
    throw UsageError("dp_gibbs_sweep: state does not match data");
  std::vector<double> log_weights;
  for (std::size_t n = 0; n < data.size(); ++n) {
    const double y = data[n];
    const auto old_label = static_cast<std::size_t>(state.assignments[n]);
    auto& old_group = state.groups[old_label - 1];
    old_group.remove(y);
    if (old_group.count == 0) {
      // Swap-delete the emptied slot; the displaced last group keeps its
      // members, they just wear the freed label now.
      const auto last_label = state.groups.size();
      if (old_label != last_label) {
        state.groups[old_label - 1] = state.groups.back();
        for (auto& a : state.assignments)
          if (a == static_cast<int>(last_label))
            a = static_cast<int>(old_label);
      }
      state.groups.pop_back();
    }

    log_weights.clear();
    for (const auto& g : state.groups)
      log_weights.push_back(std::log(static_cast<double>(g.count)) +
                            log_posterior_predictive(base, g, y));
    if (options.skip_new_group && !state.groups.empty())
      log_weights.push_back(kNegInf);
    else
      log_weights.push_back(std::log(conc.alpha) +
                            log_prior_predictive(base, y));

    const auto choice =
        static_cast<std::size_t>(stream.categorical_from_log(log_weights));
    if (choice == state.groups.size()) state.groups.emplace_back();
    state.groups[choice].add(y);
    state.assignments[n] = static_cast<int>(choice) + 1;
  }
  state.log_joint = mixture_log_joint(state, base, conc);
  ++state.sweep_index;
}

double mixture_log_joint(const MixtureGibbsState& state,
                         const NormalNormalModel& base,
                         const Concentration& conc) {
  conc.validate();
  double log_p =
      static_cast<double>(state.groups.size()) * std::log(conc.alpha);
  for (const auto& g : state.groups) {
    log_p += std::lgamma(static_cast<double>(g.count));
    log_p += marginal_likelihood_normal(base, g);
  }
  const std::size_t n = state.assignments.size();
  for (std::size_t i = 1; i <= n; ++i)
    log_p -= std::log(static_cast<double>(i) - 1.0 + conc.alpha);
  return log_p;
}

Concentration resample_alpha(const MixtureGibbsState& state,
                             const Concentration& current,
                             RandomStream& stream) {
  current.validate();
  if (!current.hyperprior)
    throw UsageError("resample_alpha: concentration carries no hyperprior");
  const std::size_t n = state.assignments.size();
  if (n == 0) throw UsageError("resample_alpha: empty state");
  const double a = current.hyperprior->shape;
  const double b = current.hyperprior->rate;
  const auto K = static_cast<double>(state.groups.size());

  double eta = stream.beta(current.alpha + 1.0, static_cast<double>(n));
  eta = std::max(eta, 1e-300);
  const double rate = b - std::log(eta);
  const double odds = (a + K - 1.0) / (static_cast<double>(n) * rate);
  const double shape =
      stream.uniform() < odds / (1.0 + odds) ? a + K : a + K - 1.0;
  Concentration next = current;
  next.alpha = stream.gamma(shape, rate);
  return next;
}

PosteriorTrace run_mixture_chain(std::span<const double> data,
                                 const NormalNormalModel& base,
                                 const Concentration& conc,
                                 const ChainSettings& settings,
                                 std::uint64_t seed, std::uint64_t stream_id) {
  if (settings.burn_in >= settings.sweeps)
    throw UsageError("run_mixture_chain: burn-in must be below total sweeps");
  if (settings.thin == 0)
    throw UsageError("run_mixture_chain: thin must be at least 1");
  if (settings.resample_concentration && !conc.hyperprior)
    throw UsageError(
        "run_mixture_chain: resampling the concentration needs a hyperprior");
  RandomStream stream(seed, stream_id);
  PosteriorTrace trace;
  trace.burn_in = settings.burn_in;
  trace.total_sweeps = settings.sweeps;
  trace.seed = seed;
  trace.stream_id = stream_id;

  Concentration current = conc;
  MixtureGibbsState state = dp_gibbs_init(data, base, current, stream);
  for (std::size_t s = 1; s <= settings.sweeps; ++s) {
    dp_gibbs_sweep(state, base, current, data, stream);
    if (settings.resample_concentration)
      current = resample_alpha(state, current, stream);
    if (s > settings.burn_in && (s - settings.burn_in) % settings.thin == 0) {
      TraceRecord record;
      record.sweep_index = state.sweep_index;
      auto [assignments, groups] = canonical_snapshot(state);
      record.assignments = std::move(assignments);
      record.groups = std::move(groups);
      record.K = static_cast<int>(record.groups.size());
      record.log_joint = state.log_joint;
      record.alpha = current.alpha;
      trace.records.push_back(std::move(record));
    }
  }
  return trace;
}

std::vector<double> posterior_predictive_density(
    const PosteriorTrace& trace, const NormalNormalModel& base,
    std::span<const double> grid) {
  if (trace.records.empty())
    throw UsageError("posterior_predictive_density: empty trace");
  base.validate();
  std::vector<double> density(grid.size(), 0.0);
  for (const auto& record : trace.records) {
    const auto n = static_cast<double>(record.assignments.size());
    const double denom = n + record.alpha;
    for (std::size_t g = 0; g < grid.size(); ++g) {
      const double y = grid[g];
      double value = record.alpha / denom *
                     std::exp(log_prior_predictive(base, y));
      for (const auto& group : record.groups)
        value += static_cast<double>(group.count) / denom *
                 std::exp(log_posterior_predictive(base, group, y));
      density[g] += value;
    }
  }
  for (double& d : density) d /= static_cast<double>(trace.records.size());
  return density;
}

Eigen::MatrixXd coclustering_matrix(const PosteriorTrace& trace) {
  if (trace.records.empty())
    throw UsageError("coclustering_matrix: empty trace");
  const std::size_t N = trace.records.front().assignments.size();
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(
      static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(N));
  for (const auto& record : trace.records) {
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = i; j < N; ++j)
        if (record.assignments[i] == record.assignments[j]) {
          counts(static_cast<Eigen::Index>(i),
                 static_cast<Eigen::Index>(j)) += 1.0;
          if (i != j)
            counts(static_cast<Eigen::Index>(j),
                   static_cast<Eigen::Index>(i)) += 1.0;
        }
  }
  return counts / static_cast<double>(trace.records.size());
}

std::vector<int> modal_partition(const PosteriorTrace& trace) {
  if (trace.records.empty())
    throw UsageError("modal_partition: empty trace");
  std::map<std::vector<int>, std::size_t> counts;
  for (const auto& record : trace.records) ++counts[record.assignments];
  const auto best = std::max_element(
      counts.begin(), counts.end(), [](const auto& a, const auto& b) {
        return a.second < b.second;
      });
  return best->first;
}

std::vector<std::pair<int, double>> group_count_histogram(
    const PosteriorTrace& trace) {
  std::map<int, std::size_t> counts;
  for (const auto& record : trace.records) ++counts[record.K];
  std::vector<std::pair<int, double>> histogram;
  histogram.reserve(counts.size());
  for (const auto& [k, count] : counts)
    histogram.emplace_back(
        k, static_cast<double>(count) /
               static_cast<double>(trace.records.size()));
  return histogram;
}

namespace {

struct PartitionStats {
  double group_count;
  double largest_group;
  double singletons;
};

PartitionStats stats_of(const std::vector<GaussianSummary>& groups) {
  PartitionStats stats{static_cast<double>(groups.size()), 0.0, 0.0};
  for (const auto& g : groups) {
    stats.largest_group =
        std::max(stats.largest_group, static_cast<double>(g.count));
    if (g.count == 1) stats.singletons += 1.0;
  }
  return stats;
}

}  // namespace

GewekeStat geweke_compare(const std::string& name,
                          const std::vector<double>& forward,
                          const std::vector<double>& chain) {
  GewekeStat stat;
  stat.name = name;
  stat.forward_mean = series_mean(forward);
  stat.forward_se = iid_se(forward);
  stat.chain_mean = series_mean(chain);
  stat.chain_se = batch_means_se(chain);
  const double gap = stat.chain_mean - stat.forward_mean;
  const double se = std::sqrt(stat.forward_se * stat.forward_se +
                              stat.chain_se * stat.chain_se);
  if (se == 0.0) {
    stat.z = 0.0;
    stat.flagged = gap != 0.0;
  } else {
    stat.z = gap / se;
    stat.flagged = std::abs(stat.z) > 4.0;
  }
  return stat;
}

GewekeReport geweke_prior_check(const NormalNormalModel& base,
                                const Concentration& conc, std::size_t n,
                                std::size_t sweeps, RandomStream& stream,
                                const SweepOptions& options) {
  base.validate();
  conc.validate();
  if (n == 0 || sweeps == 0)
    throw UsageError("geweke_prior_check: need items and sweeps");

  std::vector<double> fwd_k, fwd_largest, fwd_single;
  fwd_k.reserve(sweeps);
  for (std::size_t s = 0; s < sweeps; ++s) {
    const auto p = crp_simulate(n, conc, stream);
    double largest = 0.0, singles = 0.0;
    for (std::size_t size : p.group_sizes) {
      largest = std::max(largest, static_cast<double>(size));
      if (size == 1) singles += 1.0;
    }
    fwd_k.push_back(p.K());
    fwd_largest.push_back(largest);
    fwd_single.push_back(singles);
  }

  // Successive-conditional chain: refresh the data from the current
  // grouping, then apply the kernel under test to the refreshed data.
  const double prior_sd = std::sqrt(base.prior_var);
  const double obs_sd = std::sqrt(base.obs_var);
  MixtureGibbsState state;
  {
    const auto p = crp_simulate(n, conc, stream);
    state.assignments = p.assignments;
    state.groups.resize(p.group_sizes.size());
  }
  std::vector<double> data(n, 0.0);
  std::vector<double> chain_k, chain_largest, chain_single;
  chain_k.reserve(sweeps);
  for (std::size_t s = 0; s < sweeps; ++s) {
    std::vector<double> means(state.groups.size());
    for (double& m : means) m = stream.normal(base.prior_mean, prior_sd);
    for (auto& g : state.groups) g = GaussianSummary{};
    for (std::size_t i = 0; i < n; ++i) {
      const auto label = static_cast<std::size_t>(state.assignments[i]);
      data[i] = stream.normal(means[label - 1], obs_sd);
      state.groups[label - 1].add(data[i]);
    }
    dp_gibbs_sweep(state, base, conc, data, stream, options);
    const auto stats = stats_of(state.groups);
    chain_k.push_back(stats.group_count);
    chain_largest.push_back(stats.largest_group);
    chain_single.push_back(stats.singletons);
  }

  GewekeReport report;
  report.sweeps = sweeps;
  report.stats.push_back(geweke_compare("group_count", fwd_k, chain_k));
  report.stats.push_back(
      geweke_compare("largest_group", fwd_largest, chain_largest));
  report.stats.push_back(
      geweke_compare("singleton_count", fwd_single, chain_single));
  for (const auto& stat : report.stats)
    report.any_flagged = report.any_flagged || stat.flagged;
  return report;
}

}  // namespace bnp

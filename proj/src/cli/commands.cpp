#include "cli/commands.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <exception>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <limits>
#include <set>
#include <sstream>
#include <thread>

#include "bnp/csv.hpp"
#include "bnp/dp_mixture.hpp"
#include "bnp/dp_vi.hpp"
#include "bnp/errors.hpp"
#include "bnp/gaussian.hpp"
#include "bnp/ibp.hpp"
#include "bnp/partition.hpp"
#include "bnp/random.hpp"

namespace bnp::cli {

namespace {

using nlohmann::json;

std::string_view trim(std::string_view text) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t'))
    text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' ||
                           text.back() == '\r'))
    text.remove_suffix(1);
  return text;
}

const std::set<std::string>& allowed_keys(const std::string& command) {
  static const std::map<std::string, std::set<std::string>> table = {
      {"simulate",
       {"seed", "out", "model", "chains", "alpha", "n", "m", "k_true",
        "prior_mean", "prior_var", "obs_var", "weight_var", "activation_var",
        "noise_var"}},
      {"fit-mixture",
       {"seed", "out", "input", "chains", "alpha", "alpha_shape",
        "alpha_rate", "sweeps", "burnin", "thin", "prior_mean", "prior_var",
        "obs_var", "grid_min", "grid_max", "grid_points",
        "exact_posterior"}},
      {"fit-factors",
       {"seed", "out", "input", "chains", "alpha", "sweeps", "burnin",
        "thin", "weight_var", "activation_var", "noise_shape",
        "noise_scale"}},
      {"fit-vi",
       {"seed", "out", "input", "alpha", "truncation", "iterations",
        "tolerance", "prior_mean", "prior_var", "obs_var", "grid_min",
        "grid_max", "grid_points"}},
      {"diagnose",
       {"seed", "out", "trace", "geweke", "geweke_n", "geweke_sweeps",
        "geweke_fault", "alpha", "prior_mean", "prior_var", "obs_var"}},
  };
  const auto hit = table.find(command);
  if (hit == table.end())
    throw UsageError("unknown command '" + command + "'");
  return hit->second;
}

const std::string* find_key(const ConfigMap& config, const std::string& key) {
  const auto hit = config.find(key);
  return hit == config.end() ? nullptr : &hit->second;
}

const std::string& require_key(const ConfigMap& config,
                               const std::string& key) {
  const auto* value = find_key(config, key);
  if (value == nullptr)
    throw UsageError("config: missing required key '" + key + "'");
  return *value;
}

double parse_double_value(const std::string& key, const std::string& text) {
  double value = 0.0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  const auto result = std::from_chars(begin, end, value);
  if (result.ec != std::errc() || result.ptr != end || text.empty() ||
      !std::isfinite(value))
    throw UsageError("config: key '" + key + "' expects a finite number, got '" +
                     text + "'");
  return value;
}

double get_double(const ConfigMap& config, const std::string& key,
                  double fallback) {
  const auto* value = find_key(config, key);
  return value == nullptr ? fallback : parse_double_value(key, *value);
}

std::uint64_t parse_u64_value(const std::string& key,
                              const std::string& text) {
  std::uint64_t value = 0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  const auto result = std::from_chars(begin, end, value);
  if (result.ec != std::errc() || result.ptr != end || text.empty())
    throw UsageError("config: key '" + key +
                     "' expects a nonnegative integer, got '" + text + "'");
  return value;
}

std::uint64_t get_u64(const ConfigMap& config, const std::string& key,
                      std::uint64_t fallback) {
  const auto* value = find_key(config, key);
  return value == nullptr ? fallback : parse_u64_value(key, *value);
}

std::size_t get_size(const ConfigMap& config, const std::string& key,
                     std::size_t fallback) {
  return static_cast<std::size_t>(
      get_u64(config, key, static_cast<std::uint64_t>(fallback)));
}

bool get_bool(const ConfigMap& config, const std::string& key,
              bool fallback) {
  const auto* value = find_key(config, key);
  if (value == nullptr) return fallback;
  if (*value == "true" || *value == "1" || *value == "yes") return true;
  if (*value == "false" || *value == "0" || *value == "no") return false;
  throw UsageError("config: key '" + key + "' expects true or false, got '" +
                   *value + "'");
}

std::uint64_t require_seed(const ConfigMap& config) {
  return parse_u64_value("seed", require_key(config, "seed"));
}

std::filesystem::path prepare_out_dir(const ConfigMap& config) {
  std::filesystem::path dir = ".";
  if (const auto* out = find_key(config, "out")) dir = *out;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec && !std::filesystem::is_directory(dir))
    throw UsageError("config: cannot create output directory '" +
                     dir.string() + "'");
  return dir;
}

NormalNormalModel base_model(const ConfigMap& config) {
  NormalNormalModel base{get_double(config, "prior_mean", 0.0),
                         get_double(config, "prior_var", 10.0),
                         get_double(config, "obs_var", 1.0)};
  base.validate();
  return base;
}

// alpha is either a number or the literal "infer" backed by a gamma
// hyperprior; the starting value under "infer" is the prior mean.
Concentration concentration_config(const ConfigMap& config,
                                   bool allow_infer) {
  const auto* text = find_key(config, "alpha");
  if (text != nullptr && *text == "infer") {
    if (!allow_infer)
      throw UsageError("config: key 'alpha' must be numeric here");
    const double shape = get_double(config, "alpha_shape", 1.0);
    const double rate = get_double(config, "alpha_rate", 1.0);
    Concentration conc{shape / rate, GammaHyperprior{shape, rate}};
    conc.validate();
    return conc;
  }
  Concentration conc{get_double(config, "alpha", 1.0), {}};
  conc.validate();
  return conc;
}

void write_json_file(const std::filesystem::path& path, const json& value) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + path.string());
  out << value.dump(2) << '\n';
  if (!out) throw UsageError("write failed for " + path.string());
}

std::vector<double> build_grid(const ConfigMap& config, double data_min,
                               double data_max,
                               const NormalNormalModel& base) {
  const double pad = 4.0 * std::sqrt(base.prior_var + base.obs_var);
  const double lo = get_double(config, "grid_min",
                               std::min(data_min, base.prior_mean) - pad);
  const double hi = get_double(config, "grid_max",
                               std::max(data_max, base.prior_mean) + pad);
  const auto points = get_size(config, "grid_points", 201);
  if (points < 2 || !(hi > lo))
    throw UsageError("config: predictive grid needs grid_min < grid_max and "
                     "grid_points >= 2");
  std::vector<double> grid(points);
  const double step = (hi - lo) / static_cast<double>(points - 1);
  for (std::size_t g = 0; g < points; ++g)
    grid[g] = lo + step * static_cast<double>(g);
  return grid;
}

Eigen::MatrixXd density_table(const std::vector<double>& grid,
                              const std::vector<double>& density) {
  Eigen::MatrixXd table(static_cast<Eigen::Index>(grid.size()), 2);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    table(static_cast<Eigen::Index>(g), 0) = grid[g];
    table(static_cast<Eigen::Index>(g), 1) = density[g];
  }
  return table;
}

double series_mean(const std::vector<double>& xs) {
  double total = 0.0;
  for (const double x : xs) total += x;
  return xs.empty() ? 0.0 : total / static_cast<double>(xs.size());
}

// Standard error of a chain mean via batch means (batch count ~ sqrt(n)).
double chain_se(const std::vector<double>& xs) {
  const std::size_t n = xs.size();
  if (n < 4) return 0.0;
  const auto batches =
      static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(n))));
  const std::size_t width = n / batches;
  std::vector<double> means;
  means.reserve(batches);
  for (std::size_t b = 0; b < batches; ++b) {
    double total = 0.0;
    for (std::size_t i = b * width; i < (b + 1) * width; ++i) total += xs[i];
    means.push_back(total / static_cast<double>(width));
  }
  const double center = series_mean(means);
  double ss = 0.0;
  for (const double m : means) ss += (m - center) * (m - center);
  const double var = ss / static_cast<double>(means.size() - 1);
  return std::sqrt(var / static_cast<double>(means.size()));
}

void run_chain_jobs(std::size_t chains,
                    const std::function<void(std::size_t)>& job) {
  std::vector<std::exception_ptr> failures(chains);
  std::vector<std::thread> workers;
  workers.reserve(chains);
  for (std::size_t c = 0; c < chains; ++c)
    workers.emplace_back([&, c]() {
      try {
        job(c);
      } catch (...) {
        failures[c] = std::current_exception();
      }
    });
  for (auto& worker : workers) worker.join();
  for (const auto& failure : failures)
    if (failure) std::rethrow_exception(failure);
}

// Matrix CSV with a leading integer index column, so zero-width payloads
// still produce a well-formed table.
void write_indexed_csv(const std::filesystem::path& path,
                       const std::string& index_name,
                       const std::string& column_prefix,
                       const Eigen::MatrixXd& values) {
  std::vector<std::string> header{index_name};
  for (Eigen::Index c = 0; c < values.cols(); ++c)
    header.push_back(column_prefix + std::to_string(c + 1));
  Eigen::MatrixXd indexed(values.rows(), values.cols() + 1);
  for (Eigen::Index r = 0; r < values.rows(); ++r)
    indexed(r, 0) = static_cast<double>(r);
  if (values.cols() > 0) indexed.rightCols(values.cols()) = values;
  write_csv(path, header, indexed);
}

void simulate_crp_mixture(const ConfigMap& config) {
  const std::uint64_t seed = require_seed(config);
  const auto out = prepare_out_dir(config);
  const auto n = get_size(config, "n", 0);
  if (n < 1) throw UsageError("config: simulate needs n >= 1");
  const auto chains = get_size(config, "chains", 1);
  if (chains < 1) throw UsageError("config: chains must be >= 1");
  const auto base = base_model(config);
  const auto conc = concentration_config(config, false);

  std::vector<double> chain_group_counts(chains, 0.0);
  for (std::size_t c = 0; c < chains; ++c) {
    RandomStream stream(seed, c);
    const auto partition = crp_simulate(n, conc, stream);
    chain_group_counts[c] = static_cast<double>(partition.K());
    if (c != 0) continue;

    std::vector<double> centers(partition.K());
    for (auto& center : centers)
      center = stream.normal(base.prior_mean, std::sqrt(base.prior_var));
    Eigen::MatrixXd data(static_cast<Eigen::Index>(n), 1);
    Eigen::MatrixXd truth(static_cast<Eigen::Index>(n), 1);
    const double noise_sd = std::sqrt(base.obs_var);
    for (std::size_t i = 0; i < n; ++i) {
      const int label = partition.assignments[i];
      data(static_cast<Eigen::Index>(i), 0) =
          stream.normal(centers[static_cast<std::size_t>(label - 1)],
                        noise_sd);
      truth(static_cast<Eigen::Index>(i), 0) = label;
    }
    write_csv(out / "data.csv", {"y"}, data);
    write_csv(out / "truth_partition.csv", {"group"}, truth);
  }

  json summary;
  summary["command"] = "simulate";
  summary["model"] = "crp-mixture";
  summary["seed"] = seed;
  summary["n"] = n;
  summary["chains"] = chains;
  summary["alpha"] = conc.alpha;
  summary["mean_truth_group_count"] = series_mean(chain_group_counts);
  summary["per_chain_group_count"] = chain_group_counts;
  write_json_file(out / "summary.json", summary);
}

void simulate_ibp_factors(const ConfigMap& config) {
  const std::uint64_t seed = require_seed(config);
  const auto out = prepare_out_dir(config);
  const auto M = get_size(config, "m", 0);
  const auto N = get_size(config, "n", 0);
  if (M < 1 || N < 1)
    throw UsageError("config: simulate needs m >= 1 and n >= 1");
  const auto chains = get_size(config, "chains", 1);
  if (chains < 1) throw UsageError("config: chains must be >= 1");
  const double alpha = get_double(config, "alpha", 1.0);
  if (alpha < 0.0) throw UsageError("config: alpha must be nonnegative");
  const double weight_var = get_double(config, "weight_var", 1.0);
  const double activation_var = get_double(config, "activation_var", 1.0);
  const double noise_var = get_double(config, "noise_var", 1.0);

  std::vector<double> chain_feature_counts(chains, 0.0);
  for (std::size_t c = 0; c < chains; ++c) {
    RandomStream stream(seed, c);
    FactorModelState truth;
    Eigen::MatrixXd Y;
    if (const auto* k_true = find_key(config, "k_true")) {
      FactorGenConfig gen;
      gen.weight_var = weight_var;
      gen.activation_var = activation_var;
      gen.noise_var = noise_var;
      std::tie(Y, truth) = factor_generate(
          gen, M, N, static_cast<std::size_t>(parse_u64_value("k_true", *k_true)),
          stream);
    } else {
      truth.Z = ibp_simulate(M, alpha, stream).Z;
      const Eigen::Index K = truth.Z.cols();
      truth.W = Eigen::MatrixXd::Zero(truth.Z.rows(), K);
      for (Eigen::Index m = 0; m < truth.Z.rows(); ++m)
        for (Eigen::Index k = 0; k < K; ++k)
          if (truth.Z(m, k) != 0)
            truth.W(m, k) = stream.normal(0.0, std::sqrt(weight_var));
      truth.X.resize(K, static_cast<Eigen::Index>(N));
      for (Eigen::Index k = 0; k < K; ++k)
        for (Eigen::Index j = 0; j < truth.X.cols(); ++j)
          truth.X(k, j) = stream.normal(0.0, std::sqrt(activation_var));
      truth.noise_var = noise_var;
      Y = factor_mean(truth);
      for (Eigen::Index m = 0; m < Y.rows(); ++m)
        for (Eigen::Index j = 0; j < Y.cols(); ++j)
          Y(m, j) += stream.normal(0.0, std::sqrt(noise_var));
    }
    chain_feature_counts[c] = static_cast<double>(truth.K());
    if (c != 0) continue;

    std::vector<std::string> data_header;
    for (std::size_t j = 1; j <= N; ++j)
      data_header.push_back("x" + std::to_string(j));
    write_csv(out / "data.csv", data_header, Y);
    write_indexed_csv(out / "truth_z.csv", "row", "f", truth.Z.cast<double>());
    write_indexed_csv(out / "truth_w.csv", "row", "f", truth.W);
    write_indexed_csv(out / "truth_x.csv", "factor", "x", truth.X);
  }

  json summary;
  summary["command"] = "simulate";
  summary["model"] = "ibp-factors";
  summary["seed"] = seed;
  summary["m"] = M;
  summary["n"] = N;
  summary["chains"] = chains;
  summary["alpha"] = alpha;
  summary["mean_truth_feature_count"] = series_mean(chain_feature_counts);
  summary["per_chain_feature_count"] = chain_feature_counts;
  write_json_file(out / "summary.json", summary);
}

}  // namespace

ConfigMap parse_config_text(std::string_view text) {
  ConfigMap config;
  std::size_t start = 0;
  std::size_t line_number = 0;
  while (start <= text.size()) {
    std::size_t newline = text.find('\n', start);
    if (newline == std::string_view::npos) newline = text.size();
    std::string_view line = text.substr(start, newline - start);
    start = newline + 1;
    ++line_number;
    const std::size_t comment = line.find('#');
    if (comment != std::string_view::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t equals = line.find('=');
    if (equals == std::string_view::npos)
      throw UsageError("config: line " + std::to_string(line_number) +
                       " is not key=value");
    const auto key = trim(line.substr(0, equals));
    const auto value = trim(line.substr(equals + 1));
    if (key.empty())
      throw UsageError("config: line " + std::to_string(line_number) +
                       " has an empty key");
    config[std::string(key)] = std::string(value);
  }
  return config;
}

ConfigMap load_command_config(
    const std::string& command,
    const std::optional<std::filesystem::path>& config_file,
    const std::vector<std::pair<std::string, std::string>>& overrides) {
  const auto& allowed = allowed_keys(command);
  ConfigMap config;
  if (config_file) {
    std::ifstream in(*config_file, std::ios::binary);
    if (!in)
      throw UsageError("config: cannot open '" + config_file->string() + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    config = parse_config_text(buffer.str());
  }
  for (const auto& [key, value] : overrides) config[key] = value;
  for (const auto& [key, value] : config)
    if (!allowed.contains(key))
      throw UsageError("config: unknown key '" + key + "' for command '" +
                       command + "'");
  return config;
}

void run_simulate(const ConfigMap& config) {
  const auto& model = require_key(config, "model");
  if (model == "crp-mixture")
    simulate_crp_mixture(config);
  else if (model == "ibp-factors")
    simulate_ibp_factors(config);
  else
    throw UsageError("config: key 'model' must be crp-mixture or "
                     "ibp-factors for simulate, got '" +
                     model + "'");
}

void run_fit_mixture(const ConfigMap& config) {
  const std::uint64_t seed = require_seed(config);
  const auto out = prepare_out_dir(config);
  const auto table = read_csv(require_key(config, "input"));
  if (table.rows() == 0) throw ParseError("fit-mixture: dataset is empty");
  if (table.cols() != 1)
    throw UsageError("fit-mixture expects a single numeric column, got " +
                     std::to_string(table.cols()));
  std::vector<double> data(table.values.data(),
                           table.values.data() + table.rows());

  const auto base = base_model(config);
  const auto conc = concentration_config(config, true);
  const auto chains = get_size(config, "chains", 1);
  if (chains < 1) throw UsageError("config: chains must be >= 1");

  ChainSettings settings;
  settings.sweeps = get_size(config, "sweeps", 100);
  settings.burn_in = get_size(config, "burnin", settings.sweeps / 2);
  settings.thin = get_size(config, "thin", 1);
  settings.resample_concentration = conc.hyperprior.has_value();

  std::vector<PosteriorTrace> traces(chains);
  run_chain_jobs(chains, [&](std::size_t c) {
    traces[c] = run_mixture_chain(data, base, conc, settings, seed, c);
  });

  std::size_t total_records = 0;
  for (const auto& trace : traces) total_records += trace.records.size();

  Eigen::MatrixXd trace_rows(static_cast<Eigen::Index>(total_records), 5);
  PosteriorTrace merged;
  merged.burn_in = settings.burn_in;
  merged.total_sweeps = settings.sweeps;
  merged.seed = seed;
  merged.records.reserve(total_records);
  Eigen::Index row = 0;
  for (std::size_t c = 0; c < chains; ++c)
    for (const auto& record : traces[c].records) {
      trace_rows(row, 0) = static_cast<double>(c);
      trace_rows(row, 1) = static_cast<double>(record.sweep_index);
      trace_rows(row, 2) = static_cast<double>(record.K);
      trace_rows(row, 3) = record.alpha;
      trace_rows(row, 4) = record.log_joint;
      ++row;
      merged.records.push_back(record);
    }
  write_csv(out / "trace.csv",
            {"chain", "sweep", "group_count", "alpha", "log_joint"},
            trace_rows);

  write_csv(out / "coclustering.csv", {}, coclustering_matrix(merged));

  const auto modal = modal_partition(merged);
  Eigen::MatrixXd assignments(static_cast<Eigen::Index>(modal.size()), 1);
  for (std::size_t i = 0; i < modal.size(); ++i)
    assignments(static_cast<Eigen::Index>(i), 0) = modal[i];
  write_csv(out / "map_assignments.csv", {"group"}, assignments);

  const auto grid =
      build_grid(config, table.values.col(0).minCoeff(),
                 table.values.col(0).maxCoeff(), base);
  write_csv(out / "predictive.csv", {"x", "density"},
            density_table(grid, posterior_predictive_density(merged, base, grid)));

  double mean_k = 0.0;
  double mean_alpha = 0.0;
  for (const auto& record : merged.records) {
    mean_k += static_cast<double>(record.K);
    mean_alpha += record.alpha;
  }
  mean_k /= static_cast<double>(merged.records.size());
  mean_alpha /= static_cast<double>(merged.records.size());

  json khist;
  for (const auto& [k, frequency] : group_count_histogram(merged))
    khist[std::to_string(k)] = frequency;

  // Optional small-n validation: total variation between the recorded
  // partition frequencies and the exact enumerated posterior. Enumeration
  // refuses datasets past its size cap.
  std::optional<double> exact_tv;
  if (get_bool(config, "exact_posterior", false)) {
    if (conc.hyperprior.has_value())
      throw UsageError("config: exact_posterior needs a fixed numeric alpha");
    std::map<std::vector<int>, double> exact_log;
    std::vector<double> log_terms;
    for_each_partition(data.size(), [&](const Partition& partition) {
      double log_weight = crp_log_prob(partition, conc);
      std::vector<std::vector<double>> members(
          static_cast<std::size_t>(partition.K()));
      for (std::size_t i = 0; i < data.size(); ++i)
        members[static_cast<std::size_t>(partition.assignments[i] - 1)]
            .push_back(data[i]);
      for (const auto& group : members)
        log_weight += marginal_likelihood_normal(base, group);
      exact_log[partition.assignments] = log_weight;
      log_terms.push_back(log_weight);
    });
    const double log_norm = log_sum_exp(log_terms);
    std::map<std::vector<int>, double> empirical;
    for (const auto& record : merged.records)
      empirical[record.assignments] +=
          1.0 / static_cast<double>(merged.records.size());
    double tv = 0.0;
    for (const auto& [assignments, log_weight] : exact_log) {
      const auto hit = empirical.find(assignments);
      const double observed = hit == empirical.end() ? 0.0 : hit->second;
      tv += std::abs(observed - std::exp(log_weight - log_norm));
    }
    for (const auto& [assignments, observed] : empirical)
      if (!exact_log.contains(assignments)) tv += observed;
    exact_tv = 0.5 * tv;
  }

  json summary;
  summary["command"] = "fit-mixture";
  summary["seed"] = seed;
  summary["n"] = table.rows();
  summary["chains"] = chains;
  summary["sweeps"] = settings.sweeps;
  summary["burnin"] = settings.burn_in;
  summary["thin"] = settings.thin;
  summary["alpha_mode"] =
      conc.hyperprior.has_value() ? "infer" : "fixed";
  summary["alpha_start"] = conc.alpha;
  summary["mean_alpha"] = mean_alpha;
  summary["mean_group_count"] = mean_k;
  summary["group_count_histogram"] = khist;
  if (exact_tv) summary["exact_posterior_tv"] = *exact_tv;
  write_json_file(out / "summary.json", summary);
}

void run_fit_factors(const ConfigMap& config) {
  const std::uint64_t seed = require_seed(config);
  const auto out = prepare_out_dir(config);
  const auto table = read_csv(require_key(config, "input"));
  if (table.rows() == 0) throw ParseError("fit-factors: dataset is empty");
  const Eigen::MatrixXd& Y = table.values;

  FactorPriors priors;
  priors.weight_var = get_double(config, "weight_var", 1.0);
  priors.activation_var = get_double(config, "activation_var", 1.0);
  priors.alpha = get_double(config, "alpha", 1.0);
  priors.noise_shape = get_double(config, "noise_shape", 1.0);
  priors.noise_scale = get_double(config, "noise_scale", 1.0);
  priors.validate();

  FactorChainSettings settings;
  settings.sweeps = get_size(config, "sweeps", 1000);
  settings.burn_in = get_size(config, "burnin", settings.sweeps / 2);
  settings.thin = get_size(config, "thin", 1);
  const auto chains = get_size(config, "chains", 1);
  if (chains < 1) throw UsageError("config: chains must be >= 1");

  std::vector<FactorTrace> traces(chains);
  run_chain_jobs(chains, [&](std::size_t c) {
    traces[c] = run_factor_chain(Y, priors, settings, seed, c);
  });

  std::size_t total_records = 0;
  for (const auto& trace : traces) total_records += trace.records.size();
  Eigen::MatrixXd trace_rows(static_cast<Eigen::Index>(total_records), 4);
  Eigen::Index row = 0;
  const FactorRecord* map_record = nullptr;
  std::map<std::size_t, double> khist;
  double mean_k = 0.0;
  for (std::size_t c = 0; c < chains; ++c)
    for (const auto& record : traces[c].records) {
      trace_rows(row, 0) = static_cast<double>(c);
      trace_rows(row, 1) = static_cast<double>(record.sweep_index);
      trace_rows(row, 2) = static_cast<double>(record.state.K());
      trace_rows(row, 3) = record.log_joint;
      ++row;
      if (map_record == nullptr || record.log_joint > map_record->log_joint)
        map_record = &record;
      khist[record.state.K()] += 1.0;
      mean_k += static_cast<double>(record.state.K());
    }
  if (map_record == nullptr)
    throw UsageError("fit-factors: no recorded sweeps");
  mean_k /= static_cast<double>(total_records);
  write_csv(out / "trace.csv",
            {"chain", "sweep", "feature_count", "log_joint"}, trace_rows);

  Eigen::MatrixXd khist_rows(static_cast<Eigen::Index>(khist.size()), 2);
  Eigen::Index h = 0;
  for (const auto& [k, count] : khist) {
    khist_rows(h, 0) = static_cast<double>(k);
    khist_rows(h, 1) = count / static_cast<double>(total_records);
    ++h;
  }
  write_csv(out / "khist.csv", {"feature_count", "frequency"}, khist_rows);

  const FactorModelState& map_state = map_record->state;
  write_indexed_csv(out / "map_z.csv", "row", "f", map_state.Z.cast<double>());
  write_indexed_csv(out / "map_w.csv", "row", "f", map_state.W);

  // Leading factor: the most popular column of the MAP state.
  Eigen::MatrixXd leading(map_state.Z.rows(), 1);
  leading.setZero();
  if (map_state.Z.cols() > 0) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < map_state.Z.cols(); ++k)
      if (map_state.Z.col(k).sum() > map_state.Z.col(best).sum()) best = k;
    leading = (map_state.Z.col(best).cast<double>().cwiseProduct(
                   map_state.W.col(best)))
                  .eval();
  }
  write_csv(out / "first_factor.csv", {"loading"}, leading);

  json summary;
  summary["command"] = "fit-factors";
  summary["seed"] = seed;
  summary["m"] = Y.rows();
  summary["n"] = Y.cols();
  summary["chains"] = chains;
  summary["sweeps"] = settings.sweeps;
  summary["burnin"] = settings.burn_in;
  summary["thin"] = settings.thin;
  summary["alpha"] = priors.alpha;
  summary["mean_feature_count"] = mean_k;
  summary["map_feature_count"] = map_state.K();
  summary["map_log_joint"] = map_record->log_joint;
  summary["map_noise_var"] = map_state.noise_var;
  write_json_file(out / "summary.json", summary);
}

void run_fit_vi(const ConfigMap& config) {
  const std::uint64_t seed = require_seed(config);
  const auto out = prepare_out_dir(config);
  const auto table = read_csv(require_key(config, "input"));
  if (table.rows() == 0) throw ParseError("fit-vi: dataset is empty");

  const auto base = base_model(config);
  const auto* alpha_text = find_key(config, "alpha");
  if (alpha_text != nullptr && *alpha_text == "infer")
    throw UsageError("config: fit-vi requires a numeric alpha");
  const double alpha = get_double(config, "alpha", 1.0);
  const auto T = get_size(config, "truncation", 50);
  const auto max_iterations = get_size(config, "iterations", 500);
  const double tolerance = get_double(config, "tolerance", 1e-6);
  if (T < 1 || max_iterations < 1 || !(tolerance > 0.0))
    throw UsageError("config: fit-vi needs truncation >= 1, iterations >= 1, "
                     "tolerance > 0");

  RandomStream stream(seed, 0);
  auto state = vi_init(table.values, T, alpha, base, stream);

  std::vector<double> elbos;
  VariationalState snapshot1 = state;
  VariationalState snapshot5 = state;
  bool have5 = false;
  bool converged = false;
  double previous = -std::numeric_limits<double>::infinity();
  std::size_t quiet = 0;
  for (std::size_t iteration = 1; iteration <= max_iterations; ++iteration) {
    const double elbo = cavi_iterate(state, table.values, alpha, base);
    elbos.push_back(elbo);
    if (iteration == 1) snapshot1 = state;
    if (iteration == 5) {
      snapshot5 = state;
      have5 = true;
    }
    if (elbo - previous < tolerance) {
      if (++quiet >= 3) {
        converged = true;
        break;
      }
    } else {
      quiet = 0;
    }
    previous = elbo;
  }

  Eigen::MatrixXd elbo_rows(static_cast<Eigen::Index>(elbos.size()), 2);
  for (std::size_t i = 0; i < elbos.size(); ++i) {
    elbo_rows(static_cast<Eigen::Index>(i), 0) = static_cast<double>(i + 1);
    elbo_rows(static_cast<Eigen::Index>(i), 1) = elbos[i];
  }
  write_csv(out / "elbo.csv", {"iteration", "elbo"}, elbo_rows);

  if (table.cols() == 1) {
    const auto grid =
        build_grid(config, table.values.col(0).minCoeff(),
                   table.values.col(0).maxCoeff(), base);
    write_csv(out / "predictive_iter1.csv", {"x", "density"},
              density_table(grid, vi_predictive_density(snapshot1, base, grid)));
    write_csv(out / "predictive_iter5.csv", {"x", "density"},
              density_table(grid, vi_predictive_density(
                                      have5 ? snapshot5 : state, base, grid)));
    write_csv(out / "predictive_final.csv", {"x", "density"},
              density_table(grid, vi_predictive_density(state, base, grid)));
  }

  const auto weights = expected_stick_weights(state);
  std::size_t effective = 0;
  for (const double w : weights)
    if (w > 0.01) ++effective;

  json summary;
  summary["command"] = "fit-vi";
  summary["seed"] = seed;
  summary["n"] = table.rows();
  summary["dimensions"] = table.cols();
  summary["truncation"] = T;
  summary["alpha"] = alpha;
  summary["iterations_run"] = elbos.size();
  summary["converged"] = converged;
  summary["final_elbo"] = elbos.back();
  summary["expected_weights"] = weights;
  summary["effective_components"] = effective;
  write_json_file(out / "summary.json", summary);
}

void run_diagnose(const ConfigMap& config) {
  const std::uint64_t seed = require_seed(config);
  const auto out = prepare_out_dir(config);
  const auto table = read_csv(require_key(config, "trace"));
  if (!table.has_header())
    throw ParseError("diagnose: trace file has no header row");
  Eigen::Index chain_col = -1;
  Eigen::Index k_col = -1;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (table.header[c] == "chain") chain_col = static_cast<Eigen::Index>(c);
    if (table.header[c] == "group_count")
      k_col = static_cast<Eigen::Index>(c);
  }
  if (chain_col < 0 || k_col < 0)
    throw ParseError("diagnose: trace needs 'chain' and 'group_count' columns");
  if (table.rows() == 0) throw ParseError("diagnose: trace has no records");

  std::map<double, std::vector<double>> per_chain;
  for (Eigen::Index r = 0; r < table.rows(); ++r)
    per_chain[table.values(r, chain_col)].push_back(table.values(r, k_col));

  json chains = json::array();
  std::vector<std::pair<double, double>> summaries;  // mean, se
  for (const auto& [chain, ks] : per_chain) {
    const double mean = series_mean(ks);
    const double se = chain_se(ks);
    summaries.emplace_back(mean, se);
    json entry;
    entry["chain"] = chain;
    entry["records"] = ks.size();
    entry["mean_group_count"] = mean;
    entry["se"] = se;
    chains.push_back(entry);
  }

  double discrepancy = 0.0;
  bool discrepancy_flagged = false;
  for (std::size_t i = 0; i < summaries.size(); ++i)
    for (std::size_t j = i + 1; j < summaries.size(); ++j) {
      const double gap = std::abs(summaries[i].first - summaries[j].first);
      const double se = std::sqrt(summaries[i].second * summaries[i].second +
                                  summaries[j].second * summaries[j].second);
      discrepancy = std::max(discrepancy, gap);
      if (se == 0.0 ? gap != 0.0 : gap > 4.0 * se) discrepancy_flagged = true;
    }

  json report;
  report["command"] = "diagnose";
  report["seed"] = seed;
  report["chains"] = chains;
  report["between_chain_discrepancy"] = discrepancy;
  report["between_chain_flagged"] = discrepancy_flagged;

  if (get_bool(config, "geweke", false)) {
    const auto base = base_model(config);
    const auto conc = concentration_config(config, false);
    const auto n = get_size(config, "geweke_n", 20);
    const auto sweeps = get_size(config, "geweke_sweeps", 5000);
    SweepOptions options;
    if (const auto* fault = find_key(config, "geweke_fault")) {
      if (*fault == "skip-new-group")
        options.skip_new_group = true;
      else if (!fault->empty())
        throw UsageError("config: key 'geweke_fault' accepts skip-new-group, "
                         "got '" + *fault + "'");
    }
    RandomStream stream(seed, 0);
    const auto geweke = geweke_prior_check(base, conc, n, sweeps, stream,
                                           options);
    json stats = json::array();
    for (const auto& stat : geweke.stats) {
      json entry;
      entry["name"] = stat.name;
      entry["forward_mean"] = stat.forward_mean;
      entry["forward_se"] = stat.forward_se;
      entry["chain_mean"] = stat.chain_mean;
      entry["chain_se"] = stat.chain_se;
      entry["z"] = stat.z;
      entry["flagged"] = stat.flagged;
      stats.push_back(entry);
    }
    json geweke_json;
    geweke_json["sweeps"] = geweke.sweeps;
    geweke_json["stats"] = stats;
    geweke_json["any_flagged"] = geweke.any_flagged;
    report["geweke"] = geweke_json;
  }

  write_json_file(out / "diagnose.json", report);
}

void run_command(const std::string& command, const ConfigMap& config) {
  if (command == "simulate") return run_simulate(config);
  if (command == "fit-mixture") return run_fit_mixture(config);
  if (command == "fit-factors") return run_fit_factors(config);
  if (command == "fit-vi") return run_fit_vi(config);
  if (command == "diagnose") return run_diagnose(config);
  throw UsageError("unknown command '" + command + "'");
}

}  // namespace bnp::cli

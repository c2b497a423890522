#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace bnp::cli {

using ConfigMap = std::map<std::string, std::string>;

/// Parse flat key=value lines; '#' starts a comment, blank lines ignored.
ConfigMap parse_config_text(std::string_view text);

/// Merge a config file (optional) with command-line overrides, overrides
/// winning, and reject keys the given command does not document.
ConfigMap load_command_config(
    const std::string& command,
    const std::optional<std::filesystem::path>& config_file,
    const std::vector<std::pair<std::string, std::string>>& overrides);

void run_simulate(const ConfigMap& config);
void run_fit_mixture(const ConfigMap& config);
void run_fit_factors(const ConfigMap& config);
void run_fit_vi(const ConfigMap& config);
void run_diagnose(const ConfigMap& config);

/// Dispatch by subcommand name; throws UsageError for unknown commands.
void run_command(const std::string& command, const ConfigMap& config);

}  // namespace bnp::cli

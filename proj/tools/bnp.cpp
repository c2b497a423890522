#include <cstdio>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "bnp/errors.hpp"
#include "cli/commands.hpp"

namespace {

// Tokens after the subcommand: an optional leading config-file path, then
// --key value (or --key=value) override pairs.
struct SubcommandArgs {
  std::optional<std::filesystem::path> config_file;
  std::vector<std::pair<std::string, std::string>> overrides;
};

SubcommandArgs parse_subcommand_args(const std::vector<std::string>& tokens) {
  SubcommandArgs args;
  std::size_t i = 0;
  if (!tokens.empty() && tokens[0].rfind("--", 0) != 0) {
    args.config_file = tokens[0];
    i = 1;
  }
  for (; i < tokens.size(); ++i) {
    const std::string& token = tokens[i];
    if (token.rfind("--", 0) != 0 || token.size() <= 2)
      throw bnp::UsageError("expected a --key value override, got '" + token +
                            "'");
    std::string key = token.substr(2);
    std::string value;
    const std::size_t equals = key.find('=');
    if (equals != std::string::npos) {
      value = key.substr(equals + 1);
      key = key.substr(0, equals);
    } else {
      if (i + 1 >= tokens.size())
        throw bnp::UsageError("override '--" + key + "' is missing a value");
      value = tokens[++i];
    }
    if (key.empty())
      throw bnp::UsageError("override with an empty key near '" + token + "'");
    args.overrides.emplace_back(std::move(key), std::move(value));
  }
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nonparametric mixture and latent feature models"};
  app.require_subcommand(1);

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"simulate", "Draw synthetic datasets from the generative models"},
      {"fit-mixture", "Collapsed Gibbs sampling for the normal mixture"},
      {"fit-factors", "Gibbs sampling for the binary latent factor model"},
      {"fit-vi", "Variational inference for the normal mixture"},
      {"diagnose", "Chain comparison and sampler correctness checks"},
  };
  for (const auto& [name, description] : commands) {
    auto* sub = app.add_subcommand(name, description);
    sub->allow_extras();
    sub->footer("Usage: " + name +
                " [config-file] [--key value]...\n"
                "Overrides take precedence over config-file entries.");
  }

  std::string chosen;
  std::vector<std::string> tokens;
  try {
    app.parse(argc, argv);
    for (const auto& [name, description] : commands)
      if (app.get_subcommand(name)->parsed()) {
        chosen = name;
        tokens = app.get_subcommand(name)->remaining();
      }
  } catch (const CLI::CallForHelp& help) {
    return app.exit(help);
  } catch (const CLI::ParseError& error) {
    app.exit(error);
    return 3;
  }

  try {
    const auto args = parse_subcommand_args(tokens);
    const auto config =
        bnp::cli::load_command_config(chosen, args.config_file, args.overrides);
    bnp::cli::run_command(chosen, config);
    return 0;
  } catch (const bnp::ParseError& error) {
    std::fprintf(stderr, "error: %s\n", error.what());
    return 2;
  } catch (const bnp::GuardRailError& error) {
    std::fprintf(stderr, "error: %s\n", error.what());
    return 4;
  } catch (const bnp::UsageError& error) {
    std::fprintf(stderr, "error: %s\n", error.what());
    return 3;
  } catch (const std::exception& error) {
    std::fprintf(stderr, "internal error: %s\n", error.what());
    return 1;
  }
}

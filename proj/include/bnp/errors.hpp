#pragma once

#include <stdexcept>
#include <string>

namespace bnp {

/// Invalid arguments or preconditions violated by the caller.
class UsageError : public std::invalid_argument {
 public:
  explicit UsageError(const std::string& what) : std::invalid_argument(what) {}
};

/// Malformed input data (CSV cells, config files).
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

/// Refusal to run an instance past a documented size cap. A kind of usage
/// error, but kept distinct so the CLI can report it under its own exit code.
class GuardRailError : public UsageError {
 public:
  explicit GuardRailError(const std::string& what) : UsageError(what) {}
};

}  // namespace bnp

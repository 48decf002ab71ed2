#pragma once
// Exception types that map to distinct process exit codes at the CLI layer.

#include <stdexcept>
#include <string>

namespace fdfo {

// Configuration / schema / usage problems (exit code 2).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Training produced non-finite values (exit code 3).
struct DivergenceError : std::runtime_error {
  explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace fdfo

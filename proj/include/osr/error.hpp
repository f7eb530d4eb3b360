#pragma once

#include <stdexcept>
#include <string>

namespace osr {

// Process exit codes shared between exceptions and the CLI.
enum class ExitCode : int {
  ok = 0,
  config = 2,
  data = 3,
  numeric = 4,
};

class Error : public std::runtime_error {
public:
  Error(ExitCode code, const std::string& msg)
      : std::runtime_error(msg), code_(code) {}

  ExitCode code() const noexcept { return code_; }
  int exit_code() const noexcept { return static_cast<int>(code_); }

private:
  ExitCode code_;
};

// Bad configuration, bad wiring, invalid arguments.
struct ConfigError : Error {
  explicit ConfigError(const std::string& m) : Error(ExitCode::config, m) {}
};

// Missing or malformed files and datasets.
struct DataError : Error {
  explicit DataError(const std::string& m) : Error(ExitCode::data, m) {}
};

// Non-finite values, failed numeric preconditions.
struct NumericError : Error {
  explicit NumericError(const std::string& m) : Error(ExitCode::numeric, m) {}
};

// Tensor shape mismatch; reports node ids and expected/actual shapes.
struct ShapeError : ConfigError {
  explicit ShapeError(const std::string& m) : ConfigError(m) {}
};

}  // namespace osr

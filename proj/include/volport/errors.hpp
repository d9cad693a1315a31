#pragma once

#include <stdexcept>
#include <string>

namespace volport {

// Exit-code contract of the command-line front end.
enum class ExitCode : int { ok = 0, usage = 1, data = 2, numerical = 3 };

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what, ExitCode code)
      : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

private:
  ExitCode code_;
};

/// Bad arguments or configuration.
class UsageError : public Error {
public:
  explicit UsageError(const std::string& what) : Error(what, ExitCode::usage) {}
};

/// Malformed, missing or inconsistent market data.
class DataError : public Error {
public:
  explicit DataError(const std::string& what) : Error(what, ExitCode::data) {}
};

/// Non-finite values, invalid model parameters, degenerate fits.
class NumericalError : public Error {
public:
  explicit NumericalError(const std::string& what) : Error(what, ExitCode::numerical) {}
};

} // namespace volport

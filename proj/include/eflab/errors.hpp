#pragma once

#include <stdexcept>
#include <string>

namespace eflab {

/// Error classes map onto the CLI exit codes (config=2, data=3, numeric=4, budget=5).
enum class ErrorClass { config = 2, data = 3, numeric = 4, budget = 5 };

class Error : public std::runtime_error {
public:
  Error(ErrorClass cls, std::string const& what) : std::runtime_error(what), cls_(cls) {}
  ErrorClass error_class() const noexcept { return cls_; }
  int exit_code() const noexcept { return static_cast<int>(cls_); }

private:
  ErrorClass cls_;
};

struct ConfigError : Error {
  explicit ConfigError(std::string const& what) : Error(ErrorClass::config, what) {}
};
struct DataError : Error {
  explicit DataError(std::string const& what) : Error(ErrorClass::data, what) {}
};
struct NumericError : Error {
  explicit NumericError(std::string const& what) : Error(ErrorClass::numeric, what) {}
};
struct BudgetError : Error {
  explicit BudgetError(std::string const& what) : Error(ErrorClass::budget, what) {}
};

// Precondition violations on numeric arguments (t outside [0,1], lambda <= 0, ...).
struct DomainError : NumericError {
  explicit DomainError(std::string const& what) : NumericError("domain error: " + what) {}
};

}  // namespace eflab

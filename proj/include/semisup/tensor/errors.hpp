#pragma once

#include <stdexcept>
#include <string>

namespace semisup {

// Error categories map to CLI exit codes (see tools/).
enum class ErrorCategory { Config = 2, Io = 3, Numeric = 4, Shape = 5, Value = 6, Internal = 1 };

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory cat, const std::string& msg) : std::runtime_error(msg), cat_(cat) {}
  ErrorCategory category() const { return cat_; }

 private:
  ErrorCategory cat_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& m) : Error(ErrorCategory::Config, m) {}
};
struct IoError : Error {
  explicit IoError(const std::string& m) : Error(ErrorCategory::Io, m) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& m) : Error(ErrorCategory::Numeric, m) {}
};
struct ShapeError : Error {
  explicit ShapeError(const std::string& m) : Error(ErrorCategory::Shape, m) {}
};
struct ValueError : Error {
  explicit ValueError(const std::string& m) : Error(ErrorCategory::Value, m) {}
};

}  // namespace semisup

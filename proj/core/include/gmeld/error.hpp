#pragma once

#include <stdexcept>
#include <string>

namespace gmeld {

// Every failure raised by the library carries a short machine-readable code.
// The CLI prints "<code>: <message>" and exits nonzero.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

struct DimensionError : Error {
  explicit DimensionError(const std::string& m) : Error("E_DIMENSION", m) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& m) : Error("E_NUMERIC", m) {}
};

struct ContractError : Error {
  explicit ContractError(const std::string& m) : Error("E_CONTRACT", m) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& m) : Error("E_SCHEMA", m) {}
};

struct FormatError : Error {
  explicit FormatError(const std::string& m) : Error("E_FORMAT", m) {}
};

struct VersionError : Error {
  explicit VersionError(const std::string& m) : Error("E_VERSION", m) {}
};

struct ChecksumError : Error {
  explicit ChecksumError(const std::string& m) : Error("E_CHECKSUM", m) {}
};

struct GenerationError : Error {
  explicit GenerationError(const std::string& m) : Error("E_GENERATION", m) {}
};

struct IoError : Error {
  explicit IoError(const std::string& m) : Error("E_IO", m) {}
};

}  // namespace gmeld

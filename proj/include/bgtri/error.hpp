#pragma once

#include <stdexcept>
#include <string>

namespace bgt {

/// Base of every error the library throws. `code()` is a short
/// machine-readable tag the CLI prints on failure.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& what)
      : std::runtime_error(what), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

/// Precondition violated by the caller.
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what) : Error("contract", what) {}
};

class MissingFileError : public Error {
 public:
  explicit MissingFileError(const std::string& what) : Error("missing_file", what) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error("malformed", what) {}
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what) : Error("dimension_mismatch", what) {}
};

class VersionError : public Error {
 public:
  explicit VersionError(const std::string& what) : Error("version_mismatch", what) {}
};

/// Non-finite values showed up where they must not (gradients, parameters).
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error("numeric", what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error("io", what) {}
};

}  // namespace bgt

// Copyright 2026 The cl4ac-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <stdexcept>
#include <string>

namespace cl4ac {

// Broad failure classes. The C API maps each class onto a status code, which
// the command line tool returns as its exit code.
enum class ErrorKind {
  kInternal,    // contract violation, shape mismatch, bug
  kInput,       // bad file, bad config, malformed data
  kNumeric,     // non-finite value, domain error
  kGradcheck,   // gradient verification failed
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& w) : Error(ErrorKind::kInternal, "shape error: " + w) {}
};
struct ContractError : Error {
  explicit ContractError(const std::string& w) : Error(ErrorKind::kInternal, "contract error: " + w) {}
};
struct DomainError : Error {
  explicit DomainError(const std::string& w) : Error(ErrorKind::kNumeric, "domain error: " + w) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& w) : Error(ErrorKind::kNumeric, w) {}
};
struct InputError : Error {
  explicit InputError(const std::string& w) : Error(ErrorKind::kInput, w) {}
};
struct FormatError : Error {
  explicit FormatError(const std::string& w) : Error(ErrorKind::kInput, "format error: " + w) {}
};
struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(ErrorKind::kInput, "config error: " + w) {}
};
struct IoError : Error {
  explicit IoError(const std::string& w) : Error(ErrorKind::kInput, "i/o error: " + w) {}
};
struct ConflictError : Error {
  explicit ConflictError(const std::string& w) : Error(ErrorKind::kInput, "conflict: " + w) {}
};
struct CorruptionError : Error {
  explicit CorruptionError(const std::string& w) : Error(ErrorKind::kInput, "corrupt file: " + w) {}
};
struct VersionError : Error {
  explicit VersionError(const std::string& w) : Error(ErrorKind::kInput, "version mismatch: " + w) {}
};

}  // namespace cl4ac

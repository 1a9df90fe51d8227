#pragma once

#include <stdexcept>
#include <string>

namespace trajkit {

// Broad failure classes. The CLI maps these onto its exit-code contract.
enum class ErrorKind {
  kParse,       // malformed input text or numbers
  kValidation,  // well-formed input that violates a model invariant
  kFormat,      // binary container problems (magic, version, checksum, truncation)
  kRatio,       // non-integer resampling ratio
  kNotFound,    // unknown tag, lane, scene, agent
  kEmpty,       // a query produced nothing where something was required
  kIo,          // filesystem failures
  kArgument,    // caller passed an out-of-contract argument
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Distinct container failures so callers can tell a truncated file from a
// corrupted one.
enum class FormatFault { kMagic, kVersion, kTruncated, kChecksum, kCorrupt };

class FormatError : public Error {
 public:
  FormatError(FormatFault fault, const std::string& what)
      : Error(ErrorKind::kFormat, what), fault_(fault) {}

  FormatFault fault() const noexcept { return fault_; }

 private:
  FormatFault fault_;
};

}  // namespace trajkit

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace attnvlad {

// Classification of every failure the pipeline can report. Each stage maps
// its problems onto one of these so callers (and the CLI) can react without
// parsing messages.
enum class ErrorKind {
  Io,               // sink/source failure, missing files
  Format,           // bad magic, unknown version, malformed headers or text
  Length,           // truncated payload
  UnsupportedDtype, // dtype code other than f32le
  Validation,       // NaN/Inf/negative values, broken invariants
  Parameter,        // out-of-range arguments (N == 0, bad position, ...)
  Dimension,        // K / V mismatches between artifacts
  Consistency,      // ids that do not line up between artifacts
  Training,         // codebook training cannot proceed
  Degenerate,       // zero-norm or empty inputs where a direction is needed
  Config,           // config file / override problems
};

std::string_view to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

} // namespace attnvlad

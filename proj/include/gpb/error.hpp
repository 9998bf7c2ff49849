#pragma once

#include <stdexcept>
#include <string>

namespace gpb {

// Every failure the library raises carries one of these categories so the CLI
// can map it to a stable exit code and a single-line machine-readable message.
enum class ErrorCategory {
  config,       // bad or inconsistent configuration values
  ingestion,    // missing files, row-count mismatches
  format,       // malformed file content (reported with line numbers)
  dimension,    // shape mismatches
  numeric,      // NaN/Inf, division by zero, degenerate inputs
  unsupported,  // valid request the engine deliberately does not serve
  io,           // filesystem write failures
  internal,     // bugs: broken invariants inside the engine
};

inline const char* to_string(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::config: return "config";
    case ErrorCategory::ingestion: return "ingestion";
    case ErrorCategory::format: return "format";
    case ErrorCategory::dimension: return "dimension";
    case ErrorCategory::numeric: return "numeric";
    case ErrorCategory::unsupported: return "unsupported";
    case ErrorCategory::io: return "io";
    case ErrorCategory::internal: return "internal";
  }
  return "internal";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory cat, const std::string& msg)
      : std::runtime_error(msg), cat_(cat) {}
  ErrorCategory category() const { return cat_; }

 private:
  ErrorCategory cat_;
};

[[noreturn]] inline void fail(ErrorCategory cat, const std::string& msg) {
  throw Error(cat, msg);
}

}  // namespace gpb

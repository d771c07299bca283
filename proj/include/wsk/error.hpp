#pragma once

#include <stdexcept>
#include <string>

namespace wsk {

enum class ErrorCode {
  shape_mismatch,      // tensor axes disagree with an operation's contract
  precondition,        // caller violated a documented precondition
  contract_violation,  // input fails a value-level contract (e.g. probs not normalized)
  capacity,            // generator cannot produce the requested count
  training_diverged,   // loss became non-finite
  bad_magic,           // file does not start with the container magic
  bad_version,         // container version unsupported
  truncated,           // file ends before the payload it promises
  format,              // structurally valid file with inconsistent contents
  split_error,         // modelset too small for the requested split
  consistency,         // recorded routing disagrees with a recompute
  unsupported_arch,    // operation requires a plain conv chain
  build_error,         // modelset construction failed
  config,              // invalid run configuration
  io,                  // filesystem failure
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message, long detail = -1)
      : std::runtime_error(std::move(message)), code_(code), detail_(detail) {}

  ErrorCode code() const noexcept { return code_; }
  // Context value, meaning depends on the code (e.g. epoch index for
  // training_diverged). -1 when unset.
  long detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  long detail_;
};

inline void require(bool cond, ErrorCode code, const std::string& message) {
  if (!cond) throw Error(code, message);
}

}  // namespace wsk

#pragma once

#include <stdexcept>
#include <string>

namespace fpnr {

inline constexpr const char* kVersion = "0.1.0";

enum class ErrorKind {
  config,                // inconsistent shapes, sizes or parameters
  validation,            // a request that contradicts the method's contract
  io,                    // file system and format failures
  checkpoint_magic,      // file does not start with the checkpoint magic
  checkpoint_version,    // unsupported checkpoint format version
  checkpoint_shape,      // stored tensor disagrees with the declared architecture
  checkpoint_truncated,  // payload ends before the header says it should
  stale_tape,            // backward called twice on one recorded forward pass
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace fpnr

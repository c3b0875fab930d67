#pragma once

#include <stdexcept>
#include <string>

namespace pl {

enum class ErrorCode {
  kInvalidArgument = 1,
  kIo,
  kParse,
  kConfig,
  kNetwork,
  kProtocol,
  kLeakage,
  kInternal,
};

// Single exception type for the core library; the code survives the trip
// through the C API as a status value.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace pl

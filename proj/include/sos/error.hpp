#pragma once

#include <stdexcept>
#include <string>

namespace sos {

// Error taxonomy shared by the library and the CLI exit-code mapping:
// everything except kIo maps to exit code 1, kIo maps to exit code 2.
enum class ErrorKind {
  kParse,            // malformed JSON
  kSchema,           // well-formed JSON with the wrong shape
  kValidation,       // right shape, contents violate an invariant
  kInvalidArgument,  // bad in-process argument
  kIo,               // filesystem failure
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace sos

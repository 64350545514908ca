#ifndef DEATHCAST_ERROR_HPP_
#define DEATHCAST_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace deathcast {

enum class ErrorCode {
  kMalformedRecord,
  kSchemaViolation,
  kEmptyMatch,
  kSchemaMismatch,
  kInvalidFrame,
  kEmptyStream,
  kNonPositiveWindow,
  kChecksumMismatch,
  kInsufficientPositives,
  kInvalidArchitecture,
  kShapeMismatch,
  kNonFiniteGradient,
  kVersionMismatch,
  kNoPositives,
  kLengthMismatch,
  kConstantInput,
  kInvalidConfig,
  kForeignMatch,
  kSplitLeak,
  kIo,
};

std::string_view ErrorCodeName(ErrorCode code);

// Every failure raised by the library carries one of the codes above so the
// command line front end can map it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace deathcast

#endif  // DEATHCAST_ERROR_HPP_

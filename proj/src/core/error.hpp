#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace firemed {

// Numeric values are part of the C ABI (see include/firemed/firemed.h).
enum class ErrorCode : int {
  Config = 1,
  Input = 2,
  State = 3,
  Parse = 4,
  Numerics = 5,
  Backend = 6,
  Unavailable = 7,
  ReplayMismatch = 8,
  Replay = 9,
  Io = 10,
  RejectedTask = 11,
  NoFireToTarget = 12,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

#define FIREMED_DEFINE_ERROR(Name, Code)                                     \
  class Name : public Error {                                                \
   public:                                                                   \
    explicit Name(const std::string& what) : Error(ErrorCode::Code, what) {} \
  };

FIREMED_DEFINE_ERROR(ConfigError, Config)
FIREMED_DEFINE_ERROR(InputError, Input)
FIREMED_DEFINE_ERROR(StateError, State)
FIREMED_DEFINE_ERROR(ParseError, Parse)
FIREMED_DEFINE_ERROR(NumericsError, Numerics)
FIREMED_DEFINE_ERROR(UnavailableError, Unavailable)
FIREMED_DEFINE_ERROR(ReplayError, Replay)
FIREMED_DEFINE_ERROR(IoError, Io)
FIREMED_DEFINE_ERROR(RejectedTask, RejectedTask)
FIREMED_DEFINE_ERROR(NoFireToTarget, NoFireToTarget)

#undef FIREMED_DEFINE_ERROR

class BackendError : public Error {
 public:
  BackendError(int status, const std::string& what)
      : Error(ErrorCode::Backend, what), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

class ReplayMismatch : public Error {
 public:
  ReplayMismatch(std::int64_t episode, std::int64_t step, const std::string& what)
      : Error(ErrorCode::ReplayMismatch, what), episode_(episode), step_(step) {}
  std::int64_t episode() const noexcept { return episode_; }
  std::int64_t step() const noexcept { return step_; }

 private:
  std::int64_t episode_;
  std::int64_t step_;
};

}  // namespace firemed

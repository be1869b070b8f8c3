#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace swipeauth {

enum class ErrorKind {
  InvalidMetadata,
  MalformedSequence,
  SequenceTooShort,
  NumericFailure,
  Configuration,
  Enrollment,
  Protocol,
  Convergence,
  Io,
  Schema,
  NoValidUsers,
  Split,
  OpenSetViolation,
  Generation,
  Contract,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidMetadata: return "invalid-metadata";
    case ErrorKind::MalformedSequence: return "malformed-sequence";
    case ErrorKind::SequenceTooShort: return "sequence-too-short";
    case ErrorKind::NumericFailure: return "numeric-failure";
    case ErrorKind::Configuration: return "configuration";
    case ErrorKind::Enrollment: return "enrollment";
    case ErrorKind::Protocol: return "protocol";
    case ErrorKind::Convergence: return "convergence";
    case ErrorKind::Io: return "io";
    case ErrorKind::Schema: return "schema";
    case ErrorKind::NoValidUsers: return "no-valid-users";
    case ErrorKind::Split: return "split";
    case ErrorKind::OpenSetViolation: return "open-set-violation";
    case ErrorKind::Generation: return "generation";
    case ErrorKind::Contract: return "contract";
  }
  return "unknown";
}

/// Single exception type for the library; `kind()` distinguishes the failure class.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace swipeauth

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace labelforge {

enum class ErrorCode {
  kInvalidArgument,
  kTaskConstruction,
  kSamePrompt,
  kPoolTooSmall,
  kBannedAnnotator,
  kConsentMissing,
  kUnknownAnnotator,
  kLeaseAlreadyOpen,
  kPoolExhausted,
  kUnknownBatch,
  kLeaseExpired,
  kIncompleteChoices,
  kInvalidChoice,
  kAlreadySubmitted,
  kNoLabels,
  kCorruptLog,
  kLogUnwritable,
  kConfigInvalid,
  kIo,
  kUnauthorized,
};

// Stable machine-readable name, also used as the "error" field of HTTP
// error bodies.
std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// CorruptLog carries the sequence number of the first event that could not
// be read or replayed.
class CorruptLogError : public Error {
 public:
  CorruptLogError(std::uint64_t first_bad_seq, const std::string& message)
      : Error(ErrorCode::kCorruptLog, message), first_bad_seq_(first_bad_seq) {}

  std::uint64_t first_bad_seq() const noexcept { return first_bad_seq_; }

 private:
  std::uint64_t first_bad_seq_;
};

}  // namespace labelforge

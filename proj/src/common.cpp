#include "labelforge/common.hpp"

#include "labelforge/error.hpp"

namespace labelforge {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kTaskConstruction: return "task_construction";
    case ErrorCode::kSamePrompt: return "same_prompt";
    case ErrorCode::kPoolTooSmall: return "pool_too_small";
    case ErrorCode::kBannedAnnotator: return "banned";
    case ErrorCode::kConsentMissing: return "consent_missing";
    case ErrorCode::kUnknownAnnotator: return "unknown_annotator";
    case ErrorCode::kLeaseAlreadyOpen: return "lease_already_open";
    case ErrorCode::kPoolExhausted: return "pool_exhausted";
    case ErrorCode::kUnknownBatch: return "unknown_batch";
    case ErrorCode::kLeaseExpired: return "lease_expired";
    case ErrorCode::kIncompleteChoices: return "incomplete_choices";
    case ErrorCode::kInvalidChoice: return "invalid_choice";
    case ErrorCode::kAlreadySubmitted: return "already_submitted";
    case ErrorCode::kNoLabels: return "no_labels";
    case ErrorCode::kCorruptLog: return "corrupt_log";
    case ErrorCode::kLogUnwritable: return "log_unwritable";
    case ErrorCode::kConfigInvalid: return "config_invalid";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kUnauthorized: return "unauthorized";
  }
  return "unknown";
}

std::optional<Side> parse_side(std::string_view text) {
  if (text == "A" || text == "a") return Side::A;
  if (text == "B" || text == "b") return Side::B;
  return std::nullopt;
}

void to_json(nlohmann::json& j, Side s) { j = std::string(side_name(s)); }

void from_json(const nlohmann::json& j, Side& s) {
  auto parsed = j.is_string() ? parse_side(j.get<std::string>()) : std::nullopt;
  if (!parsed) {
    throw Error(ErrorCode::kInvalidChoice, "invalid side: " + j.dump());
  }
  s = *parsed;
}

}  // namespace labelforge

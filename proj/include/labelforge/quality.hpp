#pragma once

// Gold-question bookkeeping and the trust schedule built on it: how many
// gold items an annotator gets per batch, when they are banned, and what a
// batch pays.

#include <cstdint>
#include <optional>
#include <set>
#include <vector>
#include <string>
#include <string_view>

#include "labelforge/common.hpp"

namespace labelforge {

// Everything stored about an annotator. No device, name, or contact data.
struct AnnotatorRecord {
  AnnotatorId annotator_id;
  std::uint64_t gold_correct = 0;
  std::uint64_t gold_answered = 0;
  bool banned = false;
  bool consented = false;
  std::int64_t reward_balance = 0;
  std::set<DataPointId> labeled_ids;
  Timestamp created_at{};

  bool operator==(const AnnotatorRecord&) const = default;
};

struct TrustPolicy {
  std::uint32_t batch_size = 5;
  std::uint32_t screening_gold = 5;
  std::uint32_t min_gold_for_tiering = 5;
  double ban_threshold = 0.6;
  double high_trust_threshold = 0.8;
  std::uint32_t gold_quota_high = 1;
  std::uint32_t gold_quota_mid = 2;
  std::int64_t reward_base_per_label = 10;

  // Throws kConfigInvalid.
  void validate() const;

  bool operator==(const TrustPolicy&) const = default;
};

// Missing keys keep their defaults; the result is validated.
TrustPolicy trust_policy_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrustPolicy& policy);

// Gold accuracy; nullopt when no gold item has been answered.
std::optional<double> accuracy(const AnnotatorRecord& rec);

std::uint32_t gold_quota(const AnnotatorRecord& rec, const TrustPolicy& policy);

bool should_ban(const AnnotatorRecord& rec, const TrustPolicy& policy);

AnnotatorRecord apply_gold_results(const AnnotatorRecord& rec,
                                   const std::vector<bool>& results,
                                   const TrustPolicy& policy);

// floor(base * labels * accuracy), computed exactly on the integer counts.
std::int64_t batch_reward(const AnnotatorRecord& rec_after,
                          std::uint32_t labels_in_batch,
                          const TrustPolicy& policy);

// Coarse client-facing view of accuracy: "unrated", "medium" or "high".
std::string_view accuracy_band(const AnnotatorRecord& rec,
                               const TrustPolicy& policy);

void to_json(nlohmann::json& j, const AnnotatorRecord& rec);
void from_json(const nlohmann::json& j, AnnotatorRecord& rec);

}  // namespace labelforge

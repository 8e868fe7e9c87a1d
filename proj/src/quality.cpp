#include "labelforge/quality.hpp"

#include <algorithm>

#include "labelforge/error.hpp"

namespace labelforge {

void TrustPolicy::validate() const {
  auto fail = [](const std::string& what) {
    throw Error(ErrorCode::kConfigInvalid, "trust_policy: " + what);
  };
  if (batch_size == 0) fail("batch_size must be positive");
  if (screening_gold == 0 || screening_gold > batch_size) {
    fail("screening_gold must be in [1, batch_size]");
  }
  if (min_gold_for_tiering == 0) fail("min_gold_for_tiering must be positive");
  if (!(ban_threshold > 0.0 && ban_threshold < high_trust_threshold &&
        high_trust_threshold <= 1.0)) {
    fail("need 0 < ban_threshold < high_trust_threshold <= 1");
  }
  if (!(gold_quota_high <= gold_quota_mid && gold_quota_mid <= batch_size)) {
    fail("need gold_quota_high <= gold_quota_mid <= batch_size");
  }
  if (reward_base_per_label < 0) fail("reward_base_per_label is negative");
}

TrustPolicy trust_policy_from_json(const nlohmann::json& j) {
  TrustPolicy p;
  if (!j.is_null() && !j.is_object()) {
    throw Error(ErrorCode::kConfigInvalid, "trust_policy must be an object");
  }
  try {
    if (j.is_object()) {
      p.batch_size = j.value("batch_size", p.batch_size);
      p.screening_gold = j.value("screening_gold", p.screening_gold);
      p.min_gold_for_tiering =
          j.value("min_gold_for_tiering", p.min_gold_for_tiering);
      p.ban_threshold = j.value("ban_threshold", p.ban_threshold);
      p.high_trust_threshold =
          j.value("high_trust_threshold", p.high_trust_threshold);
      p.gold_quota_high = j.value("gold_quota_high", p.gold_quota_high);
      p.gold_quota_mid = j.value("gold_quota_mid", p.gold_quota_mid);
      p.reward_base_per_label =
          j.value("reward_base_per_label", p.reward_base_per_label);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfigInvalid,
                std::string("trust_policy: ") + e.what());
  }
  p.validate();
  return p;
}

nlohmann::json to_json(const TrustPolicy& p) {
  return {{"batch_size", p.batch_size},
          {"screening_gold", p.screening_gold},
          {"min_gold_for_tiering", p.min_gold_for_tiering},
          {"ban_threshold", p.ban_threshold},
          {"high_trust_threshold", p.high_trust_threshold},
          {"gold_quota_high", p.gold_quota_high},
          {"gold_quota_mid", p.gold_quota_mid},
          {"reward_base_per_label", p.reward_base_per_label}};
}

std::optional<double> accuracy(const AnnotatorRecord& rec) {
  if (rec.gold_answered == 0) return std::nullopt;
  return static_cast<double>(rec.gold_correct) /
         static_cast<double>(rec.gold_answered);
}

std::uint32_t gold_quota(const AnnotatorRecord& rec, const TrustPolicy& policy) {
  if (rec.banned || should_ban(rec, policy)) {
    throw Error(ErrorCode::kBannedAnnotator,
                "annotator " + rec.annotator_id + " is banned");
  }
  auto acc = accuracy(rec);
  // Screening tier; screening_gold defaults to batch_size (all gold).
  if (rec.gold_answered < policy.min_gold_for_tiering || !acc) {
    return policy.screening_gold;
  }
  if (*acc >= policy.high_trust_threshold) return policy.gold_quota_high;
  return policy.gold_quota_mid;
}

bool should_ban(const AnnotatorRecord& rec, const TrustPolicy& policy) {
  if (rec.gold_answered < policy.min_gold_for_tiering) return false;
  // correct/answered < threshold, without floating-point rounding at the
  // boundary (3/5 against 0.6 must survive).
  return static_cast<long double>(rec.gold_correct) <
         static_cast<long double>(policy.ban_threshold) *
                 static_cast<long double>(rec.gold_answered) -
             1e-12L;
}

AnnotatorRecord apply_gold_results(const AnnotatorRecord& rec,
                                   const std::vector<bool>& results,
                                   const TrustPolicy& policy) {
  if (rec.banned) {
    throw Error(ErrorCode::kBannedAnnotator,
                "annotator " + rec.annotator_id + " is banned");
  }
  AnnotatorRecord out = rec;
  out.gold_answered += results.size();
  out.gold_correct += static_cast<std::uint64_t>(
      std::count(results.begin(), results.end(), true));
  out.banned = should_ban(out, policy);
  return out;
}

std::int64_t batch_reward(const AnnotatorRecord& rec_after,
                          std::uint32_t labels_in_batch,
                          const TrustPolicy& policy) {
  if (rec_after.banned) return 0;
  std::int64_t gross = policy.reward_base_per_label *
                       static_cast<std::int64_t>(labels_in_batch);
  if (rec_after.gold_answered == 0) return gross;
  return gross * static_cast<std::int64_t>(rec_after.gold_correct) /
         static_cast<std::int64_t>(rec_after.gold_answered);
}

std::string_view accuracy_band(const AnnotatorRecord& rec,
                               const TrustPolicy& policy) {
  auto acc = accuracy(rec);
  if (!acc) return "unrated";
  return *acc >= policy.high_trust_threshold ? "high" : "medium";
}

void to_json(nlohmann::json& j, const AnnotatorRecord& rec) {
  j = nlohmann::json{{"annotator_id", rec.annotator_id},
                     {"gold_correct", rec.gold_correct},
                     {"gold_answered", rec.gold_answered},
                     {"banned", rec.banned},
                     {"consented", rec.consented},
                     {"reward_balance", rec.reward_balance},
                     {"labeled_ids", rec.labeled_ids},
                     {"created_at", to_unix_ms(rec.created_at)}};
}

void from_json(const nlohmann::json& j, AnnotatorRecord& rec) {
  j.at("annotator_id").get_to(rec.annotator_id);
  j.at("gold_correct").get_to(rec.gold_correct);
  j.at("gold_answered").get_to(rec.gold_answered);
  j.at("banned").get_to(rec.banned);
  j.at("consented").get_to(rec.consented);
  j.at("reward_balance").get_to(rec.reward_balance);
  j.at("labeled_ids").get_to(rec.labeled_ids);
  rec.created_at = from_unix_ms(j.at("created_at").get<std::int64_t>());
}

}  // namespace labelforge

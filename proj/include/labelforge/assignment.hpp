#pragma once

// Batch leasing. The engine owns the pool, annotator records and leases.
// Every mutating operation is split into a const plan step, which validates
// and computes the full effect, and a commit step that applies it and
// cannot fail. Callers that need write-ahead logging append between the two.
//
// The engine is not thread-safe; the service serializes access.

#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "labelforge/common.hpp"
#include "labelforge/corpus.hpp"
#include "labelforge/quality.hpp"

namespace labelforge {

struct AssignmentConfig {
  std::uint32_t max_labels_per_point = 3;
  std::chrono::milliseconds lease_ttl{std::chrono::minutes(30)};
};

// One slot of a lease. Image order is as presented to the client; `flipped`
// records whether that is the reverse of the pool's canonical order.
// is_gold, correct_side and flipped never leave the server.
struct TaskItem {
  std::string task_id;
  DataPointId data_point_id;
  std::string prompt_text;
  ImageRef image_a;
  ImageRef image_b;
  bool is_gold = false;
  std::optional<Side> correct_side;  // canonical orientation
  bool flipped = false;

  Side to_canonical(Side presented) const {
    return flipped ? other(presented) : presented;
  }
  Side to_presented(Side canonical) const {
    return flipped ? other(canonical) : canonical;
  }

  bool operator==(const TaskItem&) const = default;
};

enum class LeaseState { kOpen, kSubmitted, kExpired };

std::string_view lease_state_name(LeaseState s);

struct BatchLease {
  BatchId batch_id;
  AnnotatorId annotator_id;
  std::vector<TaskItem> items;
  Timestamp issued_at{};
  Timestamp expires_at{};
  LeaseState state = LeaseState::kOpen;
  std::uint64_t seed = 0;

  std::size_t gold_count() const;
  bool operator==(const BatchLease&) const = default;
};

// A real-item label, in canonical orientation.
struct Label {
  DataPointId data_point_id;
  AnnotatorId annotator_id;
  Side choice = Side::A;
  Timestamp submitted_at{};

  bool operator==(const Label&) const = default;
};

// An answer to a gold item. Kept apart from labels: it never reaches the
// exported dataset.
struct GoldAnswer {
  DataPointId data_point_id;
  AnnotatorId annotator_id;
  Side choice = Side::A;
  bool correct = false;
  Timestamp submitted_at{};

  bool operator==(const GoldAnswer&) const = default;
};

struct RealPointState {
  DataPoint point;
  std::uint32_t label_count = 0;
  std::uint32_t reserved = 0;
  std::set<AnnotatorId> labelers;

  bool operator==(const RealPointState&) const = default;
};

class PoolState {
 public:
  PoolState() = default;
  PoolState(TaskPool pool, std::uint32_t max_labels_per_point);

  const std::vector<RealPointState>& real() const { return real_; }
  const std::vector<GoldDataPoint>& gold() const { return gold_; }
  const std::vector<Label>& labels() const { return labels_; }
  const std::vector<GoldAnswer>& gold_answers() const { return gold_answers_; }
  std::uint32_t max_labels_per_point() const { return max_labels_; }

  const RealPointState* find_real(const DataPointId& id) const;
  const GoldDataPoint* find_gold(const DataPointId& id) const;

  bool operator==(const PoolState& o) const {
    return real_ == o.real_ && gold_ == o.gold_ && labels_ == o.labels_ &&
           gold_answers_ == o.gold_answers_ && max_labels_ == o.max_labels_;
  }

 private:
  friend class LabelingEngine;
  friend nlohmann::json to_json(const PoolState&);
  friend PoolState pool_state_from_json(const nlohmann::json&);

  void reindex();
  RealPointState& real_at(const DataPointId& id);

  std::vector<RealPointState> real_;
  std::vector<GoldDataPoint> gold_;
  std::unordered_map<DataPointId, std::size_t> real_index_;
  std::unordered_map<DataPointId, std::size_t> gold_index_;
  std::vector<Label> labels_;
  std::vector<GoldAnswer> gold_answers_;
  std::uint32_t max_labels_ = 3;
};

struct LeasePlan {
  BatchLease lease;
};

struct BatchOutcome {
  std::vector<Label> labels;
  std::vector<bool> gold_results;
  std::int64_t reward = 0;
  bool banned_after = false;
};

struct SubmitPlan {
  BatchId batch_id;
  AnnotatorRecord updated;
  std::vector<GoldAnswer> gold_answers;
  BatchOutcome outcome;
};

// Presented-side choices keyed by task_id.
using Choices = std::map<std::string, Side>;

class LabelingEngine {
 public:
  LabelingEngine() = default;
  LabelingEngine(TaskPool pool, TrustPolicy policy, AssignmentConfig config);

  const TrustPolicy& policy() const { return policy_; }
  const AssignmentConfig& config() const { return config_; }
  const PoolState& pool() const { return pool_; }
  const std::map<AnnotatorId, AnnotatorRecord>& annotators() const {
    return annotators_;
  }
  const std::map<BatchId, BatchLease>& leases() const { return leases_; }
  // Every data point ever placed in a lease for this annotator.
  const std::unordered_set<DataPointId>* issued_to(const AnnotatorId& id) const;

  const AnnotatorRecord* find_annotator(const AnnotatorId& id) const;
  const BatchLease* find_lease(const BatchId& id) const;
  const BatchLease* open_lease_of(const AnnotatorId& id) const;

  // Throws kInvalidArgument if the id is taken.
  const AnnotatorRecord& register_annotator(const AnnotatorId& id,
                                            Timestamp now);
  // Throws kUnknownAnnotator.
  void record_consent(const AnnotatorId& id);

  LeasePlan plan_next_batch(const AnnotatorId& id, Timestamp now,
                            std::uint64_t seed) const;
  const BatchLease& commit(LeasePlan plan);
  const BatchLease& next_batch(const AnnotatorId& id, Timestamp now,
                               std::uint64_t seed) {
    return commit(plan_next_batch(id, now, seed));
  }

  SubmitPlan plan_submit(const BatchId& batch_id, const AnnotatorId& id,
                         const Choices& choices, Timestamp now) const;
  BatchOutcome commit(SubmitPlan plan);
  BatchOutcome submit_batch(const BatchId& batch_id, const AnnotatorId& id,
                            const Choices& choices, Timestamp now) {
    return commit(plan_submit(batch_id, id, choices, now));
  }

  // Open leases with expires_at <= now, in batch-id order.
  std::vector<BatchId> stale_leases(Timestamp now) const;
  // Moves an open lease to Expired and releases its reservations. Returns
  // false if the lease is unknown or not open.
  bool expire_lease(const BatchId& batch_id);
  std::size_t expire_leases(Timestamp now);

  std::uint64_t leases_issued() const { return lease_counter_; }

 private:
  friend nlohmann::json to_json(const LabelingEngine&);
  friend LabelingEngine engine_from_json(const nlohmann::json&);

  AnnotatorRecord& annotator_at(const AnnotatorId& id);

  TrustPolicy policy_;
  AssignmentConfig config_;
  PoolState pool_;
  std::map<AnnotatorId, AnnotatorRecord> annotators_;
  std::map<BatchId, BatchLease> leases_;
  std::unordered_map<AnnotatorId, BatchId> open_by_annotator_;
  std::unordered_map<AnnotatorId, std::unordered_set<DataPointId>> issued_;
  std::uint64_t lease_counter_ = 0;
};

// Full engine state, canonical (sorted keys, sorted sets) so that dumps of
// equal states are byte-identical.
nlohmann::json to_json(const PoolState& pool);
PoolState pool_state_from_json(const nlohmann::json& j);
nlohmann::json to_json(const LabelingEngine& engine);
LabelingEngine engine_from_json(const nlohmann::json& j);

void to_json(nlohmann::json& j, const TaskItem& item);
void from_json(const nlohmann::json& j, TaskItem& item);
void to_json(nlohmann::json& j, const BatchLease& lease);
void from_json(const nlohmann::json& j, BatchLease& lease);
void to_json(nlohmann::json& j, const Label& label);
void from_json(const nlohmann::json& j, Label& label);

// Tie-break key among real points with equal label counts.
std::uint64_t assignment_tie_break(const DataPointId& data_point_id,
                                   const BatchId& batch_id);

// The only view of a task a client ever receives.
nlohmann::json client_view(const TaskItem& item, std::string_view image_prefix);

}  // namespace labelforge

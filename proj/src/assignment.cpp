#include "labelforge/assignment.hpp"

#include <algorithm>
#include <random>

#include "labelforge/error.hpp"
#include "labelforge/hash.hpp"

namespace labelforge {

std::string_view lease_state_name(LeaseState s) {
  switch (s) {
    case LeaseState::kOpen: return "open";
    case LeaseState::kSubmitted: return "submitted";
    case LeaseState::kExpired: return "expired";
  }
  return "open";
}

namespace {

LeaseState parse_lease_state(const std::string& s) {
  if (s == "open") return LeaseState::kOpen;
  if (s == "submitted") return LeaseState::kSubmitted;
  if (s == "expired") return LeaseState::kExpired;
  throw Error(ErrorCode::kInvalidArgument, "unknown lease state " + s);
}

}  // namespace

std::size_t BatchLease::gold_count() const {
  return static_cast<std::size_t>(std::count_if(
      items.begin(), items.end(), [](const TaskItem& t) { return t.is_gold; }));
}

std::uint64_t assignment_tie_break(const DataPointId& data_point_id,
                                   const BatchId& batch_id) {
  return seeded_hash(data_point_id, fnv1a64(batch_id));
}

PoolState::PoolState(TaskPool pool, std::uint32_t max_labels_per_point)
    : gold_(std::move(pool.gold)), max_labels_(max_labels_per_point) {
  if (max_labels_ == 0) {
    throw Error(ErrorCode::kConfigInvalid,
                "max_labels_per_point must be positive");
  }
  real_.reserve(pool.real.size());
  for (auto& dp : pool.real) real_.push_back({std::move(dp), 0, 0, {}});
  reindex();
}

void PoolState::reindex() {
  real_index_.clear();
  gold_index_.clear();
  for (std::size_t i = 0; i < real_.size(); ++i) {
    if (!real_index_.emplace(real_[i].point.id, i).second) {
      throw Error(ErrorCode::kInvalidArgument,
                  "duplicate data point id " + real_[i].point.id);
    }
  }
  for (std::size_t i = 0; i < gold_.size(); ++i) {
    if (real_index_.count(gold_[i].id) ||
        !gold_index_.emplace(gold_[i].id, i).second) {
      throw Error(ErrorCode::kInvalidArgument,
                  "duplicate data point id " + gold_[i].id);
    }
  }
}

const RealPointState* PoolState::find_real(const DataPointId& id) const {
  auto it = real_index_.find(id);
  return it == real_index_.end() ? nullptr : &real_[it->second];
}

const GoldDataPoint* PoolState::find_gold(const DataPointId& id) const {
  auto it = gold_index_.find(id);
  return it == gold_index_.end() ? nullptr : &gold_[it->second];
}

RealPointState& PoolState::real_at(const DataPointId& id) {
  return real_[real_index_.at(id)];
}

LabelingEngine::LabelingEngine(TaskPool pool, TrustPolicy policy,
                               AssignmentConfig config)
    : policy_(policy),
      config_(config),
      pool_(std::move(pool), config.max_labels_per_point) {
  policy_.validate();
  if (config_.lease_ttl.count() <= 0) {
    throw Error(ErrorCode::kConfigInvalid, "lease_ttl must be positive");
  }
}

const std::unordered_set<DataPointId>* LabelingEngine::issued_to(
    const AnnotatorId& id) const {
  auto it = issued_.find(id);
  return it == issued_.end() ? nullptr : &it->second;
}

const AnnotatorRecord* LabelingEngine::find_annotator(
    const AnnotatorId& id) const {
  auto it = annotators_.find(id);
  return it == annotators_.end() ? nullptr : &it->second;
}

const BatchLease* LabelingEngine::find_lease(const BatchId& id) const {
  auto it = leases_.find(id);
  return it == leases_.end() ? nullptr : &it->second;
}

const BatchLease* LabelingEngine::open_lease_of(const AnnotatorId& id) const {
  auto it = open_by_annotator_.find(id);
  return it == open_by_annotator_.end() ? nullptr : find_lease(it->second);
}

AnnotatorRecord& LabelingEngine::annotator_at(const AnnotatorId& id) {
  auto it = annotators_.find(id);
  if (it == annotators_.end()) {
    throw Error(ErrorCode::kUnknownAnnotator, "unknown annotator " + id);
  }
  return it->second;
}

const AnnotatorRecord& LabelingEngine::register_annotator(
    const AnnotatorId& id, Timestamp now) {
  if (id.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "empty annotator id");
  }
  AnnotatorRecord rec;
  rec.annotator_id = id;
  rec.created_at = now;
  auto [it, inserted] = annotators_.emplace(id, std::move(rec));
  if (!inserted) {
    throw Error(ErrorCode::kInvalidArgument, "annotator exists: " + id);
  }
  return it->second;
}

void LabelingEngine::record_consent(const AnnotatorId& id) {
  annotator_at(id).consented = true;
}

LeasePlan LabelingEngine::plan_next_batch(const AnnotatorId& id, Timestamp now,
                                          std::uint64_t seed) const {
  const AnnotatorRecord* rec = find_annotator(id);
  if (!rec) throw Error(ErrorCode::kUnknownAnnotator, "unknown annotator " + id);
  if (rec->banned) {
    throw Error(ErrorCode::kBannedAnnotator, "annotator " + id + " is banned");
  }
  if (!rec->consented) {
    throw Error(ErrorCode::kConsentMissing,
                "annotator " + id + " has not consented");
  }
  if (open_by_annotator_.count(id)) {
    throw Error(ErrorCode::kLeaseAlreadyOpen,
                "annotator " + id + " already holds an open lease");
  }

  const std::uint32_t gold_needed = gold_quota(*rec, policy_);
  const std::uint32_t real_needed = policy_.batch_size - gold_needed;

  BatchLease lease;
  lease.batch_id =
      "b" + std::to_string(lease_counter_ + 1) + "-" +
      hex64(seeded_hash(id + '#' + std::to_string(lease_counter_), seed))
          .substr(0, 8);
  lease.annotator_id = id;
  lease.issued_at = now;
  lease.expires_at = now + config_.lease_ttl;
  lease.seed = seed;

  static const std::unordered_set<DataPointId> kNone;
  const auto* seen_ptr = issued_to(id);
  const auto& seen = seen_ptr ? *seen_ptr : kNone;

  std::mt19937_64 rng(derive_seed(seed, lease_counter_));

  std::vector<std::size_t> gold_candidates;
  gold_candidates.reserve(pool_.gold_.size());
  for (std::size_t i = 0; i < pool_.gold_.size(); ++i) {
    if (!seen.count(pool_.gold_[i].id)) gold_candidates.push_back(i);
  }
  if (gold_candidates.size() < gold_needed) {
    throw Error(ErrorCode::kPoolExhausted,
                "not enough unseen gold points for " + id);
  }

  struct Candidate {
    std::uint32_t label_count;
    std::uint64_t tie;
    std::size_t index;
    bool operator<(const Candidate& o) const {
      if (label_count != o.label_count) return label_count < o.label_count;
      if (tie != o.tie) return tie < o.tie;
      return index < o.index;
    }
  };
  std::vector<Candidate> real_candidates;
  if (real_needed > 0) {
    for (std::size_t i = 0; i < pool_.real_.size(); ++i) {
      const auto& rp = pool_.real_[i];
      if (rp.label_count + rp.reserved >= pool_.max_labels_) continue;
      if (seen.count(rp.point.id)) continue;
      real_candidates.push_back(
          {rp.label_count, assignment_tie_break(rp.point.id, lease.batch_id),
           i});
    }
  }
  if (real_candidates.size() < real_needed) {
    throw Error(ErrorCode::kPoolExhausted,
                "not enough eligible real points for " + id);
  }

  // Partial Fisher-Yates for a uniform gold sample without replacement.
  for (std::uint32_t k = 0; k < gold_needed; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k,
                                                    gold_candidates.size() - 1);
    std::swap(gold_candidates[k], gold_candidates[pick(rng)]);
    const auto& gp = pool_.gold_[gold_candidates[k]];
    TaskItem item;
    item.data_point_id = gp.id;
    item.prompt_text = gp.prompt.text;
    item.image_a = gp.image_a;
    item.image_b = gp.image_b;
    item.is_gold = true;
    item.correct_side = gp.correct_side;
    lease.items.push_back(std::move(item));
  }

  std::partial_sort(real_candidates.begin(),
                    real_candidates.begin() + real_needed,
                    real_candidates.end());
  for (std::uint32_t k = 0; k < real_needed; ++k) {
    const auto& dp = pool_.real_[real_candidates[k].index].point;
    TaskItem item;
    item.data_point_id = dp.id;
    item.prompt_text = dp.prompt.text;
    item.image_a = dp.image_a;
    item.image_b = dp.image_b;
    lease.items.push_back(std::move(item));
  }

  std::shuffle(lease.items.begin(), lease.items.end(), rng);
  for (std::size_t k = 0; k < lease.items.size(); ++k) {
    auto& item = lease.items[k];
    item.task_id = lease.batch_id + "-" + std::to_string(k);
    item.flipped = (rng() & 1) != 0;
    if (item.flipped) std::swap(item.image_a, item.image_b);
  }
  return LeasePlan{std::move(lease)};
}

const BatchLease& LabelingEngine::commit(LeasePlan plan) {
  auto& seen = issued_[plan.lease.annotator_id];
  for (const auto& item : plan.lease.items) {
    seen.insert(item.data_point_id);
    if (!item.is_gold) ++pool_.real_at(item.data_point_id).reserved;
  }
  ++lease_counter_;
  open_by_annotator_[plan.lease.annotator_id] = plan.lease.batch_id;
  auto id = plan.lease.batch_id;
  auto [it, _] = leases_.insert_or_assign(id, std::move(plan.lease));
  return it->second;
}

SubmitPlan LabelingEngine::plan_submit(const BatchId& batch_id,
                                       const AnnotatorId& id,
                                       const Choices& choices,
                                       Timestamp now) const {
  const BatchLease* lease = find_lease(batch_id);
  if (!lease || lease->annotator_id != id) {
    throw Error(ErrorCode::kUnknownBatch, "unknown batch " + batch_id);
  }
  switch (lease->state) {
    case LeaseState::kSubmitted:
      throw Error(ErrorCode::kAlreadySubmitted,
                  "batch " + batch_id + " was already submitted");
    case LeaseState::kExpired:
      throw Error(ErrorCode::kLeaseExpired, "batch " + batch_id + " expired");
    case LeaseState::kOpen:
      if (now >= lease->expires_at) {
        throw Error(ErrorCode::kLeaseExpired,
                    "batch " + batch_id + " expired");
      }
      break;
  }
  if (choices.size() != lease->items.size()) {
    throw Error(ErrorCode::kIncompleteChoices,
                "expected " + std::to_string(lease->items.size()) +
                    " choices, got " + std::to_string(choices.size()));
  }
  const AnnotatorRecord* rec = find_annotator(id);
  if (!rec) throw Error(ErrorCode::kUnknownAnnotator, "unknown annotator " + id);

  SubmitPlan plan;
  plan.batch_id = batch_id;
  for (const auto& item : lease->items) {
    auto it = choices.find(item.task_id);
    if (it == choices.end()) {
      throw Error(ErrorCode::kIncompleteChoices,
                  "missing choice for task " + item.task_id);
    }
    Side canonical = item.to_canonical(it->second);
    if (item.is_gold) {
      bool correct = canonical == *item.correct_side;
      plan.outcome.gold_results.push_back(correct);
      plan.gold_answers.push_back(
          {item.data_point_id, id, canonical, correct, now});
    } else {
      plan.outcome.labels.push_back({item.data_point_id, id, canonical, now});
    }
  }

  plan.updated = apply_gold_results(*rec, plan.outcome.gold_results, policy_);
  for (const auto& item : lease->items) {
    plan.updated.labeled_ids.insert(item.data_point_id);
  }
  plan.outcome.reward = batch_reward(
      plan.updated, static_cast<std::uint32_t>(lease->items.size()), policy_);
  plan.updated.reward_balance += plan.outcome.reward;
  plan.outcome.banned_after = plan.updated.banned;
  return plan;
}

BatchOutcome LabelingEngine::commit(SubmitPlan plan) {
  auto& lease = leases_.at(plan.batch_id);
  lease.state = LeaseState::kSubmitted;
  open_by_annotator_.erase(lease.annotator_id);
  for (const auto& label : plan.outcome.labels) {
    auto& rp = pool_.real_at(label.data_point_id);
    --rp.reserved;
    ++rp.label_count;
    rp.labelers.insert(label.annotator_id);
    pool_.labels_.push_back(label);
  }
  for (auto& answer : plan.gold_answers) {
    pool_.gold_answers_.push_back(std::move(answer));
  }
  annotators_[plan.updated.annotator_id] = std::move(plan.updated);
  return std::move(plan.outcome);
}

std::vector<BatchId> LabelingEngine::stale_leases(Timestamp now) const {
  std::vector<BatchId> stale;
  for (const auto& [annotator, batch_id] : open_by_annotator_) {
    if (leases_.at(batch_id).expires_at <= now) stale.push_back(batch_id);
  }
  std::sort(stale.begin(), stale.end());
  return stale;
}

bool LabelingEngine::expire_lease(const BatchId& batch_id) {
  auto it = leases_.find(batch_id);
  if (it == leases_.end() || it->second.state != LeaseState::kOpen) {
    return false;
  }
  auto& lease = it->second;
  lease.state = LeaseState::kExpired;
  open_by_annotator_.erase(lease.annotator_id);
  for (const auto& item : lease.items) {
    if (!item.is_gold) --pool_.real_at(item.data_point_id).reserved;
  }
  return true;
}

std::size_t LabelingEngine::expire_leases(Timestamp now) {
  std::size_t n = 0;
  for (const auto& id : stale_leases(now)) n += expire_lease(id) ? 1 : 0;
  return n;
}

// Serialization.

void to_json(nlohmann::json& j, const TaskItem& item) {
  j = nlohmann::json{{"task_id", item.task_id},
                     {"data_point_id", item.data_point_id},
                     {"prompt_text", item.prompt_text},
                     {"image_a", item.image_a.path},
                     {"image_b", item.image_b.path},
                     {"is_gold", item.is_gold},
                     {"flipped", item.flipped}};
  if (item.correct_side) j["correct_side"] = *item.correct_side;
}

void from_json(const nlohmann::json& j, TaskItem& item) {
  j.at("task_id").get_to(item.task_id);
  j.at("data_point_id").get_to(item.data_point_id);
  j.at("prompt_text").get_to(item.prompt_text);
  j.at("image_a").get_to(item.image_a.path);
  j.at("image_b").get_to(item.image_b.path);
  j.at("is_gold").get_to(item.is_gold);
  j.at("flipped").get_to(item.flipped);
  item.correct_side.reset();
  if (j.contains("correct_side")) item.correct_side = j["correct_side"].get<Side>();
}

void to_json(nlohmann::json& j, const BatchLease& lease) {
  j = nlohmann::json{{"batch_id", lease.batch_id},
                     {"annotator_id", lease.annotator_id},
                     {"items", lease.items},
                     {"issued_at", to_unix_ms(lease.issued_at)},
                     {"expires_at", to_unix_ms(lease.expires_at)},
                     {"state", lease_state_name(lease.state)},
                     {"seed", lease.seed}};
}

void from_json(const nlohmann::json& j, BatchLease& lease) {
  j.at("batch_id").get_to(lease.batch_id);
  j.at("annotator_id").get_to(lease.annotator_id);
  j.at("items").get_to(lease.items);
  lease.issued_at = from_unix_ms(j.at("issued_at").get<std::int64_t>());
  lease.expires_at = from_unix_ms(j.at("expires_at").get<std::int64_t>());
  lease.state = parse_lease_state(j.at("state").get<std::string>());
  j.at("seed").get_to(lease.seed);
}

void to_json(nlohmann::json& j, const Label& label) {
  j = nlohmann::json{{"data_point_id", label.data_point_id},
                     {"annotator_id", label.annotator_id},
                     {"choice", label.choice},
                     {"submitted_at", to_unix_ms(label.submitted_at)}};
}

void from_json(const nlohmann::json& j, Label& label) {
  j.at("data_point_id").get_to(label.data_point_id);
  j.at("annotator_id").get_to(label.annotator_id);
  j.at("choice").get_to(label.choice);
  label.submitted_at = from_unix_ms(j.at("submitted_at").get<std::int64_t>());
}

nlohmann::json to_json(const PoolState& pool) {
  nlohmann::json real = nlohmann::json::array();
  for (const auto& rp : pool.real_) {
    real.push_back({{"point", rp.point},
                    {"label_count", rp.label_count},
                    {"reserved", rp.reserved},
                    {"labelers", rp.labelers}});
  }
  nlohmann::json answers = nlohmann::json::array();
  for (const auto& a : pool.gold_answers_) {
    answers.push_back({{"data_point_id", a.data_point_id},
                       {"annotator_id", a.annotator_id},
                       {"choice", a.choice},
                       {"correct", a.correct},
                       {"submitted_at", to_unix_ms(a.submitted_at)}});
  }
  return {{"max_labels_per_point", pool.max_labels_},
          {"real", std::move(real)},
          {"gold", pool.gold_},
          {"labels", pool.labels_},
          {"gold_answers", std::move(answers)}};
}

PoolState pool_state_from_json(const nlohmann::json& j) {
  PoolState pool;
  j.at("max_labels_per_point").get_to(pool.max_labels_);
  for (const auto& r : j.at("real")) {
    RealPointState rp;
    r.at("point").get_to(rp.point);
    r.at("label_count").get_to(rp.label_count);
    r.at("reserved").get_to(rp.reserved);
    r.at("labelers").get_to(rp.labelers);
    pool.real_.push_back(std::move(rp));
  }
  j.at("gold").get_to(pool.gold_);
  j.at("labels").get_to(pool.labels_);
  for (const auto& a : j.at("gold_answers")) {
    GoldAnswer ga;
    a.at("data_point_id").get_to(ga.data_point_id);
    a.at("annotator_id").get_to(ga.annotator_id);
    a.at("choice").get_to(ga.choice);
    a.at("correct").get_to(ga.correct);
    ga.submitted_at = from_unix_ms(a.at("submitted_at").get<std::int64_t>());
    pool.gold_answers_.push_back(std::move(ga));
  }
  pool.reindex();
  return pool;
}

nlohmann::json to_json(const LabelingEngine& engine) {
  nlohmann::json annotators = nlohmann::json::array();
  for (const auto& [id, rec] : engine.annotators_) annotators.push_back(rec);
  nlohmann::json leases = nlohmann::json::array();
  for (const auto& [id, lease] : engine.leases_) leases.push_back(lease);
  std::map<AnnotatorId, std::set<DataPointId>> issued;
  for (const auto& [id, seen] : engine.issued_) {
    issued[id] = std::set<DataPointId>(seen.begin(), seen.end());
  }
  return {{"policy", to_json(engine.policy_)},
          {"max_labels_per_point", engine.config_.max_labels_per_point},
          {"lease_ttl_ms", engine.config_.lease_ttl.count()},
          {"lease_counter", engine.lease_counter_},
          {"pool", to_json(engine.pool_)},
          {"annotators", std::move(annotators)},
          {"leases", std::move(leases)},
          {"issued", issued}};
}

LabelingEngine engine_from_json(const nlohmann::json& j) {
  LabelingEngine engine;
  engine.policy_ = trust_policy_from_json(j.at("policy"));
  j.at("max_labels_per_point").get_to(engine.config_.max_labels_per_point);
  engine.config_.lease_ttl =
      std::chrono::milliseconds(j.at("lease_ttl_ms").get<std::int64_t>());
  j.at("lease_counter").get_to(engine.lease_counter_);
  engine.pool_ = pool_state_from_json(j.at("pool"));
  for (const auto& a : j.at("annotators")) {
    auto rec = a.get<AnnotatorRecord>();
    auto id = rec.annotator_id;
    engine.annotators_.emplace(std::move(id), std::move(rec));
  }
  for (const auto& l : j.at("leases")) {
    auto lease = l.get<BatchLease>();
    if (lease.state == LeaseState::kOpen) {
      engine.open_by_annotator_[lease.annotator_id] = lease.batch_id;
    }
    auto id = lease.batch_id;
    engine.leases_.emplace(std::move(id), std::move(lease));
  }
  for (const auto& [id, seen] : j.at("issued").items()) {
    auto ids = seen.get<std::vector<DataPointId>>();
    engine.issued_[id] = std::unordered_set<DataPointId>(ids.begin(), ids.end());
  }
  return engine;
}

nlohmann::json client_view(const TaskItem& item,
                           std::string_view image_prefix) {
  auto url = [&](const ImageRef& ref) {
    std::string_view path = ref.path;
    if (path.rfind("images/", 0) == 0) path.remove_prefix(7);
    return std::string(image_prefix) + std::string(path);
  };
  return {{"task_id", item.task_id},
          {"prompt", item.prompt_text},
          {"image_a_url", url(item.image_a)},
          {"image_b_url", url(item.image_b)}};
}

}  // namespace labelforge

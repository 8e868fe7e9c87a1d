#pragma once

// The collection service: labeling protocol operations on top of the
// engine, with write-ahead event logging and recovery by replay.

#include <chrono>
#include <condition_variable>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "labelforge/aggregate.hpp"
#include "labelforge/assignment.hpp"
#include "labelforge/config.hpp"
#include "labelforge/event_log.hpp"

namespace labelforge {

struct ServiceState {
  LabelingEngine engine;
  // SHA-256 of the session token -> annotator. Tokens themselves are never
  // stored.
  std::map<std::string, AnnotatorId> sessions;
  std::uint64_t last_seq = 0;
};

nlohmann::json to_json(const ServiceState& state);
ServiceState service_state_from_json(const nlohmann::json& j);
// SHA-256 of the canonical state dump.
std::string state_hash(const ServiceState& state);

// Applies one logged event by re-running the operation it records and
// checking the result against the payload. Throws CorruptLogError.
void apply_event(ServiceState& state, const Event& event);

struct RecoveryResult {
  ServiceState state;
  std::size_t replayed = 0;
  std::optional<std::uint64_t> first_bad_seq;
  std::uint64_t valid_bytes = 0;
  std::string error;
};

// Replays every event after state.last_seq, stopping at the first bad one.
// Never throws for log corruption; the result reports it.
RecoveryResult replay_log(ServiceState initial, std::istream& log);

// Strict form of replay_log: throws CorruptLogError with the first bad seq.
ServiceState recover(ServiceState initial, std::istream& log);

// State before any event: the pool loaded from config.pool_dir, or the
// snapshot at config.snapshot when one exists.
ServiceState initial_state(const ServiceConfig& config);

void write_snapshot(const ServiceState& state, const std::filesystem::path& path);

// Dataset statistics plus served batches and their estimated cost.
nlohmann::json stats_json(const ServiceState& state, const CostModel& cost);
// The exported dataset for a state, as written by export_dataset. Throws
// kNoLabels when no point has a surviving label.
std::string export_snapshot(const ServiceState& state);

struct SessionCredentials {
  AnnotatorId annotator_id;
  std::string token;
};

struct IssuedBatch {
  BatchId batch_id;
  Timestamp expires_at{};
  std::vector<TaskItem> items;
};

struct SubmitResult {
  std::int64_t reward = 0;
  std::string accuracy_band;
  bool banned = false;
};

struct MeStats {
  std::int64_t reward_balance = 0;
  std::uint64_t labels_submitted = 0;
  std::string accuracy_band;
  bool banned = false;
};

struct ServiceOptions {
  std::uint64_t seed = 1;
  CostModel cost_model{Decimal4::from_units(25), 1};
  std::function<Timestamp()> clock = wall_clock_now;
  std::filesystem::path snapshot_path;
  std::uint64_t snapshot_every = 0;
};

class CollectionService {
 public:
  CollectionService(ServiceState state, std::unique_ptr<EventSink> sink,
                    ServiceOptions options);
  ~CollectionService();

  // Loads the pool or snapshot, replays the event log and expires leases
  // that went stale while the service was down. A torn log tail is
  // truncated only when `repair` is set; otherwise CorruptLogError.
  static std::unique_ptr<CollectionService> open(
      const ServiceConfig& config,
      std::function<Timestamp()> clock = wall_clock_now, bool repair = false);

  SessionCredentials create_session();
  void consent(const std::string& token, bool accepted);
  IssuedBatch next_batch(const std::string& token);
  SubmitResult submit(const std::string& token, const BatchId& batch_id,
                      const Choices& choices);
  MeStats me(const std::string& token) const;

  // Expires every open lease past its deadline. Returns the count.
  std::size_t expire_stale();

  nlohmann::json admin_stats() const;
  // Throws kNoLabels when nothing is exportable yet.
  std::string admin_export() const;

  ServiceState snapshot() const;
  std::string state_hash() const;
  std::uint64_t last_seq() const;

  void start_expiry_worker(std::chrono::milliseconds interval);
  void stop_expiry_worker();

 private:
  const AnnotatorId& authenticate(const std::string& token) const;
  Event make_event(EventKind kind, Timestamp now, nlohmann::json payload,
                   std::uint64_t offset = 0) const;
  // Appends, then applies `commit`. Nothing changes if the append throws.
  void log_then(std::vector<Event> events, const std::function<void()>& commit);
  std::size_t expire_locked(const std::vector<BatchId>& ids, Timestamp now);

  mutable std::mutex mu_;
  ServiceState state_;
  std::unique_ptr<EventSink> sink_;
  ServiceOptions options_;

  std::mutex worker_mu_;
  std::condition_variable worker_cv_;
  bool worker_stop_ = false;
  std::thread worker_;
};

// Choices as sent by clients: task_id -> "a" | "b". Anything else, ties
// included, is kInvalidChoice.
Choices parse_wire_choices(const nlohmann::json& body);

}  // namespace labelforge

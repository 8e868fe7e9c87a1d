#include "labelforge/service.hpp"

#include <fstream>
#include <sstream>

#include "labelforge/error.hpp"
#include "labelforge/hash.hpp"

namespace labelforge {

nlohmann::json to_json(const ServiceState& state) {
  return {{"engine", to_json(state.engine)},
          {"sessions", state.sessions},
          {"last_seq", state.last_seq}};
}

ServiceState service_state_from_json(const nlohmann::json& j) {
  ServiceState s;
  s.engine = engine_from_json(j.at("engine"));
  j.at("sessions").get_to(s.sessions);
  j.at("last_seq").get_to(s.last_seq);
  return s;
}

std::string state_hash(const ServiceState& state) {
  return sha256_hex(to_json(state).dump());
}

namespace {

nlohmann::json wire_choices(const Choices& choices) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [task, side] : choices) {
    j[task] = side == Side::A ? "a" : "b";
  }
  return j;
}

std::vector<DataPointId> item_ids(const BatchLease& lease) {
  std::vector<DataPointId> ids;
  for (const auto& item : lease.items) ids.push_back(item.data_point_id);
  return ids;
}

}  // namespace

void apply_event(ServiceState& st, const Event& e) {
  auto corrupt = [&](const std::string& why) {
    throw CorruptLogError(e.seq, "event " + std::to_string(e.seq) + " (" +
                                     std::string(event_kind_name(e.kind)) +
                                     "): " + why);
  };
  if (e.seq != st.last_seq + 1) corrupt("out of sequence");
  try {
    const auto& p = e.payload;
    auto& engine = st.engine;
    switch (e.kind) {
      case EventKind::kSessionCreated: {
        auto id = p.at("annotator_id").get<AnnotatorId>();
        auto digest = p.at("token_sha256").get<std::string>();
        if (st.sessions.count(digest)) corrupt("duplicate session token");
        engine.register_annotator(id, e.ts);
        st.sessions.emplace(std::move(digest), std::move(id));
        break;
      }
      case EventKind::kConsentGiven:
        engine.record_consent(p.at("annotator_id").get<AnnotatorId>());
        break;
      case EventKind::kLeaseIssued: {
        auto plan = engine.plan_next_batch(p.at("annotator_id").get<AnnotatorId>(),
                                           e.ts, p.at("seed").get<std::uint64_t>());
        if (plan.lease.batch_id != p.at("batch_id").get<std::string>() ||
            item_ids(plan.lease) !=
                p.at("data_point_ids").get<std::vector<DataPointId>>()) {
          corrupt("replayed lease differs from the logged one");
        }
        engine.commit(std::move(plan));
        break;
      }
      case EventKind::kBatchSubmitted: {
        auto plan = engine.plan_submit(
            p.at("batch_id").get<BatchId>(),
            p.at("annotator_id").get<AnnotatorId>(),
            parse_wire_choices({{"choices", p.at("choices")}}), e.ts);
        engine.commit(std::move(plan));
        break;
      }
      case EventKind::kLeaseExpired:
        if (!engine.expire_lease(p.at("batch_id").get<BatchId>())) {
          corrupt("lease is not open");
        }
        break;
      case EventKind::kAnnotatorBanned: {
        const auto* rec =
            engine.find_annotator(p.at("annotator_id").get<AnnotatorId>());
        if (!rec || !rec->banned) corrupt("annotator is not banned on replay");
        break;
      }
      case EventKind::kRewardCredited: {
        const auto* rec =
            engine.find_annotator(p.at("annotator_id").get<AnnotatorId>());
        if (!rec || rec->reward_balance != p.at("balance").get<std::int64_t>()) {
          corrupt("reward balance differs on replay");
        }
        break;
      }
    }
  } catch (const CorruptLogError&) {
    throw;
  } catch (const std::exception& ex) {
    corrupt(ex.what());
  }
  st.last_seq = e.seq;
}

RecoveryResult replay_log(ServiceState initial, std::istream& log) {
  RecoveryResult result;
  result.state = std::move(initial);
  ParsedLog parsed = parse_event_log(log);
  const std::uint64_t base_seq = result.state.last_seq;
  for (std::size_t i = 0; i < parsed.events.size(); ++i) {
    const auto& e = parsed.events[i];
    if (e.seq <= base_seq) {
      result.valid_bytes = parsed.end_offsets[i];
      continue;
    }
    try {
      apply_event(result.state, e);
    } catch (const CorruptLogError& err) {
      result.first_bad_seq = err.first_bad_seq();
      result.error = err.what();
      return result;
    }
    ++result.replayed;
    result.valid_bytes = parsed.end_offsets[i];
  }
  if (parsed.first_bad_seq) {
    result.first_bad_seq = parsed.first_bad_seq;
    result.error = parsed.error;
  }
  return result;
}

ServiceState recover(ServiceState initial, std::istream& log) {
  auto result = replay_log(std::move(initial), log);
  if (result.first_bad_seq) {
    throw CorruptLogError(*result.first_bad_seq, result.error);
  }
  return std::move(result.state);
}

ServiceState initial_state(const ServiceConfig& config) {
  if (!config.snapshot.empty() && std::filesystem::exists(config.snapshot)) {
    std::ifstream in(config.snapshot, std::ios::binary);
    auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) {
      throw Error(ErrorCode::kCorruptLog,
                  "unreadable snapshot " + config.snapshot.string());
    }
    return service_state_from_json(j);
  }
  ServiceState st;
  st.engine = LabelingEngine(load_pool(config.pool_dir), config.trust_policy,
                             config.assignment());
  return st;
}

void write_snapshot(const ServiceState& state,
                    const std::filesystem::path& path) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << to_json(state).dump() << '\n';
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

nlohmann::json stats_json(const ServiceState& state, const CostModel& cost) {
  const auto& engine = state.engine;
  auto points = aggregate(engine.pool(), engine.annotators());
  auto stats = compute_stats(engine.pool(), engine.annotators(), points);
  std::uint64_t batches = 0;
  for (const auto& [id, lease] : engine.leases()) {
    if (lease.state == LeaseState::kSubmitted) ++batches;
  }
  auto j = to_json(stats);
  j["batches_submitted"] = batches;
  j["estimated_cost"] = estimate_cost(batches, cost).to_string();
  return j;
}

std::string export_snapshot(const ServiceState& state) {
  auto points = aggregate(state.engine.pool(), state.engine.annotators());
  if (points.empty()) {
    throw Error(ErrorCode::kNoLabels, "no exportable labels yet");
  }
  std::ostringstream out;
  export_dataset(points, out);
  return out.str();
}

Choices parse_wire_choices(const nlohmann::json& body) {
  if (!body.is_object() || !body.contains("choices") ||
      !body["choices"].is_object()) {
    throw Error(ErrorCode::kInvalidChoice, "body must carry a choices object");
  }
  Choices choices;
  for (const auto& [task, value] : body["choices"].items()) {
    if (!value.is_string()) {
      throw Error(ErrorCode::kInvalidChoice, "choice for " + task + " is missing");
    }
    const auto& s = value.get_ref<const std::string&>();
    if (s == "a") {
      choices[task] = Side::A;
    } else if (s == "b") {
      choices[task] = Side::B;
    } else {
      throw Error(ErrorCode::kInvalidChoice,
                  "choice for " + task + " must be \"a\" or \"b\"");
    }
  }
  return choices;
}

// CollectionService

CollectionService::CollectionService(ServiceState state,
                                     std::unique_ptr<EventSink> sink,
                                     ServiceOptions options)
    : state_(std::move(state)),
      sink_(std::move(sink)),
      options_(std::move(options)) {
  options_.cost_model.validate();
}

CollectionService::~CollectionService() { stop_expiry_worker(); }

std::unique_ptr<CollectionService> CollectionService::open(
    const ServiceConfig& config, std::function<Timestamp()> clock, bool repair) {
  RecoveryResult recovered;
  {
    auto initial = initial_state(config);
    std::ifstream in(config.event_log, std::ios::binary);
    if (in) {
      recovered = replay_log(std::move(initial), in);
    } else {
      recovered.state = std::move(initial);
    }
  }
  if (recovered.first_bad_seq) {
    if (!repair) {
      throw CorruptLogError(*recovered.first_bad_seq, recovered.error);
    }
    FileEventLog::truncate(config.event_log, recovered.valid_bytes);
  }
  ServiceOptions options;
  options.seed = config.seed;
  options.cost_model = config.cost_model;
  options.clock = std::move(clock);
  options.snapshot_path = config.snapshot;
  options.snapshot_every = config.snapshot_every;
  auto service = std::make_unique<CollectionService>(
      std::move(recovered.state),
      std::make_unique<FileEventLog>(config.event_log, config.fsync),
      std::move(options));
  service->expire_stale();
  return service;
}

const AnnotatorId& CollectionService::authenticate(
    const std::string& token) const {
  if (!token.empty()) {
    auto it = state_.sessions.find(sha256_hex(token));
    if (it != state_.sessions.end()) return it->second;
  }
  throw Error(ErrorCode::kUnauthorized, "missing or unknown session token");
}

Event CollectionService::make_event(EventKind kind, Timestamp now,
                                    nlohmann::json payload,
                                    std::uint64_t offset) const {
  return Event{state_.last_seq + 1 + offset, now, kind, std::move(payload)};
}

void CollectionService::log_then(std::vector<Event> events,
                                 const std::function<void()>& commit) {
  sink_->append(events);
  commit();
  std::uint64_t before = state_.last_seq;
  state_.last_seq = events.back().seq;
  if (options_.snapshot_every > 0 && !options_.snapshot_path.empty() &&
      before / options_.snapshot_every !=
          state_.last_seq / options_.snapshot_every) {
    write_snapshot(state_, options_.snapshot_path);
  }
}

SessionCredentials CollectionService::create_session() {
  std::lock_guard lock(mu_);
  Timestamp now = options_.clock();
  SessionCredentials creds;
  do {
    creds.annotator_id = "ann-" + random_hex(8);
  } while (state_.engine.find_annotator(creds.annotator_id));
  creds.token = random_hex(16);
  std::string digest = sha256_hex(creds.token);
  log_then({make_event(EventKind::kSessionCreated, now,
                       {{"annotator_id", creds.annotator_id},
                        {"token_sha256", digest}})},
           [&] {
             state_.engine.register_annotator(creds.annotator_id, now);
             state_.sessions.emplace(digest, creds.annotator_id);
           });
  return creds;
}

void CollectionService::consent(const std::string& token, bool accepted) {
  std::lock_guard lock(mu_);
  const AnnotatorId id = authenticate(token);
  if (!accepted) return;
  if (state_.engine.find_annotator(id)->consented) return;
  log_then({make_event(EventKind::kConsentGiven, options_.clock(),
                       {{"annotator_id", id}})},
           [&] { state_.engine.record_consent(id); });
}

std::size_t CollectionService::expire_locked(const std::vector<BatchId>& ids,
                                             Timestamp now) {
  if (ids.empty()) return 0;
  std::vector<Event> events;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto* lease = state_.engine.find_lease(ids[i]);
    events.push_back(make_event(EventKind::kLeaseExpired, now,
                                {{"batch_id", ids[i]},
                                 {"annotator_id", lease->annotator_id}},
                                i));
  }
  log_then(std::move(events), [&] {
    for (const auto& id : ids) state_.engine.expire_lease(id);
  });
  return ids.size();
}

IssuedBatch CollectionService::next_batch(const std::string& token) {
  std::lock_guard lock(mu_);
  const AnnotatorId id = authenticate(token);
  Timestamp now = options_.clock();
  if (const auto* open = state_.engine.open_lease_of(id);
      open && open->expires_at <= now) {
    expire_locked({open->batch_id}, now);
  }
  std::uint64_t seed =
      derive_seed(options_.seed, state_.engine.leases_issued());
  auto plan = state_.engine.plan_next_batch(id, now, seed);
  nlohmann::json payload{{"annotator_id", id},
                         {"seed", seed},
                         {"batch_id", plan.lease.batch_id},
                         {"data_point_ids", item_ids(plan.lease)}};
  const BatchLease* issued = nullptr;
  log_then({make_event(EventKind::kLeaseIssued, now, std::move(payload))},
           [&] { issued = &state_.engine.commit(std::move(plan)); });
  return IssuedBatch{issued->batch_id, issued->expires_at, issued->items};
}

SubmitResult CollectionService::submit(const std::string& token,
                                       const BatchId& batch_id,
                                       const Choices& choices) {
  std::lock_guard lock(mu_);
  const AnnotatorId id = authenticate(token);
  Timestamp now = options_.clock();
  if (const auto* lease = state_.engine.find_lease(batch_id);
      lease && lease->annotator_id == id &&
      lease->state == LeaseState::kOpen && lease->expires_at <= now) {
    expire_locked({batch_id}, now);
  }
  auto plan = state_.engine.plan_submit(batch_id, id, choices, now);

  std::vector<Event> events;
  events.push_back(make_event(EventKind::kBatchSubmitted, now,
                              {{"annotator_id", id},
                               {"batch_id", batch_id},
                               {"choices", wire_choices(choices)}}));
  if (plan.outcome.banned_after) {
    events.push_back(make_event(EventKind::kAnnotatorBanned, now,
                                {{"annotator_id", id}, {"batch_id", batch_id}},
                                events.size()));
  }
  if (plan.outcome.reward > 0) {
    events.push_back(make_event(EventKind::kRewardCredited, now,
                                {{"annotator_id", id},
                                 {"batch_id", batch_id},
                                 {"amount", plan.outcome.reward},
                                 {"balance", plan.updated.reward_balance}},
                                events.size()));
  }
  SubmitResult result;
  result.reward = plan.outcome.reward;
  result.banned = plan.outcome.banned_after;
  result.accuracy_band =
      std::string(accuracy_band(plan.updated, state_.engine.policy()));
  log_then(std::move(events),
           [&] { state_.engine.commit(std::move(plan)); });
  return result;
}

MeStats CollectionService::me(const std::string& token) const {
  std::lock_guard lock(mu_);
  const auto* rec = state_.engine.find_annotator(authenticate(token));
  MeStats s;
  s.reward_balance = rec->reward_balance;
  s.labels_submitted = rec->labeled_ids.size();
  s.accuracy_band = std::string(accuracy_band(*rec, state_.engine.policy()));
  s.banned = rec->banned;
  return s;
}

std::size_t CollectionService::expire_stale() {
  std::lock_guard lock(mu_);
  Timestamp now = options_.clock();
  return expire_locked(state_.engine.stale_leases(now), now);
}

nlohmann::json CollectionService::admin_stats() const {
  return stats_json(snapshot(), options_.cost_model);
}

std::string CollectionService::admin_export() const {
  return export_snapshot(snapshot());
}

ServiceState CollectionService::snapshot() const {
  std::lock_guard lock(mu_);
  return state_;
}

std::string CollectionService::state_hash() const {
  return labelforge::state_hash(snapshot());
}

std::uint64_t CollectionService::last_seq() const {
  std::lock_guard lock(mu_);
  return state_.last_seq;
}

void CollectionService::start_expiry_worker(std::chrono::milliseconds interval) {
  stop_expiry_worker();
  {
    std::lock_guard lock(worker_mu_);
    worker_stop_ = false;
  }
  worker_ = std::thread([this, interval] {
    std::unique_lock lock(worker_mu_);
    while (!worker_cv_.wait_for(lock, interval, [&] { return worker_stop_; })) {
      lock.unlock();
      try {
        expire_stale();
      } catch (const std::exception&) {
        // Retried on the next tick; a failed append changed nothing.
      }
      lock.lock();
    }
  });
}

void CollectionService::stop_expiry_worker() {
  {
    std::lock_guard lock(worker_mu_);
    worker_stop_ = true;
  }
  worker_cv_.notify_all();
  if (worker_.joinable()) worker_.join();
}

}  // namespace labelforge

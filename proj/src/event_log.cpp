#include "labelforge/event_log.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <istream>

#include "labelforge/error.hpp"

namespace labelforge {

namespace {

constexpr std::pair<EventKind, std::string_view> kKindNames[] = {
    {EventKind::kSessionCreated, "SessionCreated"},
    {EventKind::kConsentGiven, "ConsentGiven"},
    {EventKind::kLeaseIssued, "LeaseIssued"},
    {EventKind::kBatchSubmitted, "BatchSubmitted"},
    {EventKind::kLeaseExpired, "LeaseExpired"},
    {EventKind::kAnnotatorBanned, "AnnotatorBanned"},
    {EventKind::kRewardCredited, "RewardCredited"},
};

}  // namespace

std::string_view event_kind_name(EventKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "Unknown";
}

std::optional<EventKind> parse_event_kind(std::string_view name) {
  for (const auto& [k, n] : kKindNames) {
    if (n == name) return k;
  }
  return std::nullopt;
}

std::string serialize_event(const Event& e) {
  nlohmann::json j{{"seq", e.seq},
                   {"ts", to_unix_ms(e.ts)},
                   {"kind", event_kind_name(e.kind)},
                   {"payload", e.payload}};
  return j.dump();
}

ParsedLog parse_event_log(std::istream& in, std::uint64_t first_seq) {
  ParsedLog log;
  std::uint64_t expected = first_seq;
  std::string line;
  while (true) {
    line.clear();
    if (!std::getline(in, line)) break;
    bool has_newline = !in.eof();
    auto fail = [&](const std::string& why) {
      log.first_bad_seq = expected;
      log.error = "event " + std::to_string(expected) + ": " + why;
    };
    if (!has_newline) {
      if (!line.empty()) fail("truncated line");
      break;
    }
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      fail("unparsable line");
      break;
    }
    Event e;
    try {
      e.seq = j.at("seq").get<std::uint64_t>();
      e.ts = from_unix_ms(j.at("ts").get<std::int64_t>());
      auto kind = parse_event_kind(j.at("kind").get<std::string>());
      if (!kind) throw std::runtime_error("unknown kind");
      e.kind = *kind;
      e.payload = j.at("payload");
    } catch (const std::exception& ex) {
      fail(std::string("malformed event: ") + ex.what());
      break;
    }
    if (e.seq != expected) {
      fail("sequence gap, found " + std::to_string(e.seq));
      break;
    }
    log.events.push_back(std::move(e));
    log.valid_bytes += line.size() + 1;
    log.end_offsets.push_back(log.valid_bytes);
    ++expected;
  }
  return log;
}

ParsedLog read_event_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return {};
  return parse_event_log(in);
}

void MemoryEventLog::append(const std::vector<Event>& events) {
  std::lock_guard lock(mu_);
  events_.insert(events_.end(), events.begin(), events.end());
}

std::vector<Event> MemoryEventLog::events() const {
  std::lock_guard lock(mu_);
  return events_;
}

FileEventLog::FileEventLog(const std::filesystem::path& path, bool fsync)
    : path_(path), fsync_(fsync) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  fd_ = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) {
    throw Error(ErrorCode::kLogUnwritable,
                "cannot open event log " + path.string() + ": " +
                    std::strerror(errno));
  }
}

FileEventLog::~FileEventLog() {
  if (fd_ >= 0) ::close(fd_);
}

void FileEventLog::append(const std::vector<Event>& events) {
  if (events.empty()) return;
  std::string buf;
  for (const auto& e : events) {
    buf += serialize_event(e);
    buf += '\n';
  }
  struct stat st {};
  if (::fstat(fd_, &st) != 0) {
    throw Error(ErrorCode::kLogUnwritable, "fstat failed on event log");
  }
  ssize_t n = ::write(fd_, buf.data(), buf.size());
  if (n != static_cast<ssize_t>(buf.size())) {
    int err = errno;
    if (n > 0) {
      // Keep the log prefix-valid.
      [[maybe_unused]] int rc = ::ftruncate(fd_, st.st_size);
    }
    throw Error(ErrorCode::kLogUnwritable,
                std::string("event log write failed: ") +
                    (n < 0 ? std::strerror(err) : "short write"));
  }
  if (fsync_ && ::fdatasync(fd_) != 0) {
    [[maybe_unused]] int rc = ::ftruncate(fd_, st.st_size);
    throw Error(ErrorCode::kLogUnwritable, "fdatasync failed on event log");
  }
}

void FileEventLog::truncate(const std::filesystem::path& path,
                            std::uint64_t bytes) {
  std::filesystem::resize_file(path, bytes);
}

}  // namespace labelforge

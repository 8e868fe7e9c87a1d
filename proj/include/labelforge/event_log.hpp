#pragma once

// Append-only newline-delimited JSON event log.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "labelforge/common.hpp"

namespace labelforge {

enum class EventKind {
  kSessionCreated,
  kConsentGiven,
  kLeaseIssued,
  kBatchSubmitted,
  kLeaseExpired,
  kAnnotatorBanned,
  kRewardCredited,
};

std::string_view event_kind_name(EventKind kind);
std::optional<EventKind> parse_event_kind(std::string_view name);

struct Event {
  std::uint64_t seq = 0;
  Timestamp ts{};
  EventKind kind = EventKind::kSessionCreated;
  nlohmann::json payload = nlohmann::json::object();

  bool operator==(const Event&) const = default;
};

// One line, without the trailing newline.
std::string serialize_event(const Event& e);

struct ParsedLog {
  std::vector<Event> events;
  // End offset in bytes of each event's line.
  std::vector<std::uint64_t> end_offsets;
  // Bytes covered by `events`; a repair truncates the file to this length.
  std::uint64_t valid_bytes = 0;
  // Set when a line could not be parsed, was missing its newline, or broke
  // the gap-free sequence.
  std::optional<std::uint64_t> first_bad_seq;
  std::string error;
};

// Sequence numbers must start at first_seq and have no gaps. Parsing stops
// at the first bad line; everything before it is kept.
ParsedLog parse_event_log(std::istream& in, std::uint64_t first_seq = 1);
ParsedLog read_event_log(const std::filesystem::path& path);

class EventSink {
 public:
  virtual ~EventSink() = default;
  // All-or-nothing. Throws kLogUnwritable.
  virtual void append(const std::vector<Event>& events) = 0;
};

class MemoryEventLog : public EventSink {
 public:
  void append(const std::vector<Event>& events) override;
  std::vector<Event> events() const;

 private:
  mutable std::mutex mu_;
  std::vector<Event> events_;
};

class FileEventLog : public EventSink {
 public:
  // Opens for append, creating parent directories.
  explicit FileEventLog(const std::filesystem::path& path, bool fsync = false);
  ~FileEventLog() override;
  FileEventLog(const FileEventLog&) = delete;
  FileEventLog& operator=(const FileEventLog&) = delete;

  // The batch is written with a single write(2); on a short write the file
  // is truncated back to its previous length.
  void append(const std::vector<Event>& events) override;

  // Drops a torn tail left by a crash.
  static void truncate(const std::filesystem::path& path, std::uint64_t bytes);

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  int fd_ = -1;
  bool fsync_ = false;
};

}  // namespace labelforge

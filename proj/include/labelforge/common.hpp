#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "json.hpp"

namespace labelforge {

using DataPointId = std::string;
using AnnotatorId = std::string;
using BatchId = std::string;

using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;

inline std::int64_t to_unix_ms(Timestamp t) {
  return t.time_since_epoch().count();
}
inline Timestamp from_unix_ms(std::int64_t ms) {
  return Timestamp{std::chrono::milliseconds{ms}};
}
inline Timestamp wall_clock_now() {
  return std::chrono::time_point_cast<std::chrono::milliseconds>(
      std::chrono::system_clock::now());
}

// A forced choice between the two images of a pair. There is no tie value.
enum class Side : std::uint8_t { A, B };

inline Side other(Side s) { return s == Side::A ? Side::B : Side::A; }
inline std::string_view side_name(Side s) { return s == Side::A ? "A" : "B"; }

// Accepts "A"/"B" (storage form) and "a"/"b" (wire form). Anything else,
// including "tie", yields nullopt.
std::optional<Side> parse_side(std::string_view text);

void to_json(nlohmann::json& j, Side s);
void from_json(const nlohmann::json& j, Side& s);

}  // namespace labelforge

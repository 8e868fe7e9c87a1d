#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include "labelforge/aggregate.hpp"
#include "labelforge/assignment.hpp"
#include "labelforge/quality.hpp"

namespace labelforge {

struct ServiceConfig {
  std::string bind_addr = "127.0.0.1:8080";
  std::string admin_token;
  TrustPolicy trust_policy;
  std::int64_t lease_ttl_seconds = 1800;
  std::uint32_t max_labels_per_point = 3;
  CostModel cost_model{Decimal4::from_units(25), 1};
  std::filesystem::path pool_dir = "pool";
  std::filesystem::path event_log = "state/events.jsonl";
  std::filesystem::path snapshot;  // empty: no snapshots
  std::uint64_t snapshot_every = 0;
  bool fsync = false;
  std::int64_t expiry_interval_seconds = 30;
  std::uint64_t seed = 1;

  AssignmentConfig assignment() const;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

// Reads LABELFORGE_* from the process environment.
EnvLookup process_env();

// Overrides: for a dotted key such as "server.admin_token" the variable is
// LABELFORGE_SERVER_ADMIN_TOKEN. Values are parsed as JSON when possible
// and taken as plain strings otherwise.
void apply_env_overrides(nlohmann::json& doc, const EnvLookup& env);

// Relative paths are resolved against `base_dir`.
ServiceConfig config_from_json(const nlohmann::json& doc,
                               const std::filesystem::path& base_dir = {});

ServiceConfig load_config(const std::filesystem::path& path,
                          const EnvLookup& env = process_env());

}  // namespace labelforge

#include "labelforge/config.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>

#include "labelforge/error.hpp"

namespace labelforge {

namespace {

const char* const kOverridableKeys[] = {
    "server.bind_addr",
    "server.admin_token",
    "trust_policy.batch_size",
    "trust_policy.screening_gold",
    "trust_policy.min_gold_for_tiering",
    "trust_policy.ban_threshold",
    "trust_policy.high_trust_threshold",
    "trust_policy.gold_quota_high",
    "trust_policy.gold_quota_mid",
    "trust_policy.reward_base_per_label",
    "lease_ttl_seconds",
    "max_labels_per_point",
    "cost_model.revenue_per_reward_ad",
    "cost_model.batches_per_ad_slot",
    "pool.dir",
    "storage.event_log",
    "storage.snapshot",
    "storage.snapshot_every",
    "storage.fsync",
    "expiry_interval_seconds",
    "seed",
};

std::string env_name(std::string_view dotted) {
  std::string name = "LABELFORGE_";
  for (char c : dotted) {
    name += c == '.' ? '_' : static_cast<char>(std::toupper(
                                 static_cast<unsigned char>(c)));
  }
  return name;
}

nlohmann::json::json_pointer pointer_for(std::string_view dotted) {
  std::string p = "/";
  for (char c : dotted) p += c == '.' ? '/' : c;
  return nlohmann::json::json_pointer(p);
}

std::filesystem::path resolve(const std::filesystem::path& base,
                              const std::string& p) {
  std::filesystem::path path(p);
  if (path.empty() || path.is_absolute() || base.empty()) return path;
  return base / path;
}

}  // namespace

AssignmentConfig ServiceConfig::assignment() const {
  AssignmentConfig a;
  a.max_labels_per_point = max_labels_per_point;
  a.lease_ttl = std::chrono::seconds(lease_ttl_seconds);
  return a;
}

EnvLookup process_env() {
  return [](const std::string& name) -> std::optional<std::string> {
    const char* v = std::getenv(name.c_str());
    if (!v) return std::nullopt;
    return std::string(v);
  };
}

void apply_env_overrides(nlohmann::json& doc, const EnvLookup& env) {
  if (!doc.is_object()) doc = nlohmann::json::object();
  for (const char* key : kOverridableKeys) {
    auto value = env(env_name(key));
    if (!value) continue;
    nlohmann::json parsed = nlohmann::json::parse(*value, nullptr, false);
    if (parsed.is_discarded() || parsed.is_object() || parsed.is_array()) {
      parsed = *value;
    }
    // Tokens and paths stay strings even if they look numeric.
    std::string_view k = key;
    if (k == "server.admin_token" || k == "server.bind_addr" ||
        k == "pool.dir" || k == "storage.event_log" ||
        k == "storage.snapshot") {
      parsed = *value;
    }
    doc[pointer_for(key)] = parsed;
  }
}

ServiceConfig config_from_json(const nlohmann::json& doc,
                               const std::filesystem::path& base_dir) {
  ServiceConfig c;
  try {
    if (auto it = doc.find("server"); it != doc.end()) {
      c.bind_addr = it->value("bind_addr", c.bind_addr);
      c.admin_token = it->value("admin_token", c.admin_token);
    }
    c.trust_policy = trust_policy_from_json(doc.value("trust_policy",
                                                      nlohmann::json()));
    c.lease_ttl_seconds = doc.value("lease_ttl_seconds", c.lease_ttl_seconds);
    c.max_labels_per_point =
        doc.value("max_labels_per_point", c.max_labels_per_point);
    if (auto it = doc.find("cost_model"); it != doc.end()) {
      c.cost_model = cost_model_from_json(*it);
    }
    if (auto it = doc.find("pool"); it != doc.end()) {
      c.pool_dir = resolve(base_dir, it->value("dir", c.pool_dir.string()));
    } else {
      c.pool_dir = resolve(base_dir, c.pool_dir.string());
    }
    std::string log = c.event_log.string();
    std::string snap;
    if (auto it = doc.find("storage"); it != doc.end()) {
      log = it->value("event_log", log);
      snap = it->value("snapshot", snap);
      c.snapshot_every = it->value("snapshot_every", c.snapshot_every);
      c.fsync = it->value("fsync", c.fsync);
    }
    c.event_log = resolve(base_dir, log);
    c.snapshot = snap.empty() ? std::filesystem::path{} : resolve(base_dir, snap);
    c.expiry_interval_seconds =
        doc.value("expiry_interval_seconds", c.expiry_interval_seconds);
    c.seed = doc.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfigInvalid, e.what());
  }
  if (c.lease_ttl_seconds <= 0) {
    throw Error(ErrorCode::kConfigInvalid, "lease_ttl_seconds must be > 0");
  }
  if (c.max_labels_per_point == 0) {
    throw Error(ErrorCode::kConfigInvalid, "max_labels_per_point must be > 0");
  }
  if (c.expiry_interval_seconds <= 0) {
    throw Error(ErrorCode::kConfigInvalid,
                "expiry_interval_seconds must be > 0");
  }
  return c;
}

ServiceConfig load_config(const std::filesystem::path& path,
                          const EnvLookup& env) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open config " + path.string());
  nlohmann::json doc = nlohmann::json::parse(in, nullptr, false);
  if (doc.is_discarded()) {
    throw Error(ErrorCode::kConfigInvalid, "config is not valid JSON");
  }
  apply_env_overrides(doc, env);
  return config_from_json(doc, path.parent_path());
}

}  // namespace labelforge

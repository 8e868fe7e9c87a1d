#pragma once

#include <chrono>
#include <filesystem>
#include <random>
#include <string>

#include "labelforge/assignment.hpp"
#include "labelforge/corpus.hpp"
#include "labelforge/hash.hpp"

namespace labelforge::testing {

// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    path_ = std::filesystem::temp_directory_path() /
            ("labelforge-test-" + random_hex(6));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const {
    return path_ / name;
  }

 private:
  std::filesystem::path path_;
};

inline Timestamp t0() { return from_unix_ms(1'700'000'000'000); }

inline TaskPool small_pool(std::size_t prompts, double gold_fraction = 0.5,
                           std::uint64_t seed = 1) {
  StubImageGenerator gen;
  return build_pool(synthetic_prompts(prompts, seed), Blocklist{},
                    gold_fraction, gen, seed);
}

// Answers every item of a lease, gold items correctly unless `wrong_gold`
// of them should be wrong; real items pick canonical A.
inline Choices answer(const BatchLease& lease, std::size_t wrong_gold = 0) {
  Choices c;
  for (const auto& item : lease.items) {
    Side canonical = Side::A;
    if (item.is_gold) {
      canonical = *item.correct_side;
      if (wrong_gold > 0) {
        canonical = other(canonical);
        --wrong_gold;
      }
    }
    c[item.task_id] = item.to_presented(canonical);
  }
  return c;
}

}  // namespace labelforge::testing

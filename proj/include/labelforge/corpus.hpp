#pragma once

// Task pool construction: prompt filtering, image-pair generation, and the
// real/gold data points annotators judge.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "labelforge/common.hpp"

namespace labelforge {

struct Prompt {
  std::string id;
  std::string text;

  bool operator==(const Prompt&) const = default;
};

// Throws kInvalidArgument if the id is empty or the text is blank.
void validate_prompt(const Prompt& prompt);

// Lowercase whole-word blocklist.
class Blocklist {
 public:
  Blocklist() = default;
  // Entries are trimmed and lowercased; empty entries are rejected.
  explicit Blocklist(const std::vector<std::string>& words);

  // One word per line; blank lines and lines starting with '#' are skipped.
  static Blocklist parse(std::istream& in);
  static Blocklist load(const std::filesystem::path& path);
  // Small built-in list used when no file is given.
  static Blocklist builtin();

  bool contains(std::string_view lowercase_token) const;
  const std::set<std::string, std::less<>>& words() const { return words_; }

 private:
  std::set<std::string, std::less<>> words_;
};

// Lowercases ASCII letters and splits on word boundaries. Bytes >= 0x80 are
// treated as word characters so multi-byte UTF-8 letters stay inside their
// token.
std::vector<std::string> tokenize_words(std::string_view text);

// Relative path of a generated image, e.g. "images/0123abcd.svg".
struct ImageRef {
  std::string path;

  bool operator==(const ImageRef&) const = default;
  auto operator<=>(const ImageRef&) const = default;
};

class ImageGenerator {
 public:
  virtual ~ImageGenerator() = default;
  // Must be deterministic in (prompt_text, seed).
  virtual ImageRef generate(std::string_view prompt_text,
                            std::uint64_t seed) = 0;
};

// Placeholder generator: an SVG with a solid pattern keyed by
// hash(prompt_text, seed) and the hash printed on it. When `output_dir` is
// set, files are written under output_dir/images/.
class StubImageGenerator : public ImageGenerator {
 public:
  StubImageGenerator() = default;
  explicit StubImageGenerator(std::filesystem::path output_dir)
      : output_dir_(std::move(output_dir)) {}

  ImageRef generate(std::string_view prompt_text, std::uint64_t seed) override;

  static std::string digest(std::string_view prompt_text, std::uint64_t seed);
  static std::string render_svg(std::string_view digest,
                                std::string_view prompt_text);

 private:
  std::filesystem::path output_dir_;
};

struct DataPoint {
  DataPointId id;
  Prompt prompt;
  ImageRef image_a;
  ImageRef image_b;
  bool is_gold = false;

  bool operator==(const DataPoint&) const = default;
};

struct GoldDataPoint {
  DataPointId id;
  Prompt prompt;
  Prompt distractor_prompt;
  ImageRef image_a;
  ImageRef image_b;
  Side correct_side = Side::A;

  bool operator==(const GoldDataPoint&) const = default;
};

struct TaskPool {
  std::vector<DataPoint> real;
  std::vector<GoldDataPoint> gold;
};

// Prompts whose lowercased tokens contain no blocklist entry, in input order.
std::vector<Prompt> filter_prompts(const std::vector<Prompt>& prompts,
                                   const Blocklist& blocklist);

DataPoint make_data_point(const Prompt& prompt, ImageGenerator& gen,
                          std::uint64_t seed);

// One image from `prompt`, one from `distractor`; the prompt image lands on
// a seeded side.
GoldDataPoint make_gold_point(const Prompt& prompt, const Prompt& distractor,
                              ImageGenerator& gen, std::uint64_t seed);

inline constexpr double kDefaultGoldFraction = 0.5;

TaskPool build_pool(const std::vector<Prompt>& prompts,
                    const Blocklist& blocklist, double gold_fraction_target,
                    ImageGenerator& gen, std::uint64_t seed);

// Synthetic prompts "p000000".."pNNNNNN" with distinct texts; used by the
// simulator and tests.
std::vector<Prompt> synthetic_prompts(std::size_t count, std::uint64_t seed);

// JSON layouts.
void to_json(nlohmann::json& j, const Prompt& p);
void from_json(const nlohmann::json& j, Prompt& p);
void to_json(nlohmann::json& j, const DataPoint& p);
void from_json(const nlohmann::json& j, DataPoint& p);
void to_json(nlohmann::json& j, const GoldDataPoint& p);
void from_json(const nlohmann::json& j, GoldDataPoint& p);

// Newline-delimited {"id","text"} objects. Rejects duplicate ids and blank
// texts.
std::vector<Prompt> read_prompts_jsonl(std::istream& in);
std::vector<Prompt> load_prompts(const std::filesystem::path& path);

// Writes dir/real.jsonl and dir/gold.jsonl.
void save_pool(const TaskPool& pool, const std::filesystem::path& dir);
TaskPool load_pool(const std::filesystem::path& dir);

}  // namespace labelforge

#include "labelforge/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <unordered_set>

#include "labelforge/error.hpp"
#include "labelforge/hash.hpp"

namespace labelforge {

namespace {

std::string_view trim(std::string_view s) {
  auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

bool is_word_byte(unsigned char c) {
  return c >= 0x80 || std::isalnum(c) != 0 || c == '_';
}

std::string xml_escape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

ImageRef generate_or_throw(ImageGenerator& gen, const Prompt& prompt,
                           std::uint64_t seed) {
  try {
    return gen.generate(prompt.text, seed);
  } catch (const std::exception& e) {
    throw Error(ErrorCode::kTaskConstruction,
                "image generation failed for prompt " + prompt.id + ": " +
                    e.what());
  }
}

std::string pair_key(const Prompt& a, const Prompt& b) {
  return a.id + '\x1f' + b.id;
}

}  // namespace

void validate_prompt(const Prompt& prompt) {
  if (prompt.id.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "prompt id is empty");
  }
  if (trim(prompt.text).empty()) {
    throw Error(ErrorCode::kInvalidArgument,
                "prompt " + prompt.id + " has blank text");
  }
}

Blocklist::Blocklist(const std::vector<std::string>& words) {
  for (const auto& w : words) {
    auto t = trim(w);
    if (t.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "empty blocklist entry");
    }
    words_.insert(ascii_lower(t));
  }
}

Blocklist Blocklist::parse(std::istream& in) {
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    words.emplace_back(t);
  }
  return Blocklist(words);
}

Blocklist Blocklist::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::kIo, "cannot open blocklist " + path.string());
  }
  return parse(in);
}

Blocklist Blocklist::builtin() {
  return Blocklist({"nsfw", "nude", "naked", "gore", "gory", "porn", "sexy",
                    "erotic", "blood", "bloody", "corpse", "suicide",
                    "drugs", "hentai", "lingerie", "topless"});
}

bool Blocklist::contains(std::string_view lowercase_token) const {
  return words_.find(lowercase_token) != words_.end();
}

std::vector<std::string> tokenize_words(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    auto c = static_cast<unsigned char>(ch);
    if (is_word_byte(c)) {
      current += static_cast<char>(std::tolower(c));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::string StubImageGenerator::digest(std::string_view prompt_text,
                                       std::uint64_t seed) {
  std::string material(prompt_text);
  material += '\x1f';
  material += std::to_string(seed);
  return sha256_hex(material).substr(0, 24);
}

std::string StubImageGenerator::render_svg(std::string_view digest,
                                           std::string_view prompt_text) {
  std::string bg = "#" + std::string(digest.substr(0, 6));
  std::string fg = "#" + std::string(digest.substr(6, 6));
  unsigned stripes = 2 + static_cast<unsigned>(std::stoul(
                             std::string(digest.substr(12, 2)), nullptr, 16) %
                         8);
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"512\" "
         "height=\"512\" viewBox=\"0 0 512 512\">\n";
  svg << "<rect width=\"512\" height=\"512\" fill=\"" << bg << "\"/>\n";
  for (unsigned i = 0; i < stripes; i += 2) {
    unsigned h = 512 / stripes;
    svg << "<rect y=\"" << i * h << "\" width=\"512\" height=\"" << h
        << "\" fill=\"" << fg << "\" opacity=\"0.35\"/>\n";
  }
  std::string caption(prompt_text.substr(0, 48));
  svg << "<text x=\"16\" y=\"480\" font-family=\"monospace\" font-size=\"20\" "
         "fill=\"#ffffff\">"
      << xml_escape(digest) << "</text>\n";
  svg << "<text x=\"16\" y=\"40\" font-family=\"sans-serif\" font-size=\"18\" "
         "fill=\"#ffffff\">"
      << xml_escape(caption) << "</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

ImageRef StubImageGenerator::generate(std::string_view prompt_text,
                                      std::uint64_t seed) {
  std::string d = digest(prompt_text, seed);
  ImageRef ref{"images/" + d + ".svg"};
  if (!output_dir_.empty()) {
    auto path = output_dir_ / ref.path;
    if (!std::filesystem::exists(path)) {
      std::filesystem::create_directories(path.parent_path());
      std::ofstream out(path, std::ios::binary);
      out << render_svg(d, prompt_text);
      if (!out) throw std::runtime_error("cannot write " + path.string());
    }
  }
  return ref;
}

std::vector<Prompt> filter_prompts(const std::vector<Prompt>& prompts,
                                   const Blocklist& blocklist) {
  std::vector<Prompt> kept;
  for (const auto& p : prompts) {
    auto tokens = tokenize_words(p.text);
    bool blocked = std::any_of(tokens.begin(), tokens.end(),
                               [&](const auto& t) {
                                 return blocklist.contains(t);
                               });
    if (!blocked) kept.push_back(p);
  }
  return kept;
}

DataPoint make_data_point(const Prompt& prompt, ImageGenerator& gen,
                          std::uint64_t seed) {
  validate_prompt(prompt);
  DataPoint dp;
  dp.id = "dp-" + hex64(seeded_hash(prompt.id, seed));
  dp.prompt = prompt;
  dp.image_a = generate_or_throw(gen, prompt, derive_seed(seed, 0));
  dp.image_b = generate_or_throw(gen, prompt, derive_seed(seed, 1));
  dp.is_gold = false;
  if (dp.image_a == dp.image_b) {
    throw Error(ErrorCode::kTaskConstruction,
                "generator returned identical images for prompt " + prompt.id);
  }
  return dp;
}

GoldDataPoint make_gold_point(const Prompt& prompt, const Prompt& distractor,
                              ImageGenerator& gen, std::uint64_t seed) {
  validate_prompt(prompt);
  validate_prompt(distractor);
  if (prompt.id == distractor.id) {
    throw Error(ErrorCode::kSamePrompt,
                "gold point needs two different prompts, got " + prompt.id);
  }
  std::uint64_t key = seeded_hash(pair_key(prompt, distractor), seed);
  std::mt19937_64 rng(key);

  GoldDataPoint gp;
  gp.id = "gp-" + hex64(key);
  gp.prompt = prompt;
  gp.distractor_prompt = distractor;
  gp.correct_side = (rng() & 1) ? Side::B : Side::A;
  ImageRef genuine = generate_or_throw(gen, prompt, derive_seed(seed, 2));
  ImageRef decoy = generate_or_throw(gen, distractor, derive_seed(seed, 3));
  if (genuine == decoy) {
    throw Error(ErrorCode::kTaskConstruction,
                "generator returned identical images for prompts " +
                    prompt.id + " and " + distractor.id);
  }
  if (gp.correct_side == Side::A) {
    gp.image_a = genuine;
    gp.image_b = decoy;
  } else {
    gp.image_a = decoy;
    gp.image_b = genuine;
  }
  return gp;
}

TaskPool build_pool(const std::vector<Prompt>& prompts,
                    const Blocklist& blocklist, double gold_fraction_target,
                    ImageGenerator& gen, std::uint64_t seed) {
  if (!(gold_fraction_target > 0.0 && gold_fraction_target < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "gold_fraction_target must be in (0, 1)");
  }
  auto survivors = filter_prompts(prompts, blocklist);
  if (survivors.size() < 2) {
    throw Error(ErrorCode::kPoolTooSmall,
                "need at least 2 prompts after filtering, have " +
                    std::to_string(survivors.size()));
  }
  const std::size_t n = survivors.size();

  TaskPool pool;
  pool.real.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    pool.real.push_back(make_data_point(survivors[i], gen, derive_seed(seed, i)));
  }

  // Tolerate representation error such as 0.3 * 10 = 3.0000000000000004.
  auto gold_count = static_cast<std::size_t>(
      std::ceil(gold_fraction_target * static_cast<double>(n) - 1e-9));
  gold_count = std::clamp<std::size_t>(gold_count, 1, n);

  std::mt19937_64 rng(derive_seed(seed, 0x601dULL << 32));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);

  pool.gold.reserve(gold_count);
  for (std::size_t k = 0; k < gold_count; ++k) {
    std::size_t i = order[k];
    std::uniform_int_distribution<std::size_t> pick(0, n - 2);
    std::size_t j = pick(rng);
    if (j >= i) ++j;
    pool.gold.push_back(make_gold_point(survivors[i], survivors[j], gen,
                                        derive_seed(seed ^ 0xd15ULL, k)));
  }
  return pool;
}

std::vector<Prompt> synthetic_prompts(std::size_t count, std::uint64_t seed) {
  static const char* kSubjects[] = {
      "a lighthouse", "an old soldier", "a red fox", "a steam train",
      "a cathedral", "a cavalry officer", "an astronaut", "a market stall",
      "a sailing ship", "a tabby cat", "a windmill", "a general on horseback",
      "a paper lantern", "a castle gate", "a violin", "a snowy owl"};
  static const char* kPlaces[] = {
      "on a hill at dawn", "inside a library", "beside a frozen river",
      "under a stormy sky", "in a busy harbor", "on a desert road",
      "in a pine forest", "on a city rooftop"};
  static const char* kStyles[] = {
      "oil painting", "crayon drawing", "movie poster", "watercolor",
      "pixel art", "woodcut print", "photograph", "cave drawing"};
  std::mt19937_64 rng(seed);
  std::vector<Prompt> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::string text = std::string(kSubjects[rng() % std::size(kSubjects)]) +
                       " " + kPlaces[rng() % std::size(kPlaces)] +
                       " in the style of a " +
                       kStyles[rng() % std::size(kStyles)] + ", variant " +
                       std::to_string(i);
    char id[32];
    std::snprintf(id, sizeof(id), "p%06zu", i);
    out.push_back({id, std::move(text)});
  }
  return out;
}

void to_json(nlohmann::json& j, const Prompt& p) {
  j = nlohmann::json{{"id", p.id}, {"text", p.text}};
}

void from_json(const nlohmann::json& j, Prompt& p) {
  j.at("id").get_to(p.id);
  j.at("text").get_to(p.text);
}

void to_json(nlohmann::json& j, const DataPoint& p) {
  j = nlohmann::json{{"id", p.id},
                     {"prompt", p.prompt},
                     {"image_a", p.image_a.path},
                     {"image_b", p.image_b.path},
                     {"is_gold", p.is_gold}};
}

void from_json(const nlohmann::json& j, DataPoint& p) {
  j.at("id").get_to(p.id);
  j.at("prompt").get_to(p.prompt);
  j.at("image_a").get_to(p.image_a.path);
  j.at("image_b").get_to(p.image_b.path);
  p.is_gold = j.value("is_gold", false);
}

void to_json(nlohmann::json& j, const GoldDataPoint& p) {
  j = nlohmann::json{{"id", p.id},
                     {"prompt", p.prompt},
                     {"distractor_prompt", p.distractor_prompt},
                     {"image_a", p.image_a.path},
                     {"image_b", p.image_b.path},
                     {"correct_side", p.correct_side}};
}

void from_json(const nlohmann::json& j, GoldDataPoint& p) {
  j.at("id").get_to(p.id);
  j.at("prompt").get_to(p.prompt);
  j.at("distractor_prompt").get_to(p.distractor_prompt);
  j.at("image_a").get_to(p.image_a.path);
  j.at("image_b").get_to(p.image_b.path);
  j.at("correct_side").get_to(p.correct_side);
}

std::vector<Prompt> read_prompts_jsonl(std::istream& in) {
  std::vector<Prompt> prompts;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    Prompt p;
    try {
      p = nlohmann::json::parse(line).get<Prompt>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kInvalidArgument,
                  "prompt line " + std::to_string(lineno) + ": " + e.what());
    }
    validate_prompt(p);
    if (!seen.insert(p.id).second) {
      throw Error(ErrorCode::kInvalidArgument, "duplicate prompt id " + p.id);
    }
    prompts.push_back(std::move(p));
  }
  return prompts;
}

std::vector<Prompt> load_prompts(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  return read_prompts_jsonl(in);
}

namespace {

template <typename T>
void write_jsonl(const std::vector<T>& items, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  for (const auto& item : items) out << nlohmann::json(item).dump() << '\n';
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path.string());
}

template <typename T>
std::vector<T> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<T> items;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    items.push_back(nlohmann::json::parse(line).get<T>());
  }
  return items;
}

}  // namespace

void save_pool(const TaskPool& pool, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_jsonl(pool.real, dir / "real.jsonl");
  write_jsonl(pool.gold, dir / "gold.jsonl");
}

TaskPool load_pool(const std::filesystem::path& dir) {
  TaskPool pool;
  pool.real = read_jsonl<DataPoint>(dir / "real.jsonl");
  pool.gold = read_jsonl<GoldDataPoint>(dir / "gold.jsonl");
  return pool;
}

}  // namespace labelforge

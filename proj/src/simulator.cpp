#include "labelforge/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "labelforge/error.hpp"
#include "labelforge/hash.hpp"

namespace labelforge {

namespace {

constexpr std::int64_t kSimEpochMs = 1'700'000'000'000;

void config_fail(const std::string& what) {
  throw Error(ErrorCode::kConfigInvalid, "population: " + what);
}

bool positive(double x) { return std::isfinite(x) && x > 0.0; }

double sample_beta(std::mt19937_64& rng, const BetaParams& p) {
  std::gamma_distribution<double> ga(p.alpha, 1.0);
  std::gamma_distribution<double> gb(p.beta, 1.0);
  double x = ga(rng);
  double y = gb(rng);
  return x / (x + y);
}

bool coin(std::mt19937_64& rng, double p) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p;
}

TrustPolicy policy_overrides(const TrustPolicy& base, const nlohmann::json& j) {
  nlohmann::json merged = to_json(base);
  merged.update(j);
  return trust_policy_from_json(merged);
}

}  // namespace

void PopulationConfig::validate() const {
  if (n_annotators == 0) config_fail("n_annotators must be positive");
  if (!(diligent_fraction >= 0.0 && diligent_fraction <= 1.0)) {
    config_fail("diligent_fraction must be in [0, 1]");
  }
  if (!positive(diligent_ability.alpha) || !positive(diligent_ability.beta)) {
    config_fail("diligent_ability parameters must be positive");
  }
  if (!(clicker_ability >= 0.0 && clicker_ability <= 1.0)) {
    config_fail("clicker_ability must be in [0, 1]");
  }
  if (!std::isfinite(engagement.mu) || !positive(engagement.sigma)) {
    config_fail("engagement needs finite mu and positive sigma");
  }
}

SimConfig sim_config_from_json(const nlohmann::json& j) {
  SimConfig c;
  if (!j.is_object()) {
    throw Error(ErrorCode::kConfigInvalid, "simulation config must be an object");
  }
  try {
    if (auto it = j.find("population"); it != j.end()) {
      auto& p = c.population;
      p.n_annotators = it->value("n_annotators", p.n_annotators);
      p.diligent_fraction = it->value("diligent_fraction", p.diligent_fraction);
      if (auto a = it->find("diligent_ability"); a != it->end()) {
        p.diligent_ability.alpha = a->value("alpha", p.diligent_ability.alpha);
        p.diligent_ability.beta = a->value("beta", p.diligent_ability.beta);
      }
      p.clicker_ability = it->value("clicker_ability", p.clicker_ability);
      if (auto e = it->find("engagement"); e != it->end()) {
        p.engagement.mu = e->value("mu", p.engagement.mu);
        p.engagement.sigma = e->value("sigma", p.engagement.sigma);
      }
      p.max_batches_per_annotator =
          it->value("max_batches_per_annotator", p.max_batches_per_annotator);
      p.seed = it->value("seed", p.seed);
    }
    c.policy = trust_policy_from_json(j.value("trust_policy", nlohmann::json()));
    if (auto it = j.find("cost_model"); it != j.end()) {
      c.cost = cost_model_from_json(*it);
    }
    c.assignment.max_labels_per_point =
        j.value("max_labels_per_point", c.assignment.max_labels_per_point);
    if (auto it = j.find("pool"); it != j.end()) {
      c.pool.synthetic_prompts =
          it->value("synthetic_prompts", c.pool.synthetic_prompts);
      c.pool.gold_fraction = it->value("gold_fraction", c.pool.gold_fraction);
      c.pool.seed = it->value("seed", c.pool.seed);
      c.pool.dir = it->value("dir", std::string());
    }
    c.top_ks = j.value("top_k", c.top_ks);
    if (auto it = j.find("sweep"); it != j.end()) {
      if (!it->is_array()) {
        throw Error(ErrorCode::kConfigInvalid, "sweep must be an array");
      }
      for (const auto& cell : *it) c.sweep.push_back(policy_overrides(c.policy, cell));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfigInvalid, e.what());
  }
  c.population.validate();
  return c;
}

nlohmann::json to_json(const SimConfig& c) {
  const auto& p = c.population;
  nlohmann::json sweep = nlohmann::json::array();
  for (const auto& s : c.sweep) sweep.push_back(to_json(s));
  return {{"population",
           {{"n_annotators", p.n_annotators},
            {"diligent_fraction", p.diligent_fraction},
            {"diligent_ability",
             {{"alpha", p.diligent_ability.alpha},
              {"beta", p.diligent_ability.beta}}},
            {"clicker_ability", p.clicker_ability},
            {"engagement",
             {{"mu", p.engagement.mu}, {"sigma", p.engagement.sigma}}},
            {"max_batches_per_annotator", p.max_batches_per_annotator},
            {"seed", p.seed}}},
          {"trust_policy", to_json(c.policy)},
          {"cost_model",
           {{"revenue_per_reward_ad", c.cost.revenue_per_reward_ad.to_string()},
            {"batches_per_ad_slot", c.cost.batches_per_ad_slot}}},
          {"max_labels_per_point", c.assignment.max_labels_per_point},
          {"pool",
           {{"synthetic_prompts", c.pool.synthetic_prompts},
            {"gold_fraction", c.pool.gold_fraction},
            {"seed", c.pool.seed}}},
          {"top_k", c.top_ks},
          {"sweep", std::move(sweep)}};
}

TaskPool make_sim_pool(const SimPoolConfig& config) {
  if (!config.dir.empty()) return load_pool(config.dir);
  StubImageGenerator gen;
  return build_pool(synthetic_prompts(config.synthetic_prompts, config.seed),
                    Blocklist{}, config.gold_fraction, gen, config.seed);
}

Side hidden_preference(const DataPointId& id, std::uint64_t seed) {
  return (seeded_hash(id, seed ^ 0x7275746855ULL) & 1) ? Side::B : Side::A;
}

nlohmann::json to_json(const SimReport& r) {
  nlohmann::json top = nlohmann::json::object();
  for (const auto& [k, v] : r.top_k_share) top[std::to_string(k)] = v;
  nlohmann::json table = nlohmann::json::array();
  for (const auto& a : r.annotators) {
    table.push_back({{"annotator_id", a.annotator_id},
                     {"ability_class", a.ability_class},
                     {"ability", a.ability},
                     {"intended_batches", a.intended_batches},
                     {"batches", a.batches},
                     {"labels", a.labels},
                     {"gold_answered", a.gold_answered},
                     {"gold_correct", a.gold_correct},
                     {"banned", a.banned},
                     {"banned_after_batches", a.banned_after_batches}});
  }
  return {{"total_labels", r.total_labels},
          {"gold_labels", r.gold_labels},
          {"gold_fraction", r.gold_fraction},
          {"banned_count", r.banned_count},
          {"mean_annotator_accuracy", r.mean_annotator_accuracy},
          {"label_weighted_accuracy", r.label_weighted_accuracy},
          {"top_k_share", std::move(top)},
          {"total_batches", r.total_batches},
          {"estimated_cost", r.estimated_cost.to_string()},
          {"exported_labels", r.exported_labels},
          {"ban_excluded_labels", r.ban_excluded_labels},
          {"unique_points", r.unique_points},
          {"multi_labeled_points", r.multi_labeled_points},
          {"mean_labels_per_annotator", r.mean_labels_per_annotator},
          {"stddev_labels_per_annotator", r.stddev_labels_per_annotator},
          {"label_fidelity", r.label_fidelity},
          {"truncated", r.truncated},
          {"annotators", std::move(table)}};
}

SimRun run_sim(const TaskPool& pool, const PopulationConfig& population,
               const TrustPolicy& policy, const CostModel& cost,
               const AssignmentConfig& assignment,
               const std::vector<std::size_t>& top_ks) {
  population.validate();
  policy.validate();
  cost.validate();

  LabelingEngine engine(pool, policy, assignment);
  const std::uint64_t truth_seed = population.seed;

  struct SimAnnotator {
    AnnotatorSummary summary;
    std::uint64_t stream_seed = 0;
  };
  std::vector<SimAnnotator> crowd(population.n_annotators);
  Timestamp now = from_unix_ms(kSimEpochMs);
  for (std::size_t i = 0; i < crowd.size(); ++i) {
    auto& a = crowd[i];
    a.stream_seed = derive_seed(population.seed, i);
    std::mt19937_64 rng(a.stream_seed);
    char id[32];
    std::snprintf(id, sizeof(id), "sim-%05zu", i);
    a.summary.annotator_id = id;
    bool diligent = coin(rng, population.diligent_fraction);
    a.summary.ability_class = diligent ? "diligent" : "clicker";
    a.summary.ability = diligent ? sample_beta(rng, population.diligent_ability)
                                 : population.clicker_ability;
    std::lognormal_distribution<double> engagement(population.engagement.mu,
                                                   population.engagement.sigma);
    auto intended = static_cast<std::uint64_t>(
        std::max<long long>(1, std::llround(engagement(rng))));
    if (population.max_batches_per_annotator > 0) {
      intended = std::min(intended, population.max_batches_per_annotator);
    }
    a.summary.intended_batches = intended;
    engine.register_annotator(a.summary.annotator_id, now);
    engine.record_consent(a.summary.annotator_id);
  }

  SimRun run;
  // Round-robin: every active annotator does one batch per round.
  std::vector<std::size_t> active(crowd.size());
  for (std::size_t i = 0; i < active.size(); ++i) active[i] = i;
  while (!active.empty()) {
    std::vector<std::size_t> still_active;
    for (std::size_t idx : active) {
      auto& a = crowd[idx];
      auto& s = a.summary;
      now += std::chrono::seconds(1);
      const std::uint64_t b = s.batches;
      const BatchLease* lease = nullptr;
      try {
        lease = &engine.next_batch(s.annotator_id, now,
                                   derive_seed(a.stream_seed, 2 * b + 1));
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kPoolExhausted) throw;
        run.report.truncated = true;
        continue;
      }
      std::mt19937_64 rng(derive_seed(a.stream_seed, 2 * b + 2));
      Choices choices;
      SimBatchRecord record;
      record.annotator_id = s.annotator_id;
      record.batch_id = lease->batch_id;
      for (const auto& item : lease->items) {
        SimItemRecord r;
        r.data_point_id = item.data_point_id;
        r.is_gold = item.is_gold;
        bool faithful = coin(rng, s.ability);
        if (item.is_gold) {
          r.choice = faithful ? *item.correct_side : other(*item.correct_side);
          r.correct = faithful;
        } else {
          r.truth = hidden_preference(item.data_point_id, truth_seed);
          r.choice = faithful ? r.truth : other(r.truth);
        }
        choices[item.task_id] = item.to_presented(r.choice);
        record.items.push_back(std::move(r));
      }
      auto outcome =
          engine.submit_batch(lease->batch_id, s.annotator_id, choices, now);
      record.banned_after = outcome.banned_after;
      run.trace.push_back(std::move(record));
      ++s.batches;
      if (outcome.banned_after) {
        s.banned = true;
        s.banned_after_batches = s.batches;
      } else if (s.batches < s.intended_batches) {
        still_active.push_back(idx);
      }
    }
    active = std::move(still_active);
  }

  auto& r = run.report;
  run.dataset = aggregate(engine.pool(), engine.annotators());
  auto stats = compute_stats(engine.pool(), engine.annotators(), run.dataset);
  r.total_labels = stats.total_labels_incl_gold;
  r.gold_labels = stats.gold_labels;
  r.gold_fraction = r.total_labels == 0
                        ? 0.0
                        : static_cast<double>(r.gold_labels) /
                              static_cast<double>(r.total_labels);
  r.mean_annotator_accuracy = stats.mean_annotator_accuracy.value_or(0.0);
  r.label_weighted_accuracy = stats.label_weighted_accuracy.value_or(0.0);
  for (auto k : top_ks) r.top_k_share[k] = stats.top_k_share(k);
  r.exported_labels = stats.exported_labels;
  r.ban_excluded_labels = stats.ban_excluded_labels;
  r.unique_points = stats.unique_points;
  r.multi_labeled_points = stats.multi_labeled_points;
  r.mean_labels_per_annotator = stats.mean_labels_per_annotator;
  r.stddev_labels_per_annotator = stats.stddev_labels_per_annotator;

  std::uint64_t faithful = 0;
  for (const auto& p : run.dataset) {
    Side truth = hidden_preference(p.data_point_id, truth_seed);
    for (const auto& l : p.labels) faithful += l.choice == truth ? 1 : 0;
  }
  r.label_fidelity = r.exported_labels == 0
                         ? 0.0
                         : static_cast<double>(faithful) /
                               static_cast<double>(r.exported_labels);

  for (auto& a : crowd) {
    auto& s = a.summary;
    const auto* rec = engine.find_annotator(s.annotator_id);
    s.gold_answered = rec->gold_answered;
    s.gold_correct = rec->gold_correct;
    s.labels = rec->labeled_ids.size();
    r.total_batches += s.batches;
    r.banned_count += s.banned ? 1 : 0;
    r.annotators.push_back(s);
  }
  r.estimated_cost = estimate_cost(r.total_batches, cost);
  return run;
}

std::vector<SweepRow> sweep(const TaskPool& pool,
                            const std::vector<TrustPolicy>& grid,
                            const PopulationConfig& population,
                            const CostModel& cost,
                            const AssignmentConfig& assignment,
                            const std::vector<std::size_t>& top_ks) {
  if (grid.empty()) {
    throw Error(ErrorCode::kConfigInvalid, "sweep grid is empty");
  }
  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    PopulationConfig cell = population;
    cell.seed = population.seed + i;
    rows.push_back(
        {i, grid[i],
         run_sim(pool, cell, grid[i], cost, assignment, top_ks).report});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    return a.report.label_weighted_accuracy > b.report.label_weighted_accuracy;
  });
  return rows;
}

std::string format_sweep_table(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line),
                "%-5s %8s %8s %6s %6s %9s %9s %9s %7s %8s %10s\n", "cell",
                "ban_thr", "high_thr", "q_high", "q_mid", "lw_acc", "mean_acc",
                "gold_frac", "banned", "labels", "cost");
  out << line;
  for (const auto& row : rows) {
    const auto& p = row.policy;
    const auto& r = row.report;
    std::snprintf(line, sizeof(line),
                  "%-5zu %8.3f %8.3f %6u %6u %9.4f %9.4f %9.4f %7llu %8llu %10s\n",
                  row.cell, p.ban_threshold, p.high_trust_threshold,
                  p.gold_quota_high, p.gold_quota_mid,
                  r.label_weighted_accuracy, r.mean_annotator_accuracy,
                  r.gold_fraction,
                  static_cast<unsigned long long>(r.banned_count),
                  static_cast<unsigned long long>(r.total_labels),
                  r.estimated_cost.to_string().c_str());
    out << line;
  }
  return out.str();
}

}  // namespace labelforge

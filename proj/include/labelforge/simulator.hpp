#pragma once

// Synthetic annotator populations driven through the labeling engine
// in-process. Each annotator has one ability p: gold items are answered
// correctly with probability p, and real items get the annotator's hidden
// "true" preference with probability p.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "labelforge/aggregate.hpp"
#include "labelforge/assignment.hpp"
#include "labelforge/corpus.hpp"
#include "labelforge/quality.hpp"

namespace labelforge {

struct BetaParams {
  double alpha = 1.0;
  double beta = 1.0;
};

struct LognormalParams {
  double mu = 0.0;
  double sigma = 1.0;
};

struct PopulationConfig {
  std::size_t n_annotators = 188;
  double diligent_fraction = 0.8;
  BetaParams diligent_ability{9.0, 2.0};
  double clicker_ability = 0.5;
  // Intended number of batches per annotator.
  LognormalParams engagement{2.5, 1.25};
  // 0 means uncapped.
  std::uint64_t max_batches_per_annotator = 0;
  std::uint64_t seed = 2024;

  // Throws kConfigInvalid.
  void validate() const;
};

struct SimPoolConfig {
  std::size_t synthetic_prompts = 9000;
  double gold_fraction = kDefaultGoldFraction;
  std::uint64_t seed = 1;
  std::filesystem::path dir;  // when set, the pool is loaded from here
};

struct SimConfig {
  PopulationConfig population;
  TrustPolicy policy;
  CostModel cost{Decimal4::from_units(25), 1};
  AssignmentConfig assignment;
  SimPoolConfig pool;
  std::vector<std::size_t> top_ks{1, 5, 16};
  // Optional policy grid for sweeps; each entry overrides `policy` fields.
  std::vector<TrustPolicy> sweep;
};

// Missing keys keep the defaults above, which are the calibrated defaults.
SimConfig sim_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SimConfig& config);

TaskPool make_sim_pool(const SimPoolConfig& config);

struct AnnotatorSummary {
  AnnotatorId annotator_id;
  std::string ability_class;  // "diligent" | "clicker"
  double ability = 0.0;
  std::uint64_t intended_batches = 0;
  std::uint64_t batches = 0;
  std::uint64_t labels = 0;
  std::uint64_t gold_answered = 0;
  std::uint64_t gold_correct = 0;
  bool banned = false;
  // Batches completed when the ban fired; 0 if never banned.
  std::uint64_t banned_after_batches = 0;
};

struct SimReport {
  std::uint64_t total_labels = 0;
  std::uint64_t gold_labels = 0;
  double gold_fraction = 0.0;
  std::uint64_t banned_count = 0;
  double mean_annotator_accuracy = 0.0;
  double label_weighted_accuracy = 0.0;
  std::map<std::size_t, double> top_k_share;
  std::uint64_t total_batches = 0;
  Decimal4 estimated_cost;
  std::uint64_t exported_labels = 0;
  std::uint64_t ban_excluded_labels = 0;
  std::uint64_t unique_points = 0;
  std::uint64_t multi_labeled_points = 0;
  double mean_labels_per_annotator = 0.0;
  double stddev_labels_per_annotator = 0.0;
  // Share of exported labels that match the hidden true preference.
  double label_fidelity = 0.0;
  // Set when some annotator stopped early because the pool ran dry.
  bool truncated = false;
  std::vector<AnnotatorSummary> annotators;
};

nlohmann::json to_json(const SimReport& report);

// One submitted batch, as the simulated annotator saw it.
struct SimItemRecord {
  DataPointId data_point_id;
  bool is_gold = false;
  Side choice = Side::A;  // canonical
  bool correct = false;   // gold items only
  Side truth = Side::A;   // hidden preference, real items only
};

struct SimBatchRecord {
  AnnotatorId annotator_id;
  BatchId batch_id;
  std::vector<SimItemRecord> items;
  bool banned_after = false;
};

struct SimRun {
  SimReport report;
  std::vector<SimBatchRecord> trace;
  std::vector<AggregatedPoint> dataset;
};

// The hidden preference of the simulated population for a real point.
Side hidden_preference(const DataPointId& id, std::uint64_t seed);

SimRun run_sim(const TaskPool& pool, const PopulationConfig& population,
               const TrustPolicy& policy, const CostModel& cost,
               const AssignmentConfig& assignment = {},
               const std::vector<std::size_t>& top_ks = {1, 5, 16});

struct SweepRow {
  std::size_t cell = 0;
  TrustPolicy policy;
  SimReport report;
};

// One run per grid cell with seed population.seed + cell; rows sorted by
// label_weighted_accuracy, highest first. Throws kConfigInvalid on an empty
// grid.
std::vector<SweepRow> sweep(const TaskPool& pool,
                            const std::vector<TrustPolicy>& grid,
                            const PopulationConfig& population,
                            const CostModel& cost,
                            const AssignmentConfig& assignment = {},
                            const std::vector<std::size_t>& top_ks = {1, 5, 16});

std::string format_sweep_table(const std::vector<SweepRow>& rows);

}  // namespace labelforge

#pragma once

// Per-point aggregation of labels, dataset statistics, the opportunity-cost
// estimate, and the exported preference dataset.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "labelforge/assignment.hpp"
#include "labelforge/common.hpp"
#include "labelforge/quality.hpp"

namespace labelforge {

struct AggregatedLabel {
  AnnotatorId annotator_id;
  Side choice = Side::A;
  double annotator_gold_accuracy = 0.0;

  bool operator==(const AggregatedLabel&) const = default;
};

struct AggregatedPoint {
  DataPointId data_point_id;
  std::string prompt_text;
  std::string image_a;
  std::string image_b;
  std::vector<AggregatedLabel> labels;
  std::size_t num_labels = 0;

  bool operator==(const AggregatedPoint&) const = default;
};

struct AggregateOptions {
  bool exclude_banned = true;
};

using AnnotatorTable = std::map<AnnotatorId, AnnotatorRecord>;

// Real points with at least one surviving label, sorted by data_point_id.
// Gold answers never appear. Accuracies are taken at call time.
std::vector<AggregatedPoint> aggregate(const PoolState& pool,
                                       const AnnotatorTable& annotators,
                                       AggregateOptions options = {});

// Mean labeler accuracy over label instances. Throws kNoLabels.
double label_weighted_accuracy(const std::vector<AggregatedPoint>& points);

struct DatasetStats {
  std::uint64_t total_labels_incl_gold = 0;
  std::uint64_t gold_labels = 0;
  std::uint64_t exported_labels = 0;
  std::uint64_t ban_excluded_labels = 0;
  std::uint64_t unique_points = 0;
  std::uint64_t multi_labeled_points = 0;
  std::uint64_t annotator_count = 0;
  double mean_labels_per_annotator = 0.0;
  double stddev_labels_per_annotator = 0.0;
  std::optional<double> mean_annotator_accuracy;
  std::optional<double> label_weighted_accuracy;
  // Labels (gold included) per annotator, most prolific first.
  std::vector<std::uint64_t> labels_per_annotator_desc;

  // Share of all labels contributed by the k most prolific annotators.
  double top_k_share(std::size_t k) const;
};

// Annotators are counted when they submitted at least one label; the
// standard deviation is the population one.
DatasetStats compute_stats(const PoolState& pool,
                           const AnnotatorTable& annotators,
                           const std::vector<AggregatedPoint>& points);

nlohmann::json to_json(const DatasetStats& stats,
                       const std::vector<std::size_t>& top_ks = {1, 5, 16});

// Fixed-point decimal with four fractional digits.
class Decimal4 {
 public:
  constexpr Decimal4() = default;
  static constexpr Decimal4 from_units(std::int64_t ten_thousandths) {
    Decimal4 d;
    d.units_ = ten_thousandths;
    return d;
  }
  // Rounds half away from zero to the nearest 0.0001.
  static Decimal4 from_double(double value);
  // Parses "12", "0.0025", "-3.5". More than four fractional digits is an
  // error.
  static Decimal4 parse(std::string_view text);

  std::int64_t units() const { return units_; }
  double to_double() const { return static_cast<double>(units_) / 10000.0; }
  std::string to_string() const;

  Decimal4 operator+(Decimal4 o) const { return from_units(units_ + o.units_); }
  auto operator<=>(const Decimal4&) const = default;

 private:
  std::int64_t units_ = 0;
};

struct CostModel {
  Decimal4 revenue_per_reward_ad;
  std::uint64_t batches_per_ad_slot = 1;

  void validate() const;
};

CostModel cost_model_from_json(const nlohmann::json& j);

// (batches / batches_per_ad_slot) * revenue, rounded to 4 places.
Decimal4 estimate_cost(std::uint64_t batches_served, const CostModel& model);

void to_json(nlohmann::json& j, const AggregatedPoint& p);
void from_json(const nlohmann::json& j, AggregatedPoint& p);

// One JSON object per line, LF-terminated, sorted by data_point_id.
// Throws kInvalidArgument on empty input and kIo on stream failure.
std::size_t export_dataset(const std::vector<AggregatedPoint>& points,
                           std::ostream& out);
std::vector<AggregatedPoint> read_dataset(std::istream& in);

}  // namespace labelforge

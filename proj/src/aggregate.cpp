#include "labelforge/aggregate.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>

#include "labelforge/error.hpp"

namespace labelforge {

std::vector<AggregatedPoint> aggregate(const PoolState& pool,
                                       const AnnotatorTable& annotators,
                                       AggregateOptions options) {
  std::map<DataPointId, AggregatedPoint> by_id;
  for (const auto& label : pool.labels()) {
    const auto* rp = pool.find_real(label.data_point_id);
    if (!rp) continue;
    auto it = annotators.find(label.annotator_id);
    if (it == annotators.end()) continue;
    const auto& rec = it->second;
    if (options.exclude_banned && rec.banned) continue;

    auto& agg = by_id[label.data_point_id];
    if (agg.data_point_id.empty()) {
      agg.data_point_id = rp->point.id;
      agg.prompt_text = rp->point.prompt.text;
      agg.image_a = rp->point.image_a.path;
      agg.image_b = rp->point.image_b.path;
    }
    // Labelers always pass screening first, so accuracy is defined; the
    // fallback mirrors the reward rule for an unrated annotator.
    agg.labels.push_back(
        {rec.annotator_id, label.choice, accuracy(rec).value_or(1.0)});
    agg.num_labels = agg.labels.size();
  }
  std::vector<AggregatedPoint> out;
  out.reserve(by_id.size());
  for (auto& [id, agg] : by_id) out.push_back(std::move(agg));
  return out;
}

double label_weighted_accuracy(const std::vector<AggregatedPoint>& points) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& p : points) {
    for (const auto& l : p.labels) {
      sum += l.annotator_gold_accuracy;
      ++n;
    }
  }
  if (n == 0) throw Error(ErrorCode::kNoLabels, "no labels to weight");
  return sum / static_cast<double>(n);
}

double DatasetStats::top_k_share(std::size_t k) const {
  std::uint64_t total = std::accumulate(labels_per_annotator_desc.begin(),
                                        labels_per_annotator_desc.end(),
                                        std::uint64_t{0});
  if (total == 0) return 0.0;
  k = std::min(k, labels_per_annotator_desc.size());
  std::uint64_t top = std::accumulate(labels_per_annotator_desc.begin(),
                                      labels_per_annotator_desc.begin() +
                                          static_cast<std::ptrdiff_t>(k),
                                      std::uint64_t{0});
  return static_cast<double>(top) / static_cast<double>(total);
}

DatasetStats compute_stats(const PoolState& pool,
                           const AnnotatorTable& annotators,
                           const std::vector<AggregatedPoint>& points) {
  DatasetStats s;
  s.gold_labels = pool.gold_answers().size();
  s.total_labels_incl_gold = pool.labels().size() + s.gold_labels;
  for (const auto& p : points) {
    s.exported_labels += p.num_labels;
    if (p.num_labels >= 2) ++s.multi_labeled_points;
  }
  s.unique_points = points.size();
  s.ban_excluded_labels =
      s.total_labels_incl_gold - s.gold_labels - s.exported_labels;

  std::map<AnnotatorId, std::uint64_t> per_annotator;
  for (const auto& l : pool.labels()) ++per_annotator[l.annotator_id];
  for (const auto& a : pool.gold_answers()) ++per_annotator[a.annotator_id];
  for (const auto& [id, n] : per_annotator) {
    s.labels_per_annotator_desc.push_back(n);
  }
  std::sort(s.labels_per_annotator_desc.rbegin(),
            s.labels_per_annotator_desc.rend());
  s.annotator_count = s.labels_per_annotator_desc.size();
  if (s.annotator_count > 0) {
    double n = static_cast<double>(s.annotator_count);
    double mean = static_cast<double>(s.total_labels_incl_gold) / n;
    double ss = 0.0;
    for (auto c : s.labels_per_annotator_desc) {
      double d = static_cast<double>(c) - mean;
      ss += d * d;
    }
    s.mean_labels_per_annotator = mean;
    s.stddev_labels_per_annotator = std::sqrt(ss / n);
  }

  double acc_sum = 0.0;
  std::size_t acc_n = 0;
  for (const auto& [id, rec] : annotators) {
    if (auto a = accuracy(rec)) {
      acc_sum += *a;
      ++acc_n;
    }
  }
  if (acc_n > 0) s.mean_annotator_accuracy = acc_sum / static_cast<double>(acc_n);
  if (s.exported_labels > 0) s.label_weighted_accuracy = label_weighted_accuracy(points);
  return s;
}

nlohmann::json to_json(const DatasetStats& s,
                       const std::vector<std::size_t>& top_ks) {
  nlohmann::json top = nlohmann::json::object();
  for (auto k : top_ks) top[std::to_string(k)] = s.top_k_share(k);
  auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  return {{"total_labels_incl_gold", s.total_labels_incl_gold},
          {"gold_labels", s.gold_labels},
          {"exported_labels", s.exported_labels},
          {"ban_excluded_labels", s.ban_excluded_labels},
          {"unique_points", s.unique_points},
          {"multi_labeled_points", s.multi_labeled_points},
          {"annotator_count", s.annotator_count},
          {"mean_labels_per_annotator", s.mean_labels_per_annotator},
          {"stddev_labels_per_annotator", s.stddev_labels_per_annotator},
          {"mean_annotator_accuracy", opt(s.mean_annotator_accuracy)},
          {"label_weighted_accuracy", opt(s.label_weighted_accuracy)},
          {"top_k_share", std::move(top)}};
}

Decimal4 Decimal4::from_double(double value) {
  return from_units(static_cast<std::int64_t>(std::llround(value * 10000.0)));
}

Decimal4 Decimal4::parse(std::string_view text) {
  auto fail = [&] {
    throw Error(ErrorCode::kInvalidArgument,
                "not a decimal: " + std::string(text));
  };
  if (text.empty()) fail();
  bool negative = false;
  if (text.front() == '-' || text.front() == '+') {
    negative = text.front() == '-';
    text.remove_prefix(1);
  }
  auto dot = text.find('.');
  auto whole = text.substr(0, dot);
  auto frac = dot == std::string_view::npos ? std::string_view{}
                                            : text.substr(dot + 1);
  if ((whole.empty() && frac.empty()) || frac.size() > 4 || whole.size() > 14) {
    fail();
  }
  std::int64_t units = 0;
  for (char c : whole) {
    if (c < '0' || c > '9') fail();
    units = units * 10 + (c - '0');
  }
  for (std::size_t i = 0; i < 4; ++i) {
    char c = i < frac.size() ? frac[i] : '0';
    if (c < '0' || c > '9') fail();
    units = units * 10 + (c - '0');
  }
  return from_units(negative ? -units : units);
}

std::string Decimal4::to_string() const {
  std::int64_t abs = units_ < 0 ? -units_ : units_;
  std::string frac = std::to_string(abs % 10000);
  frac.insert(0, 4 - frac.size(), '0');
  return (units_ < 0 ? "-" : "") + std::to_string(abs / 10000) + "." + frac;
}

void CostModel::validate() const {
  if (revenue_per_reward_ad.units() < 0) {
    throw Error(ErrorCode::kConfigInvalid, "revenue_per_reward_ad < 0");
  }
  if (batches_per_ad_slot == 0) {
    throw Error(ErrorCode::kConfigInvalid, "batches_per_ad_slot must be > 0");
  }
}

CostModel cost_model_from_json(const nlohmann::json& j) {
  CostModel m;
  if (!j.is_null() && !j.is_object()) {
    throw Error(ErrorCode::kConfigInvalid, "cost_model must be an object");
  }
  try {
    if (j.is_object()) {
      if (j.contains("revenue_per_reward_ad")) {
        const auto& r = j["revenue_per_reward_ad"];
        m.revenue_per_reward_ad = r.is_string()
                                      ? Decimal4::parse(r.get<std::string>())
                                      : Decimal4::from_double(r.get<double>());
      }
      m.batches_per_ad_slot =
          j.value("batches_per_ad_slot", m.batches_per_ad_slot);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfigInvalid, std::string("cost_model: ") + e.what());
  } catch (const Error& e) {
    throw Error(ErrorCode::kConfigInvalid, std::string("cost_model: ") + e.what());
  }
  m.validate();
  return m;
}

Decimal4 estimate_cost(std::uint64_t batches_served, const CostModel& model) {
  model.validate();
  // Exact in 128 bits, then rounded half up to the 4th place.
  __int128 num = static_cast<__int128>(batches_served) *
                 model.revenue_per_reward_ad.units();
  __int128 den = model.batches_per_ad_slot;
  __int128 q = (2 * num + den) / (2 * den);
  return Decimal4::from_units(static_cast<std::int64_t>(q));
}

void to_json(nlohmann::json& j, const AggregatedPoint& p) {
  nlohmann::json labels = nlohmann::json::array();
  for (const auto& l : p.labels) {
    labels.push_back({{"annotator_id", l.annotator_id},
                      {"choice", l.choice},
                      {"annotator_gold_accuracy", l.annotator_gold_accuracy}});
  }
  j = nlohmann::json{{"data_point_id", p.data_point_id},
                     {"prompt_text", p.prompt_text},
                     {"image_a", p.image_a},
                     {"image_b", p.image_b},
                     {"labels", std::move(labels)},
                     {"num_labels", p.num_labels}};
}

void from_json(const nlohmann::json& j, AggregatedPoint& p) {
  j.at("data_point_id").get_to(p.data_point_id);
  j.at("prompt_text").get_to(p.prompt_text);
  j.at("image_a").get_to(p.image_a);
  j.at("image_b").get_to(p.image_b);
  p.labels.clear();
  for (const auto& l : j.at("labels")) {
    p.labels.push_back({l.at("annotator_id").get<std::string>(),
                        l.at("choice").get<Side>(),
                        l.at("annotator_gold_accuracy").get<double>()});
  }
  j.at("num_labels").get_to(p.num_labels);
}

std::size_t export_dataset(const std::vector<AggregatedPoint>& points,
                           std::ostream& out) {
  if (points.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "nothing to export");
  }
  std::vector<const AggregatedPoint*> order;
  order.reserve(points.size());
  for (const auto& p : points) order.push_back(&p);
  std::sort(order.begin(), order.end(), [](const auto* a, const auto* b) {
    return a->data_point_id < b->data_point_id;
  });
  for (const auto* p : order) out << nlohmann::json(*p).dump() << '\n';
  out.flush();
  if (!out) throw Error(ErrorCode::kIo, "dataset export failed");
  return order.size();
}

std::vector<AggregatedPoint> read_dataset(std::istream& in) {
  std::vector<AggregatedPoint> points;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    points.push_back(nlohmann::json::parse(line).get<AggregatedPoint>());
  }
  return points;
}

}  // namespace labelforge

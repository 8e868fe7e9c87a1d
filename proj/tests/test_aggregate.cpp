#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <sstream>

#include "labelforge/aggregate.hpp"
#include "labelforge/error.hpp"
#include "support.hpp"

using namespace labelforge;
using namespace labelforge::testing;

namespace {

struct Fixture {
  nlohmann::json pool = {{"max_labels_per_point", 3},
                         {"real", nlohmann::json::array()},
                         {"gold", nlohmann::json::array()},
                         {"labels", nlohmann::json::array()},
                         {"gold_answers", nlohmann::json::array()}};
  AnnotatorTable annotators;

  void real(const std::string& id) {
    DataPoint dp{id, {id + "-p", "text of " + id}, {"images/" + id + "a.svg"},
                 {"images/" + id + "b.svg"}, false};
    pool["real"].push_back({{"point", dp},
                            {"label_count", 0},
                            {"reserved", 0},
                            {"labelers", nlohmann::json::array()}});
  }
  void gold(const std::string& id) {
    GoldDataPoint gp{id, {id + "-p", "x"}, {id + "-d", "y"},
                     {"images/" + id + "a.svg"}, {"images/" + id + "b.svg"},
                     Side::A};
    pool["gold"].push_back(gp);
  }
  void annotator(const std::string& id, std::uint64_t correct,
                 std::uint64_t answered, bool banned = false) {
    AnnotatorRecord r;
    r.annotator_id = id;
    r.gold_correct = correct;
    r.gold_answered = answered;
    r.banned = banned;
    annotators[id] = r;
  }
  void label(const std::string& dp, const std::string& ann, Side s) {
    pool["labels"].push_back(Label{dp, ann, s, t0()});
    for (auto& r : pool["real"]) {
      if (r["point"]["id"] == dp) {
        r["label_count"] = r["label_count"].get<int>() + 1;
        r["labelers"].push_back(ann);
      }
    }
  }
  void gold_answer(const std::string& gp, const std::string& ann, bool ok) {
    pool["gold_answers"].push_back({{"data_point_id", gp},
                                    {"annotator_id", ann},
                                    {"choice", ok ? "A" : "B"},
                                    {"correct", ok},
                                    {"submitted_at", 0}});
  }
  PoolState state() const { return pool_state_from_json(pool); }
};

AggregatedPoint point_with(std::vector<double> accs) {
  AggregatedPoint p;
  p.data_point_id = "dp";
  for (std::size_t i = 0; i < accs.size(); ++i) {
    p.labels.push_back({"a" + std::to_string(i), Side::A, accs[i]});
  }
  p.num_labels = p.labels.size();
  return p;
}

}  // namespace

TEST_CASE("gold answers never reach the aggregate") {
  Fixture f;
  f.real("r1");
  f.gold("g1");
  for (int i = 0; i < 4; ++i) {
    f.annotator("a" + std::to_string(i), 5, 5);
    f.gold_answer("g1", "a" + std::to_string(i), true);
  }
  f.label("r1", "a0", Side::A);
  f.label("r1", "a1", Side::B);
  auto points = aggregate(f.state(), f.annotators);
  REQUIRE(points.size() == 1);
  CHECK(points[0].data_point_id == "r1");
  CHECK(points[0].num_labels == 2);
  CHECK(points[0].prompt_text == "text of r1");
  CHECK(points[0].labels[1].choice == Side::B);
}

TEST_CASE("banned labels are excluded unless asked otherwise") {
  Fixture f;
  f.real("r1");
  f.real("r2");
  f.annotator("good", 9, 10);
  f.annotator("bad", 2, 10, true);
  f.label("r1", "bad", Side::A);
  f.label("r2", "bad", Side::A);
  f.label("r2", "good", Side::B);
  auto points = aggregate(f.state(), f.annotators);
  REQUIRE(points.size() == 1);
  CHECK(points[0].data_point_id == "r2");
  CHECK(points[0].num_labels == 1);
  auto all = aggregate(f.state(), f.annotators, {.exclude_banned = false});
  CHECK(all.size() == 2);

  auto stats = compute_stats(f.state(), f.annotators, points);
  CHECK(stats.ban_excluded_labels == 2);
  CHECK(stats.exported_labels == 1);
  CHECK(stats.total_labels_incl_gold == 3);
}

TEST_CASE("accuracy is taken at aggregation time") {
  Fixture f;
  f.real("r1");
  f.annotator("a", 4, 5);
  f.label("r1", "a", Side::A);
  CHECK(aggregate(f.state(), f.annotators)[0].labels[0].annotator_gold_accuracy ==
        doctest::Approx(0.8));
  f.annotator("a", 9, 10);
  CHECK(aggregate(f.state(), f.annotators)[0].labels[0].annotator_gold_accuracy ==
        doctest::Approx(0.9));
}

TEST_CASE("label weighted accuracy") {
  CHECK(label_weighted_accuracy({point_with({0.8, 0.9, 0.9, 0.9})}) ==
        doctest::Approx(0.875));
  CHECK(label_weighted_accuracy({point_with({1.0}), point_with({1.0, 1.0})}) == 1.0);
  try {
    label_weighted_accuracy({});
    FAIL("expected NoLabels");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNoLabels);
  }
}

TEST_CASE("stats arithmetic") {
  Fixture f;
  for (int i = 0; i < 40; ++i) f.real("r" + std::to_string(100 + i));
  f.annotator("x", 1, 1);
  f.annotator("y", 1, 1);
  for (int i = 0; i < 10; ++i) f.label("r" + std::to_string(100 + i), "x", Side::A);
  for (int i = 0; i < 30; ++i) f.label("r" + std::to_string(100 + i), "y", Side::A);
  auto points = aggregate(f.state(), f.annotators);
  auto s = compute_stats(f.state(), f.annotators, points);
  CHECK(s.annotator_count == 2);
  CHECK(s.mean_labels_per_annotator == 20.0);
  CHECK(s.stddev_labels_per_annotator == 10.0);
  CHECK(s.top_k_share(1) == 0.75);
  CHECK(s.top_k_share(5) == 1.0);
  CHECK(s.unique_points == 30);
  CHECK(s.multi_labeled_points == 10);

  Fixture one;
  one.real("r");
  one.annotator("solo", 1, 1);
  one.label("r", "solo", Side::A);
  auto s1 = compute_stats(one.state(), one.annotators,
                          aggregate(one.state(), one.annotators));
  CHECK(s1.stddev_labels_per_annotator == 0.0);
}

TEST_CASE("stats on random pools: invariants and brute-force accuracy") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    Fixture f;
    int n_points = 20, n_ann = 8;
    for (int i = 0; i < n_points; ++i) f.real("r" + std::to_string(i));
    f.gold("g");
    for (int a = 0; a < n_ann; ++a) {
      auto answered = 1 + rng() % 20;
      f.annotator("a" + std::to_string(a), rng() % (answered + 1), answered,
                  rng() % 4 == 0);
    }
    for (int i = 0; i < n_points; ++i) {
      for (int a = 0; a < n_ann; ++a) {
        if (rng() % 3 == 0) {
          f.label("r" + std::to_string(i), "a" + std::to_string(a),
                  rng() & 1 ? Side::A : Side::B);
        }
      }
    }
    for (int a = 0; a < n_ann; ++a) f.gold_answer("g", "a" + std::to_string(a), true);
    auto state = f.state();
    auto points = aggregate(state, f.annotators);
    auto s = compute_stats(state, f.annotators, points);

    std::uint64_t banned_labels = 0;
    double acc_sum = 0.0;
    std::uint64_t counted = 0;
    for (const auto& l : state.labels()) {
      const auto& rec = f.annotators.at(l.annotator_id);
      if (rec.banned) {
        ++banned_labels;
      } else {
        acc_sum += double(rec.gold_correct) / double(rec.gold_answered);
        ++counted;
      }
    }
    CHECK(s.ban_excluded_labels == banned_labels);
    CHECK(s.exported_labels + s.gold_labels + banned_labels == s.total_labels_incl_gold);
    CHECK(s.exported_labels <= s.total_labels_incl_gold - s.gold_labels);
    if (counted > 0) {
      CHECK(std::abs(*s.label_weighted_accuracy - acc_sum / double(counted)) <= 1e-12);
    }
    CHECK(*s.mean_annotator_accuracy >= 0.0);
    CHECK(*s.mean_annotator_accuracy <= 1.0);
  }
}

TEST_CASE("Decimal4 and cost") {
  CHECK(Decimal4::parse("0.0025").units() == 25);
  CHECK(Decimal4::parse("8").to_string() == "8.0000");
  CHECK_THROWS(Decimal4::parse("0.00251"));
  CHECK_THROWS(Decimal4::parse("abc"));
  CHECK_THROWS(Decimal4::parse(""));
  CostModel m{Decimal4::parse("0.0025"), 1};
  CHECK(estimate_cost(0, m).to_string() == "0.0000");
  CHECK(estimate_cost(1, {Decimal4::parse("0.0030"), 1}).to_string() == "0.0030");
  CHECK(estimate_cost(3200, m).to_string() == "8.0000");
  CHECK(estimate_cost(3200, m) == Decimal4::from_units(80000));
  CHECK(estimate_cost(3, {Decimal4::parse("0.0025"), 2}).to_string() == "0.0038");

  std::mt19937_64 rng(3);
  for (int i = 0; i < 1000; ++i) {
    std::uint64_t a = rng() % 100000, b = rng() % 100000;
    CHECK(estimate_cost(a + b, m) == estimate_cost(a, m) + estimate_cost(b, m));
  }
  CHECK(cost_model_from_json({{"revenue_per_reward_ad", 0.0025}}).revenue_per_reward_ad ==
        Decimal4::from_units(25));
  CHECK_THROWS(cost_model_from_json({{"revenue_per_reward_ad", "-1"}}));
  CHECK_THROWS(cost_model_from_json({{"batches_per_ad_slot", 0}}));
}

TEST_CASE("export is sorted, deterministic and round-trips") {
  Fixture f;
  for (const char* id : {"r3", "r1", "r2"}) f.real(id);
  f.annotator("a", 3, 4);
  f.annotator("b", 4, 4);
  f.label("r3", "a", Side::A);
  f.label("r1", "b", Side::B);
  f.label("r2", "a", Side::B);
  f.label("r2", "b", Side::A);
  auto points = aggregate(f.state(), f.annotators);
  std::reverse(points.begin(), points.end());
  std::ostringstream one, two;
  CHECK(export_dataset(points, one) == 3);
  export_dataset(points, two);
  CHECK(one.str() == two.str());

  std::istringstream in(one.str());
  auto back = read_dataset(in);
  REQUIRE(back.size() == 3);
  CHECK(back[0].data_point_id == "r1");
  CHECK(back[2].data_point_id == "r3");
  std::sort(points.begin(), points.end(),
            [](const auto& a, const auto& b) { return a.data_point_id < b.data_point_id; });
  CHECK(back == points);

  // Exactly the typed fields, LF endings.
  std::istringstream lines(one.str());
  std::string line;
  while (std::getline(lines, line)) {
    CHECK(line.find('\r') == std::string::npos);
    auto j = nlohmann::json::parse(line);
    std::set<std::string> keys;
    for (const auto& [k, _] : j.items()) keys.insert(k);
    CHECK(keys == std::set<std::string>{"data_point_id", "prompt_text", "image_a",
                                        "image_b", "labels", "num_labels"});
    for (const auto& l : j["labels"]) {
      std::set<std::string> lk;
      for (const auto& [k, v] : l.items()) lk.insert(k);
      CHECK(lk == std::set<std::string>{"annotator_id", "choice",
                                        "annotator_gold_accuracy"});
      CHECK((l["choice"] == "A" || l["choice"] == "B"));
    }
  }
  std::ostringstream empty;
  CHECK_THROWS(export_dataset({}, empty));
}

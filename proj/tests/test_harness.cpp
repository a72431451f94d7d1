#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "suprim/combine.hpp"
#include "suprim/config.hpp"
#include "suprim/errors.hpp"
#include "suprim/harness.hpp"
#include "suprim/labels.hpp"
#include "suprim/vocab.hpp"
#include "test_util.hpp"

using namespace suprim;
using namespace suprim::harness;
using eval::Metric;
using eval::SubscoreVector;

namespace {

SubscoreVector random_scores(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SubscoreVector s;
  for (Metric m : eval::kAllMetrics) s.set(m, u(rng));
  return s;
}

struct SmallSet {
  scenario::Dataset ds;
  std::vector<eval::LabelSet> labels;
  EvalSet set;
};

const SmallSet& small_set() {
  static const SmallSet s = [] {
    SmallSet out;
    out.ds = scenario::generate_dataset(40, 12, 4, {}, vocab::default_vocabulary(), &out.labels);
    out.set = select_split(out.ds, out.labels, scenario::SplitTag::Train, true);
    return out;
  }();
  return s;
}

}  // namespace

TEST_CASE("combine_score against a hand recomputation") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 200; ++rep) {
    const SubscoreVector s = random_scores(rng);
    const double imi = u(rng);
    const auto cl = [](double x) { return std::max(x, 1e-7); };
    const double v1 = 0.05 * std::log(cl(imi)) + 0.5 * std::log(cl(s.nc)) + 0.5 * std::log(cl(s.dac)) +
                      8.0 * std::log(5 * cl(s.ep) + 5 * cl(s.ttc) + 2 * cl(s.c));
    const double v2 = 0.02 * std::log(cl(imi)) + 0.5 * std::log(cl(s.nc)) + 0.5 * std::log(cl(s.dac)) +
                      0.3 * std::log(cl(s.ddc)) + 0.1 * std::log(cl(s.tlc)) +
                      6.0 * std::log(5 * cl(s.ep) + 5 * cl(s.ttc) + 2 * cl(s.lk) + 1 * cl(s.hc));
    CHECK(combine_score(imi, s, InferenceCoefficients::v1()) == doctest::Approx(v1).epsilon(1e-12));
    CHECK(combine_score(imi, s, InferenceCoefficients::v2()) == doctest::Approx(v2).epsilon(1e-12));

    double row[kScoreColumns];
    row[0] = imi;
    for (std::size_t c = 1; c < kScoreColumns; ++c) row[c] = s.get(kHeadMetrics[c - 1]);
    CHECK(combine_row(row, InferenceCoefficients::v2()) ==
          doctest::Approx(combine_score(imi, s, InferenceCoefficients::v2())).epsilon(1e-14));
  }
}

TEST_CASE("combine_score is monotone in every input") {
  std::mt19937_64 rng(2);
  for (int rep = 0; rep < 100; ++rep) {
    SubscoreVector s = random_scores(rng);
    for (Metric m : kHeadMetrics) s.set(m, std::min(s.get(m), 0.9));
    for (const auto& c : {InferenceCoefficients::v1(), InferenceCoefficients::v2()}) {
      const double base = combine_score(0.5, s, c);
      CHECK(combine_score(0.6, s, c) > base);
      for (const auto& [m, w] : c.penalties) {
        SubscoreVector up = s;
        up.set(m, s.get(m) + 0.1);
        CHECK(combine_score(0.5, up, c) > base);
      }
      for (const auto& [m, w] : c.averages) {
        SubscoreVector up = s;
        up.set(m, s.get(m) + 0.1);
        CHECK(combine_score(0.5, up, c) > base);
      }
    }
  }
}

TEST_CASE("combine_score domain") {
  SubscoreVector s;
  const auto c = InferenceCoefficients::v2();
  CHECK_THROWS_AS(combine_score(std::numeric_limits<double>::quiet_NaN(), s, c), DomainError);
  CHECK_THROWS_AS(combine_score(1.5, s, c), DomainError);
  s.nc = -0.1;
  CHECK_THROWS_AS(combine_score(0.5, s, c), DomainError);
  s.nc = 0.0;
  CHECK(std::isfinite(combine_score(0.0, s, c)));
  CHECK(combine_score(0.0, s, c) == doctest::Approx(0.02 * std::log(1e-7) + 0.5 * std::log(1e-7) + 6 * std::log(13.0)));
  InferenceCoefficients bad = c;
  bad.averages.clear();
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = c;
  bad.penalties.push_back({Metric::EC, 1.0});
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  CHECK_THROWS_AS(column_of(Metric::EC), InvalidArgument);
  CHECK(column_of(Metric::NC) == 1);
  CHECK(column_of(Metric::C) == 9);
  CHECK(version_from("v1") == MetricVersion::V1);
  CHECK(std::string(to_string(MetricVersion::V2)) == "v2");
  CHECK_THROWS_AS(version_from("v3"), InvalidArgument);
}

TEST_CASE("config round trip") {
  Config c;
  CHECK(parse_config(dump_config(c)) == c);
  c.count = 77;
  c.planner.hidden_dim = 48;
  c.planner.delta[2] = 0.3;
  c.planner.ema.mode = planner::EmaMode::Scratch;
  c.planner.use_refine = false;
  c.evaluator.ec_weight = 0.5;
  c.use_teacher = false;
  const Config back = parse_config(dump_config(c));
  CHECK(back == c);
  CHECK(back.hash() == c.hash());
  CHECK(c.hash() != Config{}.hash());

  const Config partial = parse_config("[planner]\nhidden_dim = 64\n; comment\n");
  CHECK(partial.planner.hidden_dim == 64);
  CHECK(partial.planner.ffn_dim == Config{}.planner.ffn_dim);

  CHECK_THROWS_AS(parse_config("[planner]\nhiden_dim = 64\n"), InvalidArgument);
  CHECK_THROWS_AS(parse_config("[nowhere]\nx = 1\n"), InvalidArgument);
  CHECK_THROWS_AS(parse_config("[planner]\nhidden_dim = lots\n"), InvalidArgument);
  CHECK_THROWS_AS(load_config("/nonexistent/config.ini"), IoError);
}

TEST_CASE("evaluation reports") {
  const SmallSet& s = small_set();
  CHECK(s.set.size() == 12);
  CHECK(select_split(s.ds, s.labels, scenario::SplitTag::Test).size() == 4);
  CHECK(select_split(s.ds, s.labels, scenario::SplitTag::Train).size() == 8);

  // expert-nearest selection scores the labels' own aggregates
  std::vector<std::size_t> pick(s.set.size());
  for (std::size_t i = 0; i < pick.size(); ++i) pick[i] = (i * 131) % 8192;
  const EvalReport r = report_from_selection(s.set, pick, MetricVersion::V2);
  const auto w = eval::MetricWeights::epdms();
  double mean = 0.0;
  double nc = 0.0;
  for (std::size_t i = 0; i < pick.size(); ++i) {
    const auto sub = s.set.labels[i]->subscores(pick[i]);
    mean += eval::aggregate(sub, w);
    nc += sub.nc;
    CHECK(r.rows[i].seed == s.set.scenarios[i]->seed);
  }
  CHECK(r.aggregate_mean == doctest::Approx(100.0 * mean / 12.0).epsilon(1e-12));
  CHECK(r.mean(Metric::NC) == doctest::Approx(100.0 * nc / 12.0).epsilon(1e-12));
  CHECK(report_from_selection(s.set, pick, MetricVersion::V2) == r);
  CHECK(report_csv(r) == report_csv(report_from_selection(s.set, pick, MetricVersion::V2)));

  const EvalReport v1 = report_from_selection(s.set, pick, MetricVersion::V1);
  double m1 = 0.0;
  for (std::size_t i = 0; i < pick.size(); ++i) m1 += eval::aggregate(s.set.labels[i]->subscores(pick[i]), eval::MetricWeights::pdms());
  CHECK(v1.aggregate_mean == doctest::Approx(100.0 * m1 / 12.0).epsilon(1e-12));

  // csv: header, one row per scenario, mean line
  std::istringstream in(report_csv(r));
  std::string line;
  std::getline(in, line);
  CHECK(line == "seed,selected,nc,dac,ddc,tlc,ep,ttc,lk,hc,ec,c,aggregate");
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    CHECK(std::count(line.begin(), line.end(), ',') == 12);
  }
  CHECK(rows == 13);

  CHECK_THROWS_AS(report_from_selection(s.set, {1, 2}, MetricVersion::V2), ShapeMismatch);
  std::vector<std::size_t> oob(pick.size(), 9000);
  CHECK_THROWS_AS(report_from_selection(s.set, oob, MetricVersion::V2), InvalidArgument);

  const double ceiling = oracle_ceiling(s.set, MetricVersion::V2);
  const double rnd = random_baseline(s.set, MetricVersion::V2, 64, 3);
  CHECK(ceiling >= r.aggregate_mean);
  CHECK(ceiling > rnd);
  CHECK(random_baseline(s.set, MetricVersion::V2, 64, 3) == rnd);
  CHECK_THROWS_AS(oracle_ceiling(EvalSet{}, MetricVersion::V2), EmptyDataset);
}

TEST_CASE("oracle from rankings") {
  const SmallSet& s = small_set();
  const auto w = eval::MetricWeights::epdms();
  std::vector<std::vector<double>> gt_rank;
  std::vector<std::vector<double>> random_rank;
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0, 1);
  double best = 0.0;
  for (std::size_t i = 0; i < s.set.size(); ++i) {
    const auto agg = s.set.labels[i]->aggregates(w);
    gt_rank.push_back(agg);
    best += *std::max_element(agg.begin(), agg.end());
    std::vector<double> r(agg.size());
    for (double& x : r) x = u(rng);
    random_rank.push_back(r);
  }
  const std::vector<std::size_t> ks{1, 4, 16, 256, 8192};
  const OracleTable perfect = oracle_from_rankings(s.set, gt_rank, ks, MetricVersion::V2);
  for (double v : perfect.values) CHECK(v == doctest::Approx(100.0 * best / 12.0).epsilon(1e-12));
  const OracleTable t = oracle_from_rankings(s.set, random_rank, ks, MetricVersion::V2);
  for (std::size_t j = 1; j < ks.size(); ++j) CHECK(t.values[j] >= t.values[j - 1]);
  CHECK(t.values.back() == doctest::Approx(perfect.values.back()).epsilon(1e-12));

  // k = 1 is the score of each ranking's argmax
  double top1 = 0.0;
  for (std::size_t i = 0; i < s.set.size(); ++i) {
    const auto agg = s.set.labels[i]->aggregates(w);
    const auto arg = std::max_element(random_rank[i].begin(), random_rank[i].end()) - random_rank[i].begin();
    top1 += agg[static_cast<std::size_t>(arg)];
  }
  CHECK(t.values[0] == doctest::Approx(100.0 * top1 / 12.0).epsilon(1e-12));
  CHECK_THROWS_AS(oracle_from_rankings(s.set, random_rank, {0}, MetricVersion::V2), KOutOfRange);
  CHECK_THROWS_AS(oracle_from_rankings(s.set, random_rank, {8193}, MetricVersion::V2), KOutOfRange);
  CHECK(oracle_csv(t).rfind("k,value\n", 0) == 0);
}

TEST_CASE("turn splits") {
  SplitSpec spec;
  const auto& v = vocab::default_vocabulary();
  std::size_t counted[3] = {0, 0, 0};
  for (std::size_t i = 0; i < v.size(); ++i) {
    const TurnSplit t = spec.classify(v[i]);
    if (geom::distance(v[i].waypoints.back().position, v[i].start.position) < 0.1) {
      CHECK(t == TurnSplit::Forward);
      ++counted[1];
      continue;
    }
    const double deg = geom::turning_angle(v[i]);
    if (deg > 30.0) CHECK(t == TurnSplit::Left);
    else if (deg < -30.0) CHECK(t == TurnSplit::Right);
    else CHECK(t == TurnSplit::Forward);
    ++counted[static_cast<int>(t)];
  }
  CHECK(counted[0] == counted[2]);
  for (const auto& [deg, want] : {std::pair{45.0, TurnSplit::Left}, std::pair{29.0, TurnSplit::Forward},
                                  std::pair{-29.0, TurnSplit::Forward}, std::pair{-31.0, TurnSplit::Right},
                                  std::pair{170.0, TurnSplit::Left}}) {
    geom::Trajectory t = suprim::testing::constant_speed_line(10.0);
    const double a = deg * std::numbers::pi / 180.0;
    t.waypoints.back().position = {20.0 * std::cos(a), 20.0 * std::sin(a)};
    CHECK(spec.classify(t) == want);
  }
  CHECK(counted[0] > 0);

  const SmallSet& s = small_set();
  std::vector<std::size_t> pick(s.set.size(), 100);
  const EvalReport full = report_from_selection(s.set, pick, MetricVersion::V2);
  const SplitReports sr = split_report(s.set, full);
  CHECK(sr.left.rows.size() + sr.forward.rows.size() + sr.right.rows.size() == s.set.size());
  for (TurnSplit t : {TurnSplit::Left, TurnSplit::Forward, TurnSplit::Right}) {
    for (const EvalRow& row : sr.get(t).rows) {
      const auto it = std::find_if(s.set.scenarios.begin(), s.set.scenarios.end(),
                                   [&](const scenario::Scenario* sc) { return sc->seed == row.seed; });
      REQUIRE(it != s.set.scenarios.end());
      CHECK(spec.classify((*it)->expert) == t);
    }
  }
  EvalReport short_report = full;
  short_report.rows.pop_back();
  CHECK_THROWS_AS(split_report(s.set, short_report), ShapeMismatch);
}

TEST_CASE("heading histogram and KL") {
  const auto& v = vocab::default_vocabulary();
  const SmallSet& s = small_set();
  const Histogram h = heading_histogram(v, s.set.labels, 36);
  CHECK(h.edges.size() == 37);
  CHECK(h.edges.front() == doctest::Approx(-std::numbers::pi));
  CHECK(h.edges.back() == doctest::Approx(std::numbers::pi));
  CHECK(*std::max_element(h.freq.begin(), h.freq.end()) == 1.0);

  // brute-force count
  const auto w = eval::MetricWeights::epdms();
  std::vector<std::size_t> counts(36, 0);
  for (const eval::LabelSet* l : s.set.labels) {
    const auto agg = l->aggregates(w);
    std::vector<std::size_t> order(agg.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return agg[a] > agg[b]; });
    for (std::size_t i = 0; i < agg.size(); ++i) {
      const bool top3 = std::find(order.begin(), order.begin() + 3, i) != order.begin() + 3;
      if (!(top3 || agg[i] > 0.99)) continue;
      const double a = geom::normalize_angle(v[i].waypoints.back().heading);
      std::size_t b = static_cast<std::size_t>(std::floor((a + std::numbers::pi) / (2 * std::numbers::pi) * 36));
      ++counts[std::min<std::size_t>(b, 35)];
    }
  }
  CHECK(h.counts == counts);

  Histogram flat;
  flat.counts.assign(10, 5);
  CHECK(kl_to_uniform(flat) == doctest::Approx(0.0).epsilon(1e-15));
  Histogram spike;
  spike.counts.assign(10, 0);
  spike.counts[3] = 7;
  CHECK(kl_to_uniform(spike) == doctest::Approx(std::log(10.0)));
  Histogram two;
  two.counts = {1, 3};
  CHECK(kl_to_uniform(two) == doctest::Approx(0.25 * std::log(0.5) + 0.75 * std::log(1.5)));
  CHECK(kl_to_uniform(h) >= 0.0);
  Histogram empty;
  empty.counts.assign(4, 0);
  CHECK_THROWS_AS(kl_to_uniform(empty), EmptyDataset);
  CHECK_THROWS_AS(heading_histogram(v, {}, 36), EmptyDataset);
  CHECK_THROWS_AS(heading_histogram(v, s.set.labels, 0), InvalidArgument);

  std::istringstream in(histogram_csv(h));
  std::string line;
  std::getline(in, line);
  CHECK(line == "bin_lo,bin_hi,count,freq");
}

TEST_CASE("rotated labels are reproducible") {
  const SmallSet& s = small_set();
  std::vector<const scenario::Scenario*> first(s.set.scenarios.begin(), s.set.scenarios.begin() + 3);
  const auto a = rotated_labels(first, vocab::default_vocabulary(), std::numbers::pi / 2, 5);
  const auto b = rotated_labels(first, vocab::default_vocabulary(), std::numbers::pi / 2, 5);
  REQUIRE(a.size() == 3);
  CHECK(a == b);
  const auto c = rotated_labels(first, vocab::default_vocabulary(), std::numbers::pi / 2, 6);
  CHECK_FALSE(a == c);
  for (std::size_t i = 0; i < 3; ++i) CHECK(a[i].size() == s.set.labels[i]->size());
  CHECK_THROWS_AS(rotated_labels(first, vocab::default_vocabulary(), 0.0, 5), InvalidArgument);
}

TEST_CASE("svg output") {
  const std::string svg = svg_bars("t", {"a", "b"}, {1.0, 0.5});
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(std::count(svg.begin(), svg.end(), '\n') > 2);
}

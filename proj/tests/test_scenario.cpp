#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "suprim/dataset.hpp"
#include "suprim/errors.hpp"
#include "suprim/evaluator.hpp"
#include "suprim/labels.hpp"
#include "suprim/observe.hpp"
#include "suprim/scenario.hpp"
#include "suprim/vocab.hpp"
#include "test_util.hpp"

using namespace suprim;
using namespace suprim::scenario;
using suprim::testing::parked;
using suprim::testing::straight_road;

namespace {

const vocab::TrajectoryVocabulary& V() { return vocab::default_vocabulary(); }

GenConfig quiet_straight() {
  GenConfig c;
  c.max_agents = 0;
  c.light_probability = 0.0;
  c.turn_fraction = 0.0;
  c.curved_fraction = 0.0;
  return c;
}

// best EPDMS entry, ties to higher EP then lower index
std::size_t brute_expert(const Scenario& s) {
  const eval::ScenarioIndex index(s);
  const auto raw = eval::score_vocabulary(s, V());
  std::size_t best = 0;
  double best_agg = -1.0, best_ep = -1.0;
  // reference progress as the library defines it is checked elsewhere; here
  // every candidate reference is tried and the argmax must be stable
  const auto labels = eval::make_labels(s, V(), raw);
  for (std::size_t i = 0; i < V().size(); ++i) {
    const double agg = labels.epdms(i);
    const double ep = labels.ep[i];
    if (agg > best_agg || (agg == best_agg && ep > best_ep)) {
      best = i;
      best_agg = agg;
      best_ep = ep;
    }
  }
  return best;
}

double final_speed(const geom::Trajectory& t) {
  const std::size_t n = t.waypoints.size();
  return geom::distance(t.position(n), t.position(n - 1)) / t.dt;
}

}  // namespace

TEST_CASE("generation is deterministic") {
  const Scenario a = generate_scenario(1, {}, V());
  const Scenario b = generate_scenario(1, {}, V());
  CHECK(a == b);
  CHECK(a.ego_pose == geom::Pose2{});
  CHECK(a.route.points.front() == geom::Point2{0, 0});
  CHECK_NOTHROW(geom::validate(a.expert));
  CHECK(a.expert == V()[static_cast<std::size_t>(a.expert_index)]);
  CHECK_FALSE(generate_scenario(2, {}, V()) == a);
}

TEST_CASE("no agents: expert never collides") {
  GenConfig c;
  c.max_agents = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Scenario s = generate_scenario(seed, c, V());
    CHECK(s.agents.empty());
    CHECK(eval::score_nc(s, s.expert) == 1.0);
    CHECK(eval::score_ttc(s, s.expert) == 1.0);
  }
}

TEST_CASE("invalid generator configs") {
  GenConfig c;
  c.lane_width = 1.5;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = {};
  c.max_agents = -1;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = {};
  c.turn_fraction = 0.8;
  c.curved_fraction = 0.5;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
}

TEST_CASE("over-dense config fails generation") {
  GenConfig c;
  c.max_agents = 400;
  c.max_attempts = 2;
  CHECK_THROWS_AS(generate_scenario(3, c, V()), GenerationFailed);
}

TEST_CASE("expert matches a brute-force EPDMS scan") {
  for (std::uint64_t seed : {4u, 11u, 23u}) {
    const Scenario s = generate_scenario(seed, {}, V());
    CHECK(expert_trajectory(s, V()) == static_cast<std::size_t>(s.expert_index));
    CHECK(brute_expert(s) == static_cast<std::size_t>(s.expert_index));
    CHECK(expert_trajectory(s, V()) == expert_trajectory(s, V()));
  }
}

TEST_CASE("empty straight road: expert goes straight") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Scenario s = generate_scenario(seed, quiet_straight(), V());
    CHECK(std::abs(geom::turning_angle(s.expert)) < 5.0);
    CHECK(brute_expert(s) == static_cast<std::size_t>(s.expert_index));
  }
}

TEST_CASE("red light ahead: expert stops before the line") {
  Scenario s = straight_road(10.0);
  s.lights.push_back({{17.0, 1.75}, {17.0, -1.75}, LightState::Red});
  const std::size_t e = expert_trajectory(s, V());
  CHECK(final_speed(V()[e]) < 0.5);
  CHECK(eval::score_tlc(s, V()[e]) == 1.0);
  s.lights[0].state = LightState::Green;
  CHECK(final_speed(V()[expert_trajectory(s, V())]) > 5.0);
}

TEST_CASE("no safe entry") {
  Scenario s = straight_road(10.0);
  // parked cars cover the whole drivable strip ahead
  for (double x = 0.0; x <= 70.0; x += 4.0) {
    for (double y : {0.0, 2.0, 3.5}) s.agents.push_back(parked({x, y}));
  }
  CHECK_THROWS_AS(expert_trajectory(s, V()), NoSafeTrajectory);
}

TEST_CASE("rotate_scenario") {
  const Scenario s = generate_scenario(6, {}, V());
  CHECK(rotate_scenario(s, 0.0).agents == s.agents);
  CHECK(rotate_scenario(s, 0.0).expert == s.expert);
  const Scenario r = rotate_scenario(s, 0.4);
  CHECK(r.ego_pose == geom::Pose2{});
  CHECK(r.expert_index == -1);
  const auto want = geom::rotate_trajectory(s.expert, -0.4);
  for (std::size_t j = 0; j < want.waypoints.size(); ++j) {
    CHECK(std::abs(r.expert.waypoints[j].position.x - want.waypoints[j].position.x) < 1e-12);
    CHECK(std::abs(r.expert.waypoints[j].position.y - want.waypoints[j].position.y) < 1e-12);
  }
  const auto a = eval::score_all(s, s.expert);
  const auto b = eval::score_all(r, r.expert);
  for (eval::Metric m : eval::kAllMetrics) CHECK(std::abs(a.get(m) - b.get(m)) <= 1e-9);

  Scenario one = straight_road();
  one.agents = {parked({10.0, 0.0})};
  const Scenario ro = rotate_scenario(one, std::numbers::pi / 6);
  const auto p = ro.agents[0].initial_pose.position;
  CHECK(std::atan2(p.y, p.x) == doctest::Approx(-std::numbers::pi / 6));
  CHECK(geom::norm(p) == doctest::Approx(10.0));
}

TEST_CASE("sample_rotation") {
  std::mt19937_64 rng(12);
  const double big = std::numbers::pi / 6;
  double sum = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double x = sample_rotation(rng, big);
    CHECK((x >= -big && x <= big));
    sum += x;
  }
  CHECK(std::abs(sum / 100000.0) < 0.01);
  std::mt19937_64 r1(5), r2(5);
  for (int i = 0; i < 10; ++i) CHECK(sample_rotation(r1, big) == sample_rotation(r2, big));
  for (int i = 0; i < 1000; ++i) CHECK(uniform_index(r1, 7) < 7);
}

TEST_CASE("observe: mask and caps") {
  Scenario s = straight_road();
  s.agents = {parked({-10.0, 0.0}), parked({20.0, 3.5}, std::numbers::pi)};
  const auto half = observe(s, std::numbers::pi / 2);
  std::size_t agents = 0;
  for (const auto& t : half.tokens) agents += t.kind == TokenKind::Agent ? 1 : 0;
  CHECK(agents == 1);
  const auto full = observe(s, std::numbers::pi);
  agents = 0;
  for (const auto& t : full.tokens) agents += t.kind == TokenKind::Agent ? 1 : 0;
  CHECK(agents == 2);
  CHECK(full.tokens.front().kind == TokenKind::Ego);
  CHECK_THROWS_AS(observe(s, 0.0), InvalidArgument);
  CHECK_THROWS_AS(observe(s, 4.0), InvalidArgument);
  CHECK(camera_halfangle(1) < camera_halfangle(3));
  CHECK(camera_halfangle(3) < camera_halfangle(5));
  CHECK_THROWS_AS(camera_halfangle(2), InvalidArgument);
}

TEST_CASE("observe: FOV soundness and ordering") {
  const ObserveConfig cfg;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Scenario s = generate_scenario(seed, {}, V());
    for (int cams : {1, 3, 5}) {
      const double half = camera_halfangle(cams);
      const auto obs = observe(s, half, cfg);
      CHECK(obs == observe(s, half, cfg));
      std::size_t lanes = 0, bounds = 0;
      for (std::size_t i = 0; i < obs.tokens.size(); ++i) {
        const auto& t = obs.tokens[i];
        if (i > 0) {
          CHECK(t.kind != TokenKind::Ego);
          CHECK(static_cast<int>(t.kind) >= static_cast<int>(obs.tokens[i - 1].kind));
          CHECK(std::abs(std::atan2(t.source.y, t.source.x)) <= half + 1e-12);
          if (t.kind == obs.tokens[i - 1].kind) CHECK(geom::norm(t.source) >= geom::norm(obs.tokens[i - 1].source));
        }
        lanes += t.kind == TokenKind::LanePoint ? 1 : 0;
        bounds += t.kind == TokenKind::BoundaryPoint ? 1 : 0;
      }
      CHECK(lanes <= cfg.max_lane_points);
      CHECK(bounds <= cfg.max_boundary_points);
    }
  }
}

TEST_CASE("observe commutes with rotation on shared support") {
  Scenario s = straight_road();
  s.agents = {parked({12.0, 1.0}, 0.2), parked({25.0, -1.0}), parked({-8.0, 3.5}, std::numbers::pi)};
  s.lights = {{{30.0, 1.75}, {30.0, -1.75}, LightState::Red}};
  const double theta = 0.35;
  const double half = camera_halfangle(3);
  const Scenario r = rotate_scenario(s, theta);
  const auto a = observe(s, half);
  const auto b = observe(r, half);
  std::size_t matched = 0;
  for (const auto& ta : a.tokens) {
    if (ta.kind != TokenKind::Agent && ta.kind != TokenKind::Light) continue;
    const geom::Point2 want = geom::rotate_point(ta.source, {0, 0}, -theta);
    if (std::abs(std::atan2(want.y, want.x)) > half) continue;
    bool found = false;
    for (const auto& tb : b.tokens) {
      if (tb.kind != ta.kind || geom::distance(tb.source, want) > 1e-9) continue;
      found = true;
      CHECK(tb.feature[0] == doctest::Approx(want.x / 30.0));
      CHECK(tb.feature[1] == doctest::Approx(want.y / 30.0));
      // direction features rotate with the world
      const double ha = std::atan2(ta.feature[3], ta.feature[2]);
      const double hb = std::atan2(tb.feature[3], tb.feature[2]);
      CHECK(std::abs(geom::normalize_angle(hb - (ha - theta))) < 1e-9);
    }
    CHECK(found);
    ++matched;
  }
  CHECK(matched >= 3);
}

TEST_CASE("mirror symmetry of labels") {
  const Scenario s = generate_scenario(13, {}, V());
  const Scenario m = mirror_scenario(s);
  const auto ls = eval::label_vocabulary(s, V());
  const auto lm = eval::label_vocabulary(m, V());
  const auto& g = V().spec();
  for (std::size_t k = 0; k < g.curvature_levels; k += 5) {
    for (std::size_t sp = 0; sp < g.speed_levels; sp += 3) {
      for (std::size_t a = 0; a < g.initial_speed_levels; ++a) {
        const std::size_t i = V().index_of(k, sp, a);
        const std::size_t j = V().index_of(g.curvature_levels - 1 - k, sp, a);
        for (eval::Metric x : {eval::Metric::NC, eval::Metric::DAC, eval::Metric::TTC, eval::Metric::C}) {
          CHECK(ls.value(i, x) == lm.value(j, x));
        }
      }
    }
  }
}

TEST_CASE("dataset round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "suprim_test_ds";
  std::filesystem::create_directories(dir);
  std::vector<eval::LabelSet> labels;
  Dataset ds = generate_dataset(100, 12, 4, {}, V(), &labels);
  REQUIRE(ds.records.size() == 12);
  REQUIRE(labels.size() == 12);
  for (std::size_t i = 0; i < 12; ++i) {
    CHECK(ds.records[i].scenario.seed == 100 + i);
    CHECK(ds.records[i].split == (i >= 8 ? SplitTag::Test : SplitTag::Train));
    CHECK(labels[i] == eval::label_vocabulary(ds.records[i].scenario, V()));
  }
  const auto path = dir / "ds.jsonl";
  save_dataset(path, ds);
  const Dataset back = load_dataset(path);
  CHECK(back.records == ds.records);
  CHECK(back.gen_config == ds.gen_config);
  CHECK(back.seed_begin == 100);
  CHECK(back.seed_end == 112);
  CHECK(back.content_hash == ds.content_hash);

  Dataset again = generate_dataset(100, 12, 4, {}, V());
  const auto path2 = dir / "ds2.jsonl";
  save_dataset(path2, again);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  const std::string s1((std::istreambuf_iterator<char>(f1)), {});
  const std::string s2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(s1 == s2);

  Dataset empty;
  save_dataset(dir / "empty.jsonl", empty);
  CHECK(load_dataset(dir / "empty.jsonl").records.empty());

  {
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    const auto pos = header.find("\"format_version\":1");
    REQUIRE(pos != std::string::npos);
    header.replace(pos, 18, "\"format_version\":9");
    std::ofstream out(dir / "bad.jsonl");
    out << header << '\n';
  }
  CHECK_THROWS_AS(load_dataset(dir / "bad.jsonl"), FormatVersionMismatch);
  CHECK_THROWS_AS(load_dataset(dir / "missing.jsonl"), IoError);
  std::filesystem::remove_all(dir);
}

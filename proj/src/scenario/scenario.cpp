#include "suprim/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>

#include "suprim/errors.hpp"
#include "suprim/evaluator.hpp"
#include "suprim/labels.hpp"
#include "suprim/vocab.hpp"

namespace suprim::scenario {

const char* to_string(RoadKind kind) {
  switch (kind) {
    case RoadKind::Straight: return "straight";
    case RoadKind::Curved: return "curved";
    case RoadKind::TJunction: return "t_junction";
  }
  return "?";
}

void GenConfig::validate() const {
  const auto fraction = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!(lane_width > ego_width)) throw InvalidArgument("lane width must exceed vehicle width");
  if (!(ego_length > 0.0 && ego_width > 0.0)) throw InvalidArgument("vehicle extents must be positive");
  if (max_agents < 0) throw InvalidArgument("agent count must be >= 0");
  if (!fraction(turn_fraction) || !fraction(curved_fraction) || turn_fraction + curved_fraction > 1.0) {
    throw InvalidArgument("road-kind fractions must lie in [0, 1] and sum to at most 1");
  }
  if (!fraction(light_probability) || !fraction(red_probability)) throw InvalidArgument("probabilities must be in [0, 1]");
  if (!(max_ego_speed >= 0.0 && max_turn_speed >= 0.0)) throw InvalidArgument("speed caps must be >= 0");
  if (!(max_road_curvature >= 0.0 && max_road_curvature < 1.0 / (2.0 * lane_width))) {
    throw InvalidArgument("road curvature out of range");
  }
  if (!(road_behind > 0.0 && road_ahead > 20.0 && junction_offset > 0.0)) throw InvalidArgument("bad road extents");
  if (max_attempts < 1) throw InvalidArgument("max_attempts must be >= 1");
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n) {
  if (n == 0) throw InvalidArgument("uniform_index needs n > 0");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  for (;;) {
    const std::uint64_t r = rng();
    if (r < limit) return r % n;
  }
}

double sample_rotation(std::mt19937_64& rng, double max_angle) {
  if (!(max_angle > 0.0)) throw InvalidArgument("rotation bound must be positive");
  return (2.0 * uniform01(rng) - 1.0) * max_angle;
}

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Sampled constant-curvature curve with exact left normals.
struct Curve {
  std::vector<Point2> points;
  std::vector<Point2> normals;
  std::vector<double> headings;
};

Curve arc_curve(const Pose2& start, double curvature, double s0, double s1, std::size_t segments) {
  Curve c;
  const Point2 f = geom::unit_vector(start.heading);
  const Point2 l{-f.y, f.x};
  for (std::size_t i = 0; i <= segments; ++i) {
    const double s = s0 + (s1 - s0) * static_cast<double>(i) / static_cast<double>(segments);
    double x = s;
    double y = 0.0;
    if (curvature != 0.0) {
      const double h = std::sin(0.5 * curvature * s);
      x = std::sin(curvature * s) / curvature;
      y = 2.0 * h * h / curvature;
    }
    const double heading = start.heading + curvature * s;
    c.points.push_back(start.position + x * f + y * l);
    c.normals.push_back(geom::unit_vector(heading + 0.5 * std::numbers::pi));
    c.headings.push_back(heading);
  }
  return c;
}

std::size_t segments_for(double length, double spacing) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(length / spacing - 1e-9)));
}

// One convex quad per curve segment spanning [right, left] lateral offsets.
void add_strip(std::vector<ConvexPolygon>& cells, const Curve& c, double right, double left) {
  for (std::size_t i = 0; i + 1 < c.points.size(); ++i) {
    cells.emplace_back(std::vector<Point2>{c.points[i] + right * c.normals[i], c.points[i + 1] + right * c.normals[i + 1],
                                           c.points[i + 1] + left * c.normals[i + 1], c.points[i] + left * c.normals[i]});
  }
}

Polyline offset_line(const Curve& c, double offset, bool reversed) {
  Polyline out;
  for (std::size_t i = 0; i < c.points.size(); ++i) out.points.push_back(c.points[i] + offset * c.normals[i]);
  if (reversed) std::reverse(out.points.begin(), out.points.end());
  return out;
}

struct World {
  Scenario s;
  Curve ego_lane;         // ego-lane curve (straight/curved roads)
  double ego_lane_s0 = 0; // arc length of ego_lane.points[0]
};

bool overlaps_existing(const Scenario& s, const Agent& a) {
  const auto inflated = [](const Pose2& p, double length, double width) {
    return geom::footprint(p, length + 2.0, width + 1.0);
  };
  const ConvexPolygon fa = inflated(a.initial_pose, a.length, a.width);
  if (geom::polygons_intersect(fa, inflated({{0.0, 0.0}, 0.0}, s.ego_length, s.ego_width))) return true;
  for (const Agent& other : s.agents) {
    if (geom::polygons_intersect(fa, inflated(other.initial_pose, other.length, other.width))) return true;
  }
  return false;
}

double pick_speed_level(std::mt19937_64& rng, const vocab::GridSpec& grid, double cap) {
  const double step =
      grid.initial_speed_levels > 1 ? grid.max_initial_speed / static_cast<double>(grid.initial_speed_levels - 1) : 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < grid.initial_speed_levels; ++i) {
    if (static_cast<double>(i) * step <= cap + 1e-9) ++count;
  }
  if (count == 0) return 0.0;
  return static_cast<double>(uniform_index(rng, count)) * step;
}

Pose2 curve_pose(const Curve& c, double s0, double spacing, double s, double offset) {
  // Curves here are arcs, so interpolate by evaluating between samples.
  const double u = std::clamp((s - s0) / spacing, 0.0, static_cast<double>(c.points.size() - 1));
  const auto i = std::min(static_cast<std::size_t>(u), c.points.size() - 2);
  const double t = u - static_cast<double>(i);
  const Point2 p = c.points[i] + t * (c.points[i + 1] - c.points[i]);
  const Point2 n = c.normals[i] + t * (c.normals[i + 1] - c.normals[i]);
  const double h = c.headings[i] + t * (c.headings[i + 1] - c.headings[i]);
  return {p + offset * (1.0 / geom::norm(n)) * n, geom::normalize_angle(h)};
}

constexpr double kLaneSpacing = 2.0;

void build_open_road(World& w, std::mt19937_64& rng, const GenConfig& cfg, const vocab::TrajectoryVocabulary& vocab) {
  Scenario& s = w.s;
  double curvature = 0.0;
  if (s.kind == RoadKind::Curved) {
    // Road curvature is drawn from the vocabulary's own levels so some entry can track the lane.
    std::vector<double> levels;
    for (std::size_t i = 0; i < vocab.spec().curvature_levels; ++i) {
      const double k = vocab::curvature_level(vocab.spec(), i);
      if (std::abs(k) <= cfg.max_road_curvature) levels.push_back(k);
    }
    if (!levels.empty()) curvature = levels[uniform_index(rng, levels.size())];
  }
  const double hw = 0.5 * cfg.lane_width;
  const double total = cfg.road_behind + cfg.road_ahead;
  w.ego_lane = arc_curve({{0.0, 0.0}, 0.0}, curvature, -cfg.road_behind, cfg.road_ahead, segments_for(total, kLaneSpacing));
  w.ego_lane_s0 = -cfg.road_behind;
  add_strip(s.drivable, w.ego_lane, -hw, cfg.lane_width + hw);
  s.lanes.push_back(offset_line(w.ego_lane, 0.0, false));
  s.lanes.push_back(offset_line(w.ego_lane, cfg.lane_width, true));
  const std::size_t origin = static_cast<std::size_t>(std::llround(cfg.road_behind / (total / static_cast<double>(w.ego_lane.points.size() - 1))));
  s.route.points.push_back({0.0, 0.0});
  for (std::size_t i = origin + 1; i < w.ego_lane.points.size(); ++i) s.route.points.push_back(w.ego_lane.points[i]);

  const double spacing = total / static_cast<double>(w.ego_lane.points.size() - 1);
  if (uniform01(rng) < cfg.light_probability) {
    const double v = s.ego_speed;
    const double line_s = std::max(8.0, v * v / 6.0 + 5.0) + uniform(rng, 0.0, 20.0);
    const Pose2 p = curve_pose(w.ego_lane, w.ego_lane_s0, spacing, line_s, 0.0);
    const Point2 n = geom::unit_vector(p.heading + 0.5 * std::numbers::pi);
    TrafficLight light{p.position + hw * n, p.position - hw * n,
                       uniform01(rng) < cfg.red_probability ? LightState::Red : LightState::Green};
    s.lights.push_back(light);
  }
}

void build_junction(World& w, std::mt19937_64& rng, const GenConfig& cfg, bool left) {
  Scenario& s = w.s;
  const double lw = cfg.lane_width;
  const double hw = 0.5 * lw;
  const double a = cfg.junction_offset;
  const double half_cross = cfg.road_ahead * (2.0 / 3.0);

  const Curve approach = arc_curve({{0.0, 0.0}, 0.0}, 0.0, -cfg.road_behind, a, segments_for(cfg.road_behind + a, kLaneSpacing));
  add_strip(s.drivable, approach, -hw, lw + hw);
  const Curve cross = arc_curve({{a + lw, 0.0}, 0.5 * std::numbers::pi}, 0.0, -half_cross, half_cross,
                                segments_for(2.0 * half_cross, 2.0 * kLaneSpacing));
  // cross runs along x = a + lw heading +y; its left normal points to -x.
  add_strip(s.drivable, cross, -lw, lw);

  Polyline ego_lane;
  for (const Point2& p : approach.points) {
    if (p.x <= 1e-9) ego_lane.points.push_back(p);
  }
  s.lanes.push_back(ego_lane);
  Polyline opposing = offset_line(approach, lw, true);
  s.lanes.push_back(opposing);
  const Polyline north = offset_line(cross, -hw, false);
  const Polyline south = offset_line(cross, hw, true);
  s.lanes.push_back(north);
  s.lanes.push_back(south);

  const double r_left = a + lw + hw;
  const double r_right = a + hw;
  const Curve left_turn = arc_curve({{0.0, 0.0}, 0.0}, 1.0 / r_left, 0.0, 0.5 * std::numbers::pi * r_left, 16);
  const Curve right_turn = arc_curve({{0.0, 0.0}, 0.0}, -1.0 / r_right, 0.0, 0.5 * std::numbers::pi * r_right, 16);
  add_strip(s.drivable, left_turn, -hw, hw);
  add_strip(s.drivable, right_turn, -hw, hw);
  s.lanes.push_back(offset_line(left_turn, 0.0, false));
  s.lanes.push_back(offset_line(right_turn, 0.0, false));

  const Curve& turn = left ? left_turn : right_turn;
  s.route.points = turn.points;
  const Polyline& exit = left ? north : south;
  for (const Point2& p : exit.points) {
    if (left ? p.y > r_left + 1e-9 : p.y < -r_right - 1e-9) s.route.points.push_back(p);
  }
  (void)rng;
}

std::optional<Agent> sample_agent(World& w, std::mt19937_64& rng, const GenConfig& cfg) {
  const Scenario& s = w.s;
  Agent agent;
  agent.length = 4.5;
  agent.width = 2.0;
  if (s.kind == RoadKind::TJunction) {
    const double a = cfg.junction_offset;
    const double lw = cfg.lane_width;
    const double r = uniform01(rng);
    if (r < 0.35) {
      agent.initial_pose = {{a + lw + 0.5 * lw, uniform(rng, 12.0, 50.0)}, 0.5 * std::numbers::pi};
      agent.speed = uniform(rng, 0.0, 8.0);
    } else if (r < 0.7) {
      agent.initial_pose = {{a + 0.5 * lw, uniform(rng, -50.0, -12.0)}, -0.5 * std::numbers::pi};
      agent.speed = uniform(rng, 0.0, 8.0);
    } else {
      agent.initial_pose = {{uniform(rng, -cfg.road_behind + 3.0, a - 3.0), lw}, std::numbers::pi};
      agent.speed = uniform(rng, 0.0, 6.0);
    }
  } else {
    const double spacing = (cfg.road_behind + cfg.road_ahead) / static_cast<double>(w.ego_lane.points.size() - 1);
    if (uniform01(rng) < 0.4) {
      agent.initial_pose = curve_pose(w.ego_lane, w.ego_lane_s0, spacing, uniform(rng, 8.0, 60.0), 0.0);
      agent.speed = uniform(rng, 0.0, 12.0);
    } else {
      const Pose2 p = curve_pose(w.ego_lane, w.ego_lane_s0, spacing, uniform(rng, 5.0, 80.0), cfg.lane_width);
      agent.initial_pose = {p.position, geom::normalize_angle(p.heading + std::numbers::pi)};
      agent.speed = uniform(rng, 2.0, 14.0);
    }
  }
  if (overlaps_existing(s, agent)) return std::nullopt;
  return agent;
}

std::optional<World> build_world(std::mt19937_64& rng, std::uint64_t seed, const GenConfig& cfg,
                                 const vocab::TrajectoryVocabulary& vocab) {
  World w;
  Scenario& s = w.s;
  s.seed = seed;
  s.ego_length = cfg.ego_length;
  s.ego_width = cfg.ego_width;
  const double kind_draw = uniform01(rng);
  if (kind_draw < cfg.turn_fraction) {
    s.kind = RoadKind::TJunction;
  } else if (kind_draw < cfg.turn_fraction + cfg.curved_fraction) {
    s.kind = RoadKind::Curved;
  } else {
    s.kind = RoadKind::Straight;
  }
  const double cap = s.kind == RoadKind::TJunction ? std::min(cfg.max_turn_speed, cfg.max_ego_speed) : cfg.max_ego_speed;
  s.ego_speed = pick_speed_level(rng, vocab.spec(), cap);
  const double dt = vocab.spec().dt;
  const double accel = std::min(uniform(rng, -1.0, 1.0), s.ego_speed / dt);
  const double v_prev = s.ego_speed - accel * dt;
  s.ego_history = {{{-(v_prev * dt + 0.5 * accel * dt * dt), 0.0}, v_prev, accel}, {{0.0, 0.0}, s.ego_speed, accel}};

  if (s.kind == RoadKind::TJunction) {
    build_junction(w, rng, cfg, uniform01(rng) < 0.5);
  } else {
    build_open_road(w, rng, cfg, vocab);
  }

  const auto count = static_cast<std::size_t>(uniform_index(rng, static_cast<std::uint64_t>(cfg.max_agents) + 1));
  for (std::size_t i = 0; i < count; ++i) {
    std::optional<Agent> placed;
    for (int tries = 0; tries < 16 && !placed; ++tries) placed = sample_agent(w, rng, cfg);
    if (!placed) return std::nullopt;
    s.agents.push_back(*placed);
  }
  return w;
}

constexpr std::uint16_t kPenaltyBits = (1U << static_cast<unsigned>(eval::Metric::NC)) |
                                       (1U << static_cast<unsigned>(eval::Metric::DAC)) |
                                       (1U << static_cast<unsigned>(eval::Metric::DDC)) |
                                       (1U << static_cast<unsigned>(eval::Metric::TLC));

std::size_t select_expert(const eval::RawScores& raw, const eval::EvaluatorConfig& cfg) {
  // Progress reference: the furthest penalty-clean entry that also passes
  // history comfort, else the furthest penalty-clean entry.
  constexpr std::uint16_t kHcBit = 1U << static_cast<unsigned>(eval::Metric::HC);
  double reference = -1.0;
  double comfortable = -1.0;
  for (std::size_t i = 0; i < raw.bits.size(); ++i) {
    if ((raw.bits[i] & kPenaltyBits) != kPenaltyBits) continue;
    reference = std::max(reference, raw.progress[i]);
    if ((raw.bits[i] & kHcBit) != 0) comfortable = std::max(comfortable, raw.progress[i]);
  }
  if (reference < 0.0) throw NoSafeTrajectory("every vocabulary entry violates a penalty rule");
  if (comfortable >= 0.0) reference = comfortable;
  const eval::MetricWeights weights = cfg.epdms_weights();
  std::size_t best = 0;
  double best_score = -1.0;
  double best_ep = -1.0;
  for (std::size_t i = 0; i < raw.bits.size(); ++i) {
    if ((raw.bits[i] & kPenaltyBits) != kPenaltyBits) continue;
    eval::LabelSet one;
    one.bits = {raw.bits[i]};
    one.ep = {reference < cfg.min_expert_progress ? 1.0 : std::clamp(raw.progress[i] / reference, 0.0, 1.0)};
    one.l2 = {0.0};
    const double score = one.aggregate(0, weights);
    if (score > best_score || (score == best_score && one.ep[0] > best_ep)) {
      best = i;
      best_score = score;
      best_ep = one.ep[0];
    }
  }
  if (!(best_score > 0.0)) throw NoSafeTrajectory("every vocabulary entry scores 0");
  return best;
}

}  // namespace

std::size_t expert_trajectory(const Scenario& s, const vocab::TrajectoryVocabulary& vocab) {
  const eval::EvaluatorConfig cfg;
  return select_expert(eval::score_vocabulary(s, vocab, cfg), cfg);
}

Scenario generate_scenario(std::uint64_t seed, const GenConfig& cfg, const vocab::TrajectoryVocabulary& vocab,
                           eval::LabelSet* labels_out) {
  cfg.validate();
  std::mt19937_64 rng(splitmix64(seed));
  const eval::EvaluatorConfig ecfg;
  for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
    std::optional<World> w = build_world(rng, seed, cfg, vocab);
    if (!w) continue;
    Scenario& s = w->s;
    const eval::RawScores raw = eval::score_vocabulary(s, vocab, ecfg);
    std::size_t idx = 0;
    try {
      idx = select_expert(raw, ecfg);
    } catch (const NoSafeTrajectory&) {
      continue;
    }
    s.expert = vocab[idx];
    s.expert_index = static_cast<std::int64_t>(idx);
    // Relabeling with the expert's own progress must keep it on top.
    eval::LabelSet labels = eval::make_labels(s, vocab, raw, ecfg);
    const double top = labels.epdms(idx, ecfg.ec_weight);
    bool consistent = true;
    for (std::size_t i = 0; i < labels.size() && consistent; ++i) {
      if (labels.epdms(i, ecfg.ec_weight) > top) consistent = false;
    }
    if (consistent) {
      if (labels_out != nullptr) *labels_out = std::move(labels);
      return s;
    }
  }
  throw GenerationFailed("no valid scenario for seed " + std::to_string(seed) + " after " +
                         std::to_string(cfg.max_attempts) + " attempts");
}

Scenario rotate_scenario(const Scenario& s, double theta) {
  const double angle = -theta;
  const Point2 o{0.0, 0.0};
  Scenario r = s;
  for (Agent& a : r.agents) {
    a.initial_pose.position = geom::rotate_point(a.initial_pose.position, o, angle);
    a.initial_pose.heading = geom::normalize_angle(a.initial_pose.heading + angle);
  }
  for (auto& cell : r.drivable) cell = geom::rotate_polygon(cell, o, angle);
  for (auto& lane : r.lanes) lane = geom::rotate_polyline(lane, o, angle);
  r.route = geom::rotate_polyline(s.route, o, angle);
  for (auto& light : r.lights) {
    light.a = geom::rotate_point(light.a, o, angle);
    light.b = geom::rotate_point(light.b, o, angle);
  }
  for (auto& h : r.ego_history) h.position = geom::rotate_point(h.position, o, angle);
  r.expert = geom::rotate_trajectory(s.expert, angle);
  if (theta != 0.0) r.expert_index = -1;
  return r;
}

Scenario mirror_scenario(const Scenario& s) {
  const auto m = [](Point2 p) { return Point2{p.x, -p.y}; };
  const auto mp = [&](const Pose2& p) { return Pose2{m(p.position), geom::normalize_angle(-p.heading)}; };
  Scenario r = s;
  for (Agent& a : r.agents) a.initial_pose = mp(a.initial_pose);
  for (auto& cell : r.drivable) {
    std::vector<Point2> v;
    for (auto it = cell.vertices().rbegin(); it != cell.vertices().rend(); ++it) v.push_back(m(*it));
    cell = ConvexPolygon(std::move(v));
  }
  for (auto& lane : r.lanes) {
    for (auto& p : lane.points) p = m(p);
  }
  for (auto& p : r.route.points) p = m(p);
  for (auto& light : r.lights) light = {m(light.b), m(light.a), light.state};
  for (auto& h : r.ego_history) h.position = m(h.position);
  r.expert.start = mp(s.expert.start);
  for (auto& w : r.expert.waypoints) w = mp(w);
  r.expert_index = -1;
  return r;
}

}  // namespace suprim::scenario

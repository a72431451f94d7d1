#include "suprim/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "suprim/errors.hpp"

namespace suprim::eval {

using geom::Point2;

const char* metric_name(Metric m) {
  switch (m) {
    case Metric::NC: return "nc";
    case Metric::DAC: return "dac";
    case Metric::DDC: return "ddc";
    case Metric::TLC: return "tlc";
    case Metric::EP: return "ep";
    case Metric::TTC: return "ttc";
    case Metric::LK: return "lk";
    case Metric::HC: return "hc";
    case Metric::EC: return "ec";
    case Metric::C: return "c";
  }
  return "?";
}

Metric metric_from_name(const std::string& name) {
  for (Metric m : kAllMetrics) {
    if (name == metric_name(m)) return m;
  }
  throw InvalidArgument("unknown metric '" + name + "'");
}

double SubscoreVector::get(Metric m) const {
  switch (m) {
    case Metric::NC: return nc;
    case Metric::DAC: return dac;
    case Metric::DDC: return ddc;
    case Metric::TLC: return tlc;
    case Metric::EP: return ep;
    case Metric::TTC: return ttc;
    case Metric::LK: return lk;
    case Metric::HC: return hc;
    case Metric::EC: return ec;
    case Metric::C: return c;
  }
  return 0.0;
}

void SubscoreVector::set(Metric m, double value) {
  switch (m) {
    case Metric::NC: nc = value; break;
    case Metric::DAC: dac = value; break;
    case Metric::DDC: ddc = value; break;
    case Metric::TLC: tlc = value; break;
    case Metric::EP: ep = value; break;
    case Metric::TTC: ttc = value; break;
    case Metric::LK: lk = value; break;
    case Metric::HC: hc = value; break;
    case Metric::EC: ec = value; break;
    case Metric::C: c = value; break;
  }
}

MetricWeights MetricWeights::pdms() {
  return {{Metric::NC, Metric::DAC}, {{Metric::EP, 5.0}, {Metric::TTC, 5.0}, {Metric::C, 2.0}}};
}

MetricWeights MetricWeights::epdms(double ec_weight) {
  return {{Metric::NC, Metric::DAC, Metric::DDC, Metric::TLC},
          {{Metric::EP, 5.0}, {Metric::TTC, 5.0}, {Metric::LK, 2.0}, {Metric::HC, 1.0}, {Metric::EC, ec_weight}}};
}

void MetricWeights::validate() const {
  if (averages.empty()) throw InvalidArgument("average set must not be empty");
  for (const auto& [m, w] : averages) {
    if (!(w > 0.0)) throw InvalidArgument("average weights must be positive");
    if (std::find(penalties.begin(), penalties.end(), m) != penalties.end()) {
      throw InvalidArgument("penalty and average sets must be disjoint");
    }
  }
}

double aggregate(const SubscoreVector& sub, const MetricWeights& w) {
  double product = 1.0;
  for (Metric m : w.penalties) product *= sub.get(m);
  double num = 0.0;
  double den = 0.0;
  for (const auto& [m, weight] : w.averages) {
    num += weight * sub.get(m);
    den += weight;
  }
  return product * (num / den);
}

// ---------------------------------------------------------------------------
// ScenarioIndex

ScenarioIndex::ScenarioIndex(const Scenario& s) : scenario_(&s) {
  for (const geom::Polyline& lane : s.lanes) {
    for (std::size_t i = 0; i + 1 < lane.points.size(); ++i) {
      const Point2 a = lane.points[i];
      const Point2 b = lane.points[i + 1];
      segments_.push_back({a, b, std::atan2(b.y - a.y, b.x - a.x)});
    }
  }
  double min_x = std::numeric_limits<double>::infinity();
  double min_y = min_x;
  double max_x = -min_x;
  double max_y = -min_x;
  const auto grow = [&](Point2 p) {
    min_x = std::min(min_x, p.x);
    min_y = std::min(min_y, p.y);
    max_x = std::max(max_x, p.x);
    max_y = std::max(max_y, p.y);
  };
  for (const auto& cell : s.drivable) {
    for (Point2 v : cell.vertices()) grow(v);
  }
  for (const auto& seg : segments_) {
    grow(seg.a);
    grow(seg.b);
  }
  if (!std::isfinite(min_x)) {
    min_x = min_y = -1.0;
    max_x = max_y = 1.0;
  }
  origin_x_ = min_x - cell_size_;
  origin_y_ = min_y - cell_size_;
  nx_ = static_cast<std::int64_t>(std::ceil((max_x - origin_x_) / cell_size_)) + 2;
  ny_ = static_cast<std::int64_t>(std::ceil((max_y - origin_y_) / cell_size_)) + 2;
  drivable_buckets_.assign(static_cast<std::size_t>(nx_ * ny_), {});
  segment_buckets_.assign(static_cast<std::size_t>(nx_ * ny_), {});

  constexpr double pad = 1e-6;
  const auto insert_box = [&](std::vector<std::vector<std::uint32_t>>& buckets, std::uint32_t id, double x0, double y0,
                              double x1, double y1) {
    for (std::int64_t cx = cell_x(x0 - pad); cx <= cell_x(x1 + pad); ++cx) {
      for (std::int64_t cy = cell_y(y0 - pad); cy <= cell_y(y1 + pad); ++cy) {
        buckets[bucket_of(cx, cy)].push_back(id);
      }
    }
  };
  for (std::uint32_t i = 0; i < s.drivable.size(); ++i) {
    double x0 = std::numeric_limits<double>::infinity(), y0 = x0, x1 = -x0, y1 = -x0;
    for (Point2 v : s.drivable[i].vertices()) {
      x0 = std::min(x0, v.x);
      y0 = std::min(y0, v.y);
      x1 = std::max(x1, v.x);
      y1 = std::max(y1, v.y);
    }
    insert_box(drivable_buckets_, i, x0, y0, x1, y1);
  }
  for (std::uint32_t i = 0; i < segments_.size(); ++i) {
    const auto& seg = segments_[i];
    insert_box(segment_buckets_, i, std::min(seg.a.x, seg.b.x), std::min(seg.a.y, seg.b.y), std::max(seg.a.x, seg.b.x),
               std::max(seg.a.y, seg.b.y));
  }
}

std::int64_t ScenarioIndex::cell_x(double x) const {
  return std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor((x - origin_x_) / cell_size_)), 0, nx_ - 1);
}

std::int64_t ScenarioIndex::cell_y(double y) const {
  return std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor((y - origin_y_) / cell_size_)), 0, ny_ - 1);
}

std::size_t ScenarioIndex::bucket_of(std::int64_t cx, std::int64_t cy) const {
  return static_cast<std::size_t>(cy * nx_ + cx);
}

bool ScenarioIndex::drivable(Point2 p) const {
  const double fx = (p.x - origin_x_) / cell_size_;
  const double fy = (p.y - origin_y_) / cell_size_;
  if (fx < 0.0 || fy < 0.0 || fx >= static_cast<double>(nx_) || fy >= static_cast<double>(ny_)) return false;
  const auto& bucket = drivable_buckets_[bucket_of(cell_x(p.x), cell_y(p.y))];
  const auto& cells = scenario_->drivable;
  return std::any_of(bucket.begin(), bucket.end(), [&](std::uint32_t i) { return cells[i].contains(p); });
}

ScenarioIndex::LaneHit ScenarioIndex::nearest_lane(Point2 p) const {
  double best = std::numeric_limits<double>::infinity();
  std::uint32_t best_id = std::numeric_limits<std::uint32_t>::max();
  const auto consider = [&](std::uint32_t id) {
    const auto& seg = segments_[id];
    const double d = geom::project_to_segment(p, seg.a, seg.b).distance;
    if (d < best || (d == best && id < best_id)) {
      best = d;
      best_id = id;
    }
  };
  if (segments_.empty()) return {std::numeric_limits<double>::infinity(), 0.0};
  const double fx = (p.x - origin_x_) / cell_size_;
  const double fy = (p.y - origin_y_) / cell_size_;
  const bool inside = fx >= 0.0 && fy >= 0.0 && fx < static_cast<double>(nx_) && fy < static_cast<double>(ny_);
  if (!inside) {
    for (std::uint32_t i = 0; i < segments_.size(); ++i) consider(i);
    return {best, segments_[best_id].direction};
  }
  const std::int64_t cx = cell_x(p.x);
  const std::int64_t cy = cell_y(p.y);
  const std::int64_t max_ring = std::max(nx_, ny_);
  for (std::int64_t r = 0; r <= max_ring; ++r) {
    for (std::int64_t x = cx - r; x <= cx + r; ++x) {
      for (std::int64_t y = cy - r; y <= cy + r; ++y) {
        if (std::max(std::abs(x - cx), std::abs(y - cy)) != r) continue;
        if (x < 0 || y < 0 || x >= nx_ || y >= ny_) continue;
        for (std::uint32_t id : segment_buckets_[bucket_of(x, y)]) consider(id);
      }
    }
    // Anything outside ring r is at least r cells away.
    if (best < static_cast<double>(r) * cell_size_) break;
  }
  return {best, segments_[best_id].direction};
}

// ---------------------------------------------------------------------------
// Rules

namespace {

constexpr double kThresholdSlack = 1e-9;

struct Quad {
  std::array<Point2, 4> v;
};

Quad make_quad(Point2 c, double heading, double length, double width) {
  const Point2 f = geom::unit_vector(heading);
  const Point2 l{-f.y, f.x};
  const double hl = 0.5 * length;
  const double hw = 0.5 * width;
  return {{c - hl * f - hw * l, c + hl * f - hw * l, c + hl * f + hw * l, c - hl * f + hw * l}};
}

double radius(double length, double width) { return 0.5 * std::hypot(length, width); }

bool quads_hit(const Quad& a, const Quad& b) { return geom::convex_intersect(a.v, b.v); }

bool collides_at(const Scenario& s, Point2 ego_pos, double ego_heading, double t) {
  const double ego_r = radius(s.ego_length, s.ego_width);
  const Quad* ego_quad = nullptr;
  Quad storage;
  for (const auto& agent : s.agents) {
    const geom::Pose2 ap = agent.pose_at(t);
    const double reach = ego_r + radius(agent.length, agent.width);
    if (geom::distance(ap.position, ego_pos) > reach) continue;
    if (ego_quad == nullptr) {
      storage = make_quad(ego_pos, ego_heading, s.ego_length, s.ego_width);
      ego_quad = &storage;
    }
    if (quads_hit(*ego_quad, make_quad(ap.position, ap.heading, agent.length, agent.width))) return true;
  }
  return false;
}

bool nc_ok(const Scenario& s, const Trajectory& t) {
  for (std::size_t k = 1; k <= t.waypoints.size(); ++k) {
    if (collides_at(s, t.position(k), t.heading(k), static_cast<double>(k) * t.dt)) return false;
  }
  return true;
}

bool ttc_ok(const Scenario& s, const Trajectory& t, const EvaluatorConfig& cfg) {
  if (s.agents.empty()) return true;
  const int steps = static_cast<int>(std::llround(cfg.ttc_horizon / cfg.ttc_substep));
  for (std::size_t k = 1; k <= t.waypoints.size(); ++k) {
    const Point2 p = t.position(k);
    const Point2 v = (1.0 / t.dt) * (p - t.position(k - 1));
    const double tk = static_cast<double>(k) * t.dt;
    for (int i = 1; i <= steps; ++i) {
      const double tau = static_cast<double>(i) * cfg.ttc_substep;
      if (collides_at(s, p + tau * v, t.heading(k), tk + tau)) return false;
    }
  }
  return true;
}

bool dac_ok(const ScenarioIndex& index, const Trajectory& t) {
  const Scenario& s = index.scenario();
  for (std::size_t k = 1; k <= t.waypoints.size(); ++k) {
    const Quad q = make_quad(t.position(k), t.heading(k), s.ego_length, s.ego_width);
    for (const Point2& v : q.v) {
      if (!index.drivable(v)) return false;
    }
  }
  return true;
}

void lane_checks(const ScenarioIndex& index, const Trajectory& t, const EvaluatorConfig& cfg, bool& ddc, bool& lk) {
  ddc = true;
  lk = true;
  const double max_dev = cfg.direction_threshold_deg * std::numbers::pi / 180.0;
  for (std::size_t k = 1; k <= t.waypoints.size(); ++k) {
    const auto hit = index.nearest_lane(t.position(k));
    if (hit.distance > cfg.lane_keep_threshold + kThresholdSlack) lk = false;
    if (std::abs(geom::normalize_angle(t.heading(k) - hit.direction)) > max_dev + kThresholdSlack) ddc = false;
  }
}

bool tlc_ok(const Scenario& s, const Trajectory& t) {
  for (const auto& light : s.lights) {
    if (light.state != scenario::LightState::Red) continue;
    for (std::size_t k = 1; k <= t.waypoints.size(); ++k) {
      if (geom::segments_intersect(t.position(k - 1), t.position(k), light.a, light.b)) return false;
    }
  }
  return true;
}

bool within(double value, double limit) { return std::abs(value) <= limit + kThresholdSlack; }

// Checks every finite-difference sample of the trajectory; with_history also
// prepends the current ego state so the first step's accel and jerk count.
bool comfort_ok(const Scenario& s, const Trajectory& t, const EvaluatorConfig& cfg, bool with_history) {
  const std::size_t n = t.waypoints.size();
  const double dt = t.dt;
  std::vector<double> speed(n + 1, 0.0);  // speed[k]: mean speed over step k (k >= 1)
  for (std::size_t k = 1; k <= n; ++k) {
    speed[k] = geom::distance(t.position(k), t.position(k - 1)) / dt;
    const double yaw_rate = geom::normalize_angle(t.heading(k) - t.heading(k - 1)) / dt;
    if (!within(yaw_rate, cfg.max_yaw_rate)) return false;
    if (!within(speed[k] * yaw_rate, cfg.max_lat_accel)) return false;
  }
  std::vector<double> accel;  // accel[i] between steps; history sample first when requested
  if (with_history) {
    const double hist_speed = std::max(0.0, s.ego_speed - 0.5 * s.ego_accel() * dt);
    accel.push_back((speed[1] - hist_speed) / dt);
  }
  for (std::size_t k = 1; k < n; ++k) accel.push_back((speed[k + 1] - speed[k]) / dt);
  for (double a : accel) {
    if (!within(a, cfg.max_long_accel)) return false;
  }
  for (std::size_t i = 1; i < accel.size(); ++i) {
    if (!within((accel[i] - accel[i - 1]) / dt, cfg.max_jerk)) return false;
  }
  return true;
}

bool ec_ok(const Trajectory& t, const EvaluatorConfig& cfg) {
  const std::size_t n = t.waypoints.size();
  const auto w = static_cast<std::size_t>(std::max<long long>(1, std::llround(cfg.ec_window / t.dt)));
  const auto velocity = [&](std::size_t k) { return (1.0 / t.dt) * (t.position(k) - t.position(k - 1)); };
  std::vector<Point2> window_accel;
  for (std::size_t j = 0; 1 + (j + 1) * w <= n; ++j) {
    window_accel.push_back((1.0 / (static_cast<double>(w) * t.dt)) * (velocity(1 + (j + 1) * w) - velocity(1 + j * w)));
  }
  for (std::size_t j = 1; j < window_accel.size(); ++j) {
    if (!within(geom::norm(window_accel[j] - window_accel[j - 1]), cfg.ec_max_change)) return false;
  }
  return true;
}

double ep_value(double progress, double reference, const EvaluatorConfig& cfg) {
  if (reference < cfg.min_expert_progress) return 1.0;
  return std::clamp(progress / reference, 0.0, 1.0);
}

double b(bool ok) { return ok ? 1.0 : 0.0; }

}  // namespace

double route_progress(const Scenario& s, const Trajectory& t) {
  if (s.route.points.size() < 2 || t.waypoints.empty()) return 0.0;
  return geom::project_to_polyline(t.waypoints.back().position, s.route).arc_length;
}

double score_nc(const Scenario& s, const Trajectory& t) { return b(nc_ok(s, t)); }

double score_dac(const Scenario& s, const Trajectory& t) { return b(dac_ok(ScenarioIndex(s), t)); }

double score_ddc(const Scenario& s, const Trajectory& t, const EvaluatorConfig& cfg) {
  bool ddc = true, lk = true;
  lane_checks(ScenarioIndex(s), t, cfg, ddc, lk);
  return b(ddc);
}

double score_tlc(const Scenario& s, const Trajectory& t) { return b(tlc_ok(s, t)); }

double score_ep(const Scenario& s, const Trajectory& t, const EvaluatorConfig& cfg) {
  return ep_value(route_progress(s, t), route_progress(s, s.expert), cfg);
}

double score_ttc(const Scenario& s, const Trajectory& t, const EvaluatorConfig& cfg) { return b(ttc_ok(s, t, cfg)); }

double score_comfort(const Scenario& s, const Trajectory& t, const EvaluatorConfig& cfg) {
  return b(comfort_ok(s, t, cfg, false));
}

double score_hc(const Scenario& s, const Trajectory& t, const EvaluatorConfig& cfg) {
  return b(comfort_ok(s, t, cfg, true));
}

double score_lk(const Scenario& s, const Trajectory& t, const EvaluatorConfig& cfg) {
  bool ddc = true, lk = true;
  lane_checks(ScenarioIndex(s), t, cfg, ddc, lk);
  return b(lk);
}

double score_ec(const Scenario&, const Trajectory& t, const EvaluatorConfig& cfg) { return b(ec_ok(t, cfg)); }

SubscoreVector score_all(const ScenarioIndex& index, const Trajectory& t, double reference_progress,
                         const EvaluatorConfig& cfg) {
  const Scenario& s = index.scenario();
  SubscoreVector out;
  out.nc = b(nc_ok(s, t));
  out.dac = b(dac_ok(index, t));
  bool ddc = true, lk = true;
  lane_checks(index, t, cfg, ddc, lk);
  out.ddc = b(ddc);
  out.lk = b(lk);
  out.tlc = b(tlc_ok(s, t));
  out.ep = ep_value(route_progress(s, t), reference_progress, cfg);
  out.ttc = b(ttc_ok(s, t, cfg));
  out.c = b(comfort_ok(s, t, cfg, false));
  out.hc = out.c == 1.0 ? b(comfort_ok(s, t, cfg, true)) : 0.0;
  out.ec = b(ec_ok(t, cfg));
  return out;
}

SubscoreVector score_all(const Scenario& s, const Trajectory& t, const EvaluatorConfig& cfg) {
  const ScenarioIndex index(s);
  return score_all(index, t, route_progress(s, s.expert), cfg);
}

}  // namespace suprim::eval

#include "suprim/observe.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "suprim/errors.hpp"
#include "suprim/evaluator.hpp"

namespace suprim::scenario {

const char* to_string(TokenKind kind) {
  switch (kind) {
    case TokenKind::Ego: return "ego";
    case TokenKind::Agent: return "agent";
    case TokenKind::LanePoint: return "lane_point";
    case TokenKind::Light: return "light";
    case TokenKind::BoundaryPoint: return "boundary_point";
  }
  return "?";
}

double camera_halfangle(int cameras) {
  switch (cameras) {
    case 1: return std::numbers::pi / 3.0;
    case 3: return 0.75 * std::numbers::pi;
    case 5: return std::numbers::pi;
    default: throw InvalidArgument("camera count must be 1, 3 or 5");
  }
}

int route_command(const Scenario& s) {
  const auto& pts = s.route.points;
  if (pts.size() < 2 || s.route.length() < 1e-6) return 0;
  const double start = std::atan2(pts[1].y - pts[0].y, pts[1].x - pts[0].x);
  const double ahead = geom::polyline_pose_at(s.route, 20.0).heading;
  const double change = geom::normalize_angle(ahead - start);
  constexpr double kTurn = std::numbers::pi / 4.0;
  if (change > kTurn) return 1;
  if (change < -kTurn) return -1;
  return 0;
}

namespace {

constexpr double kScale = 30.0;

bool in_fov(Point2 p, double half) {
  if (half >= std::numbers::pi) return true;
  if (p.x == 0.0 && p.y == 0.0) return true;
  return std::abs(std::atan2(p.y, p.x)) <= half;
}

Token make(TokenKind kind, Point2 src, std::initializer_list<double> rest) {
  Token t;
  t.kind = kind;
  t.source = src;
  t.feature[0] = src.x / kScale;
  t.feature[1] = src.y / kScale;
  std::size_t i = 2;
  for (double v : rest) t.feature[i++] = v;
  return t;
}

// Samples at fixed arc-length spacing from the start of the polyline.
std::vector<std::pair<Point2, double>> sample_polyline(const Polyline& line, double spacing) {
  std::vector<std::pair<Point2, double>> out;
  double carried = 0.0;  // arc length until the next sample
  for (std::size_t i = 0; i + 1 < line.points.size(); ++i) {
    const Point2 a = line.points[i];
    const Point2 b = line.points[i + 1];
    const double len = geom::distance(a, b);
    if (len <= 0.0) continue;
    const double dir = std::atan2(b.y - a.y, b.x - a.x);
    double at = carried;
    while (at < len) {
      out.emplace_back(a + (at / len) * (b - a), dir);
      at += spacing;
    }
    carried = at - len;
  }
  return out;
}

void keep_nearest(std::vector<Token>& tokens, std::size_t cap) {
  const auto key = [](const Token& t) {
    return std::make_tuple(geom::norm(t.source), std::atan2(t.source.y, t.source.x));
  };
  std::stable_sort(tokens.begin(), tokens.end(), [&](const Token& a, const Token& b) { return key(a) < key(b); });
  if (tokens.size() > cap) tokens.resize(cap);
}

}  // namespace

ObservationTokens observe(const Scenario& s, double fov_halfangle, const ObserveConfig& cfg) {
  if (!(fov_halfangle > 0.0 && fov_halfangle <= std::numbers::pi)) {
    throw InvalidArgument("fov half-angle must be in (0, pi]");
  }
  ObservationTokens out;
  out.fov_halfangle = fov_halfangle;
  const int cmd = route_command(s);
  Token ego;
  ego.kind = TokenKind::Ego;
  ego.feature = {s.ego_speed / 10.0, s.ego_accel() / 3.0, cmd > 0 ? 1.0 : 0.0, cmd == 0 ? 1.0 : 0.0,
                 cmd < 0 ? 1.0 : 0.0, 0.0, 0.0, 0.0};
  out.tokens.push_back(ego);

  const auto visible = [&](Point2 p) { return in_fov(p, fov_halfangle) && geom::norm(p) <= cfg.max_range; };

  std::vector<Token> agents;
  for (const Agent& a : s.agents) {
    const Point2 p = a.initial_pose.position;
    if (!visible(p)) continue;
    const Point2 v = a.speed * geom::unit_vector(a.initial_pose.heading);
    agents.push_back(make(TokenKind::Agent, p,
                          {std::cos(a.initial_pose.heading), std::sin(a.initial_pose.heading), v.x / 10.0, v.y / 10.0,
                           a.length / 5.0, a.width / 2.0}));
  }
  keep_nearest(agents, agents.size());

  std::vector<Token> lanes;
  for (const Polyline& lane : s.lanes) {
    for (const auto& [p, dir] : sample_polyline(lane, cfg.lane_spacing)) {
      if (!visible(p)) continue;
      const bool on_route =
          s.route.points.size() >= 2 && geom::project_to_polyline(p, s.route).distance < 0.3;
      lanes.push_back(make(TokenKind::LanePoint, p, {std::cos(dir), std::sin(dir), on_route ? 1.0 : 0.0}));
    }
  }
  keep_nearest(lanes, cfg.max_lane_points);

  std::vector<Token> lights;
  for (const TrafficLight& l : s.lights) {
    const Point2 mid = 0.5 * (l.a + l.b);
    if (!visible(mid)) continue;
    const Point2 d = l.b - l.a;
    const double travel = std::atan2(d.x, -d.y);  // (b - a) rotated by +90 degrees
    lights.push_back(make(TokenKind::Light, mid,
                          {std::cos(travel), std::sin(travel), l.state == LightState::Red ? 1.0 : 0.0, 1.0}));
  }
  keep_nearest(lights, lights.size());

  std::vector<Token> boundary;
  const eval::ScenarioIndex index(s);
  for (const ConvexPolygon& cell : s.drivable) {
    const auto& v = cell.vertices();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const Point2 a = v[i];
      const Point2 b = v[(i + 1) % v.size()];
      const double len = geom::distance(a, b);
      if (len <= 0.0) continue;
      const Point2 outward{(b.y - a.y) / len, -(b.x - a.x) / len};  // right of a CCW edge
      const auto n = static_cast<std::size_t>(std::floor(len / cfg.boundary_spacing));
      for (std::size_t k = 0; k <= n; ++k) {
        const double t = (static_cast<double>(k) * cfg.boundary_spacing + 0.5 * (len - static_cast<double>(n) * cfg.boundary_spacing)) / len;
        const Point2 p = a + t * (b - a);
        if (!visible(p)) continue;
        if (index.drivable(p + 0.05 * outward)) continue;
        boundary.push_back(make(TokenKind::BoundaryPoint, p, {}));
      }
    }
  }
  keep_nearest(boundary, cfg.max_boundary_points);

  for (auto* group : {&agents, &lanes, &lights, &boundary}) {
    out.tokens.insert(out.tokens.end(), group->begin(), group->end());
  }
  return out;
}

}  // namespace suprim::scenario

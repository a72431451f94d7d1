#include "suprim/geom.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include "suprim/errors.hpp"

namespace suprim::geom {

double normalize_angle(double angle) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double a = std::remainder(angle, two_pi);
  if (a <= -std::numbers::pi) a += two_pi;
  return a;
}

void validate(const Trajectory& t, double max_speed) {
  if (t.waypoints.size() < 2) throw InvalidArgument("trajectory needs at least 2 waypoints");
  if (!(t.dt > 0.0)) throw InvalidArgument("trajectory dt must be positive");
  const double max_step = max_speed * t.dt + 1e-9;
  for (std::size_t i = 1; i <= t.waypoints.size(); ++i) {
    const Point2 a = t.position(i - 1);
    const Point2 b = t.position(i);
    if (!std::isfinite(b.x) || !std::isfinite(b.y)) throw InvalidArgument("non-finite waypoint");
    if (distance(a, b) > max_step) {
      throw InvalidArgument("waypoint step " + std::to_string(i) + " exceeds max speed");
    }
  }
}

ConvexPolygon::ConvexPolygon(std::vector<Point2> vertices) : vertices_(std::move(vertices)) {
  if (vertices_.size() < 3) throw InvalidArgument("polygon needs at least 3 vertices");
  if (!is_ccw_convex()) throw InvalidArgument("polygon must be strictly convex and CCW");
}

double ConvexPolygon::area() const {
  double twice = 0.0;
  const std::size_t n = vertices_.size();
  for (std::size_t i = 0; i < n; ++i) twice += cross(vertices_[i], vertices_[(i + 1) % n]);
  return 0.5 * twice;
}

bool ConvexPolygon::is_ccw_convex() const {
  const std::size_t n = vertices_.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i) {
    const Point2 e0 = vertices_[(i + 1) % n] - vertices_[i];
    const Point2 e1 = vertices_[(i + 2) % n] - vertices_[(i + 1) % n];
    if (!(cross(e0, e1) > 0.0)) return false;
  }
  return true;
}

bool ConvexPolygon::contains(Point2 p) const {
  const std::size_t n = vertices_.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point2 a = vertices_[i];
    const Point2 edge = vertices_[(i + 1) % n] - a;
    if (cross(edge, p - a) < -kBoundaryEps * norm(edge)) return false;
  }
  return true;
}

Point2 rotate_point(Point2 p, Point2 center, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  const Point2 d = p - center;
  return {c * d.x - s * d.y + center.x, s * d.x + c * d.y + center.y};
}

ConvexPolygon rotate_polygon(const ConvexPolygon& poly, Point2 center, double angle) {
  std::vector<Point2> out;
  out.reserve(poly.vertices().size());
  for (const Point2& v : poly.vertices()) out.push_back(rotate_point(v, center, angle));
  return ConvexPolygon(std::move(out));
}

Trajectory rotate_trajectory(const Trajectory& t, double angle) {
  Trajectory out = t;
  const Point2 center = t.start.position;
  out.start.heading = normalize_angle(t.start.heading + angle);
  for (Pose2& w : out.waypoints) {
    w.position = rotate_point(w.position, center, angle);
    w.heading = normalize_angle(w.heading + angle);
  }
  return out;
}

double turning_angle(const Trajectory& t) {
  if (t.waypoints.empty()) throw DegenerateTrajectory("empty trajectory");
  const Point2 d = t.waypoints.back().position - t.start.position;
  if (norm(d) < 0.1) throw DegenerateTrajectory("total displacement below 0.1 m");
  const double rel = normalize_angle(std::atan2(d.y, d.x) - t.start.heading);
  return rel * 180.0 / std::numbers::pi;
}

ConvexPolygon footprint(const Pose2& pose, double length, double width) {
  const Point2 f = unit_vector(pose.heading);
  const Point2 l{-f.y, f.x};
  const Point2 c = pose.position;
  const double hl = 0.5 * length;
  const double hw = 0.5 * width;
  return ConvexPolygon({c - hl * f - hw * l, c + hl * f - hw * l, c + hl * f + hw * l, c - hl * f + hw * l});
}

namespace {

// True when some edge normal of `va` separates the closed polygons.
bool has_separating_axis(std::span<const Point2> va, std::span<const Point2> vb) {
  const std::size_t n = va.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point2 edge = va[(i + 1) % n] - va[i];
    const Point2 axis{edge.y, -edge.x};
    double min_a = std::numeric_limits<double>::infinity();
    double max_a = -min_a;
    for (const Point2& v : va) {
      const double p = dot(axis, v);
      min_a = std::min(min_a, p);
      max_a = std::max(max_a, p);
    }
    double min_b = std::numeric_limits<double>::infinity();
    double max_b = -min_b;
    for (const Point2& v : vb) {
      const double p = dot(axis, v);
      min_b = std::min(min_b, p);
      max_b = std::max(max_b, p);
    }
    const double slack = kBoundaryEps * norm(axis);
    if (max_a < min_b - slack || max_b < min_a - slack) return true;
  }
  return false;
}

}  // namespace

bool convex_intersect(std::span<const Point2> a, std::span<const Point2> b) {
  return !has_separating_axis(a, b) && !has_separating_axis(b, a);
}

bool polygons_intersect(const ConvexPolygon& a, const ConvexPolygon& b) {
  return convex_intersect(a.vertices(), b.vertices());
}

bool point_in_region(Point2 p, std::span<const ConvexPolygon> region) {
  return std::any_of(region.begin(), region.end(), [p](const ConvexPolygon& c) { return c.contains(p); });
}

bool segments_intersect(Point2 a0, Point2 a1, Point2 b0, Point2 b1) {
  const auto orient = [](Point2 p, Point2 q, Point2 r) { return cross(q - p, r - p); };
  const auto on_segment = [](Point2 p, Point2 q, Point2 r) {
    return std::min(p.x, q.x) - kBoundaryEps <= r.x && r.x <= std::max(p.x, q.x) + kBoundaryEps &&
           std::min(p.y, q.y) - kBoundaryEps <= r.y && r.y <= std::max(p.y, q.y) + kBoundaryEps;
  };
  const double d1 = orient(b0, b1, a0);
  const double d2 = orient(b0, b1, a1);
  const double d3 = orient(a0, a1, b0);
  const double d4 = orient(a0, a1, b1);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) return true;
  if (d1 == 0 && on_segment(b0, b1, a0)) return true;
  if (d2 == 0 && on_segment(b0, b1, a1)) return true;
  if (d3 == 0 && on_segment(a0, a1, b0)) return true;
  if (d4 == 0 && on_segment(a0, a1, b1)) return true;
  return false;
}

SegmentProjection project_to_segment(Point2 p, Point2 a, Point2 b) {
  const Point2 ab = b - a;
  const double len2 = dot(ab, ab);
  double t = len2 > 0.0 ? dot(p - a, ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return {distance(p, a + t * ab), t};
}

double Polyline::length() const {
  double total = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) total += distance(points[i - 1], points[i]);
  return total;
}

PolylineProjection project_to_polyline(Point2 p, const Polyline& line) {
  PolylineProjection best;
  best.distance = std::numeric_limits<double>::infinity();
  if (line.points.size() == 1) {
    best.distance = distance(p, line.points.front());
    return best;
  }
  double cumulative = 0.0;
  for (std::size_t i = 0; i + 1 < line.points.size(); ++i) {
    const Point2 a = line.points[i];
    const Point2 b = line.points[i + 1];
    const double seg = distance(a, b);
    const SegmentProjection sp = project_to_segment(p, a, b);
    if (sp.distance < best.distance) {
      best.distance = sp.distance;
      best.arc_length = cumulative + sp.t * seg;
      best.direction = std::atan2(b.y - a.y, b.x - a.x);
      best.segment = i;
    }
    cumulative += seg;
  }
  return best;
}

Pose2 polyline_pose_at(const Polyline& line, double s) {
  if (line.points.size() < 2) throw InvalidArgument("polyline needs two points");
  double remaining = std::max(0.0, s);
  for (std::size_t i = 0; i + 1 < line.points.size(); ++i) {
    const Point2 a = line.points[i];
    const Point2 b = line.points[i + 1];
    const double seg = distance(a, b);
    const bool last = i + 2 == line.points.size();
    if (remaining <= seg || last) {
      const double t = seg > 0.0 ? std::min(remaining / seg, 1.0) : 0.0;
      return {a + t * (b - a), std::atan2(b.y - a.y, b.x - a.x)};
    }
    remaining -= seg;
  }
  return {line.points.back(), 0.0};
}

Polyline rotate_polyline(const Polyline& line, Point2 center, double angle) {
  Polyline out;
  out.points.reserve(line.points.size());
  for (const Point2& p : line.points) out.points.push_back(rotate_point(p, center, angle));
  return out;
}

}  // namespace suprim::geom

#pragma once

// 2D rigid-frame geometry in the ego frame: x forward, y left, angles CCW.

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

namespace suprim::geom {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Point2 operator*(double s, Point2 p) { return {s * p.x, s * p.y}; }
  friend Point2 operator*(Point2 p, double s) { return {s * p.x, s * p.y}; }
  friend bool operator==(Point2, Point2) = default;
};

inline double dot(Point2 a, Point2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Point2 a, Point2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Point2 p) { return std::hypot(p.x, p.y); }
inline double distance(Point2 a, Point2 b) { return norm(a - b); }
inline Point2 unit_vector(double angle) { return {std::cos(angle), std::sin(angle)}; }

/// Wraps an angle into (-pi, pi].
double normalize_angle(double angle);

struct Pose2 {
  Point2 position;
  double heading = 0.0;

  friend bool operator==(const Pose2&, const Pose2&) = default;
};

/// Timed waypoint sequence. waypoints[j] is the pose at time (j + 1) * dt;
/// start is the pose at time 0 (u_0).
struct Trajectory {
  double dt = 0.5;
  Pose2 start;
  std::vector<Pose2> waypoints;

  friend bool operator==(const Trajectory&, const Trajectory&) = default;

  /// Position at sample index i, where 0 is the start and i >= 1 are waypoints.
  Point2 position(std::size_t i) const { return i == 0 ? start.position : waypoints[i - 1].position; }
  double heading(std::size_t i) const { return i == 0 ? start.heading : waypoints[i - 1].heading; }
};

/// Throws InvalidArgument when the trajectory breaks its invariants
/// (fewer than 2 waypoints, dt <= 0, a step longer than max_speed * dt).
void validate(const Trajectory& t, double max_speed = 20.0);

class ConvexPolygon {
 public:
  ConvexPolygon() = default;
  /// Vertices must be counter-clockwise and strictly convex.
  explicit ConvexPolygon(std::vector<Point2> vertices);

  const std::vector<Point2>& vertices() const { return vertices_; }
  double area() const;
  /// Closed containment: boundary points count as inside.
  bool contains(Point2 p) const;
  bool is_ccw_convex() const;

  friend bool operator==(const ConvexPolygon&, const ConvexPolygon&) = default;

 private:
  std::vector<Point2> vertices_;
};

/// Numerical slack for closed-region predicates (meters).
inline constexpr double kBoundaryEps = 1e-9;

Point2 rotate_point(Point2 p, Point2 center, double angle);
ConvexPolygon rotate_polygon(const ConvexPolygon& poly, Point2 center, double angle);

/// Rotates every waypoint about t.start.position; headings shift by angle.
Trajectory rotate_trajectory(const Trajectory& t, double angle);

/// Signed angle (degrees, + = left) between the start heading and the chord
/// from u_0 to the final waypoint. Throws DegenerateTrajectory below 0.1 m.
double turning_angle(const Trajectory& t);

ConvexPolygon footprint(const Pose2& pose, double length, double width);

/// Separating-axis test on closed polygons.
bool polygons_intersect(const ConvexPolygon& a, const ConvexPolygon& b);

/// Same test on raw CCW vertex lists; skips polygon validation.
bool convex_intersect(std::span<const Point2> a, std::span<const Point2> b);

bool point_in_region(Point2 p, std::span<const ConvexPolygon> region);

bool segments_intersect(Point2 a0, Point2 a1, Point2 b0, Point2 b1);

struct SegmentProjection {
  double distance = 0.0;
  double t = 0.0;  // clamped parameter along the segment in [0, 1]
};
SegmentProjection project_to_segment(Point2 p, Point2 a, Point2 b);

/// Open polyline; vertex order carries direction.
struct Polyline {
  std::vector<Point2> points;

  friend bool operator==(const Polyline&, const Polyline&) = default;

  double length() const;
};

struct PolylineProjection {
  double arc_length = 0.0;
  double distance = 0.0;
  double direction = 0.0;  // heading of the closest segment
  std::size_t segment = 0;
};

/// Closest point on a polyline (ties go to the earliest segment).
PolylineProjection project_to_polyline(Point2 p, const Polyline& line);

/// Point at arc length s (clamped to the ends) and the local heading.
Pose2 polyline_pose_at(const Polyline& line, double s);

Polyline rotate_polyline(const Polyline& line, Point2 center, double angle);

}  // namespace suprim::geom

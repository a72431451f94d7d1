#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "suprim/errors.hpp"
#include "suprim/geom.hpp"

using namespace suprim;
using namespace suprim::geom;

namespace {

constexpr double kPi = std::numbers::pi;

void check_point(Point2 p, double x, double y, double tol = 1e-12) {
  CHECK(std::abs(p.x - x) <= tol);
  CHECK(std::abs(p.y - y) <= tol);
}

Trajectory line(std::initializer_list<Point2> pts, Pose2 start = {}) {
  Trajectory t;
  t.start = start;
  for (Point2 p : pts) t.waypoints.push_back({p, 0.0});
  return t;
}

// occupancy overlap of two rectangles on a 1 cm grid
bool raster_overlap(const ConvexPolygon& a, const ConvexPolygon& b) {
  double lo_x = 1e9, lo_y = 1e9, hi_x = -1e9, hi_y = -1e9;
  for (Point2 p : a.vertices()) {
    lo_x = std::min(lo_x, p.x);
    lo_y = std::min(lo_y, p.y);
    hi_x = std::max(hi_x, p.x);
    hi_y = std::max(hi_y, p.y);
  }
  const double step = 0.01;
  for (double x = std::floor(lo_x / step) * step; x <= hi_x; x += step) {
    for (double y = std::floor(lo_y / step) * step; y <= hi_y; y += step) {
      if (a.contains({x, y}) && b.contains({x, y})) return true;
    }
  }
  return false;
}

// signed gap between two convex polygons along the best separating axis
double separation(const ConvexPolygon& a, const ConvexPolygon& b) {
  double best = -1e9;
  for (const ConvexPolygon* poly : {&a, &b}) {
    const auto& v = poly->vertices();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const Point2 e = v[(i + 1) % v.size()] - v[i];
      const Point2 n = Point2{e.y, -e.x} * (1.0 / norm(e));
      double amin = 1e9, amax = -1e9, bmin = 1e9, bmax = -1e9;
      for (Point2 p : a.vertices()) {
        amin = std::min(amin, dot(p, n));
        amax = std::max(amax, dot(p, n));
      }
      for (Point2 p : b.vertices()) {
        bmin = std::min(bmin, dot(p, n));
        bmax = std::max(bmax, dot(p, n));
      }
      best = std::max(best, std::max(bmin - amax, amin - bmax));
    }
  }
  return best;
}

}  // namespace

TEST_CASE("rotate_point examples") {
  check_point(rotate_point({2, 0}, {0, 0}, 0.0), 2, 0);
  check_point(rotate_point({2, 0}, {0, 0}, -kPi / 2), 0, -2);
  check_point(rotate_point({1, 1}, {1, 0}, kPi), 1, -1);
}

TEST_CASE("rotate_point inverse") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-50, 50);
  for (int i = 0; i < 1000; ++i) {
    const Point2 p{u(rng), u(rng)};
    const Point2 c{u(rng), u(rng)};
    const double a = u(rng) / 10.0;
    const Point2 q = rotate_point(rotate_point(p, c, a), c, -a);
    CHECK(std::abs(q.x - p.x) <= 1e-12 * 100);
    CHECK(std::abs(q.y - p.y) <= 1e-12 * 100);
  }
}

TEST_CASE("rotate_trajectory") {
  const Trajectory t = line({{1, 0}, {2, 0}});
  CHECK(rotate_trajectory(t, 0.0) == t);
  const Trajectory r = rotate_trajectory(t, -kPi / 2);
  check_point(r.waypoints[0].position, 0, -1);
  check_point(r.waypoints[1].position, 0, -2);
  CHECK(r.dt == t.dt);
  CHECK(r.start.heading == doctest::Approx(-kPi / 2));

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int k = 0; k < 50; ++k) {
    Trajectory x;
    x.start = {{u(rng), u(rng)}, 0.3};
    Point2 p = x.start.position;
    for (int j = 0; j < 8; ++j) {
      p = p + Point2{1.0 + 0.1 * u(rng), 0.2 * u(rng)};
      x.waypoints.push_back({p, 0.1 * u(rng)});
    }
    const double a = u(rng);
    const Trajectory back = rotate_trajectory(rotate_trajectory(x, a), -a);
    for (std::size_t j = 0; j < x.waypoints.size(); ++j) {
      CHECK(std::abs(back.waypoints[j].position.x - x.waypoints[j].position.x) <= 1e-12);
      CHECK(std::abs(back.waypoints[j].position.y - x.waypoints[j].position.y) <= 1e-12);
    }
    CHECK(turning_angle(rotate_trajectory(x, a)) == doctest::Approx(turning_angle(x)).epsilon(1e-9));
  }
}

TEST_CASE("turning_angle") {
  CHECK(turning_angle(line({{1, 0}, {2, 0}})) == doctest::Approx(0.0));
  CHECK(turning_angle(line({{1, 0.5}, {0, 3}})) == doctest::Approx(90.0));
  const Trajectory t = line({{2, 0.3}, {4, 1.5}});
  const Trajectory m = line({{2, -0.3}, {4, -1.5}});
  CHECK(turning_angle(m) == doctest::Approx(-turning_angle(t)));
  CHECK(turning_angle(line({{1, 0}, {-1, 0}})) == doctest::Approx(180.0));
  CHECK_THROWS_AS(turning_angle(line({{0.01, 0}, {0.05, 0}})), DegenerateTrajectory);
}

TEST_CASE("trajectory validation") {
  CHECK_NOTHROW(validate(line({{1, 0}, {2, 0}})));
  CHECK_THROWS_AS(validate(line({{1, 0}})), InvalidArgument);
  Trajectory t = line({{1, 0}, {2, 0}});
  t.dt = 0.0;
  CHECK_THROWS_AS(validate(t), InvalidArgument);
  CHECK_THROWS_AS(validate(line({{1, 0}, {40, 0}})), InvalidArgument);
}

TEST_CASE("footprint") {
  const ConvexPolygon a = footprint({{0, 0}, 0.0}, 4, 2);
  for (Point2 p : a.vertices()) {
    CHECK(std::abs(std::abs(p.x) - 2) < 1e-12);
    CHECK(std::abs(std::abs(p.y) - 1) < 1e-12);
  }
  const ConvexPolygon b = footprint({{0, 0}, kPi / 2}, 4, 2);
  for (Point2 p : b.vertices()) {
    CHECK(std::abs(std::abs(p.x) - 1) < 1e-12);
    CHECK(std::abs(std::abs(p.y) - 2) < 1e-12);
  }
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-10, 10);
  for (int i = 0; i < 200; ++i) {
    const double len = 1 + std::abs(u(rng)) / 2;
    const double wid = 0.5 + std::abs(u(rng)) / 5;
    const ConvexPolygon f = footprint({{u(rng), u(rng)}, u(rng)}, len, wid);
    CHECK(f.area() == doctest::Approx(len * wid).epsilon(1e-12));
    CHECK(f.is_ccw_convex());
  }
}

TEST_CASE("polygon construction rejects clockwise input") {
  CHECK_THROWS_AS(ConvexPolygon({{0, 0}, {0, 1}, {1, 1}, {1, 0}}), InvalidArgument);
  CHECK_THROWS_AS(ConvexPolygon({{0, 0}, {1, 0}}), InvalidArgument);
}

TEST_CASE("polygons_intersect examples") {
  const ConvexPolygon a = footprint({{0, 0}, 0}, 1, 1);
  const ConvexPolygon b = footprint({{3, 0}, 0}, 1, 1);
  CHECK_FALSE(polygons_intersect(a, b));
  CHECK(polygons_intersect(a, a));
  // touching edges count as contact
  CHECK(polygons_intersect(a, footprint({{1, 0}, 0}, 1, 1)));
}

TEST_CASE("polygons_intersect matches a 1 cm raster oracle") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> pos(-3, 3);
  std::uniform_real_distribution<double> size(0.3, 2.5);
  std::uniform_real_distribution<double> ang(-kPi, kPi);
  int compared = 0;
  int hits = 0;
  for (int i = 0; i < 1000; ++i) {
    const ConvexPolygon a = footprint({{pos(rng), pos(rng)}, ang(rng)}, size(rng), size(rng));
    const ConvexPolygon b = footprint({{pos(rng), pos(rng)}, ang(rng)}, size(rng), size(rng));
    const bool sat = polygons_intersect(a, b);
    CHECK(sat == polygons_intersect(b, a));
    // the raster cannot resolve near-contact; skip pairs within two cells
    if (std::abs(separation(a, b)) < 0.03) continue;
    ++compared;
    hits += sat ? 1 : 0;
    CHECK(sat == raster_overlap(a, b));
  }
  CHECK(compared > 900);
  CHECK(hits > 50);
  CHECK(hits < compared - 50);
}

TEST_CASE("point_in_region") {
  const std::vector<ConvexPolygon> region = {footprint({{0, 0}, 0}, 1, 1)};
  CHECK(point_in_region({0, 0}, region));
  CHECK_FALSE(point_in_region({5, 5}, region));
  CHECK(point_in_region({0.5, 0}, region));
  CHECK_FALSE(point_in_region({0.5 + 1e-6, 0}, region));
}

TEST_CASE("segments and polylines") {
  CHECK(segments_intersect({0, 0}, {2, 2}, {0, 2}, {2, 0}));
  CHECK_FALSE(segments_intersect({0, 0}, {1, 0}, {0, 1}, {1, 1}));
  const auto sp = project_to_segment({1, 1}, {0, 0}, {2, 0});
  CHECK(sp.distance == doctest::Approx(1.0));
  CHECK(sp.t == doctest::Approx(0.5));
  const Polyline pl{{{0, 0}, {10, 0}, {10, 10}}};
  CHECK(pl.length() == doctest::Approx(20.0));
  const auto pp = project_to_polyline({12, 5}, pl);
  CHECK(pp.arc_length == doctest::Approx(15.0));
  CHECK(pp.distance == doctest::Approx(2.0));
  CHECK(pp.direction == doctest::Approx(kPi / 2));
  const Pose2 at = polyline_pose_at(pl, 5.0);
  CHECK(at.position.x == doctest::Approx(5.0));
  CHECK(at.heading == doctest::Approx(0.0));
}

TEST_CASE("normalize_angle range") {
  CHECK(normalize_angle(kPi) == doctest::Approx(kPi));
  CHECK(normalize_angle(-kPi) == doctest::Approx(kPi));
  CHECK(normalize_angle(3 * kPi / 2) == doctest::Approx(-kPi / 2));
}

#pragma once

// Hand-built scenes for rule tests.

#include <algorithm>
#include <cmath>
#include <vector>

#include "suprim/geom.hpp"
#include "suprim/scenario.hpp"

namespace suprim::testing {

using geom::Point2;
using geom::Pose2;
using geom::Trajectory;

/// Straight trajectory at constant speed with the given lateral offset.
inline Trajectory constant_speed_line(double speed, double offset = 0.0, std::size_t n = 8, double dt = 0.5) {
  Trajectory t;
  t.dt = dt;
  t.start = {{0.0, offset}, 0.0};
  for (std::size_t j = 1; j <= n; ++j) t.waypoints.push_back({{speed * dt * static_cast<double>(j), offset}, 0.0});
  return t;
}

/// Two-lane straight road along +x, ego lane centered on y = 0, opposing lane at y = 3.5.
inline scenario::Scenario straight_road(double ego_speed = 10.0, double half_left = 5.25, double half_right = 1.75) {
  scenario::Scenario s;
  s.seed = 0;
  s.ego_speed = ego_speed;
  s.ego_history = {{{-0.5 * ego_speed, 0.0}, ego_speed, 0.0}, {{0.0, 0.0}, ego_speed, 0.0}};
  for (double x = -30.0; x < 90.0; x += 10.0) {
    s.drivable.emplace_back(std::vector<Point2>{{x, -half_right}, {x + 10.0, -half_right}, {x + 10.0, half_left}, {x, half_left}});
  }
  geom::Polyline ego, opp;
  for (double x = -30.0; x <= 90.0; x += 5.0) {
    ego.points.push_back({x, 0.0});
    opp.points.push_back({x, 3.5});
  }
  std::reverse(opp.points.begin(), opp.points.end());
  s.lanes = {ego, opp};
  for (double x = 0.0; x <= 90.0; x += 5.0) s.route.points.push_back({x, 0.0});
  s.expert = constant_speed_line(ego_speed);
  return s;
}

/// Trajectory through the given per-step speeds along +x.
inline Trajectory speed_profile(const std::vector<double>& speeds, double dt = 0.5) {
  Trajectory t;
  t.dt = dt;
  double x = 0.0;
  for (double v : speeds) {
    x += v * dt;
    t.waypoints.push_back({{x, 0.0}, 0.0});
  }
  return t;
}

inline scenario::Agent parked(Point2 p, double heading = 0.0) {
  scenario::Agent a;
  a.initial_pose = {p, heading};
  a.speed = 0.0;
  return a;
}

}  // namespace suprim::testing

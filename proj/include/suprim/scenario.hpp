#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "suprim/geom.hpp"

namespace suprim {

namespace vocab {
class TrajectoryVocabulary;
}
namespace eval {
struct LabelSet;
}

namespace scenario {

using geom::ConvexPolygon;
using geom::Point2;
using geom::Polyline;
using geom::Pose2;
using geom::Trajectory;

/// Constant-velocity actor moving along its initial heading.
struct Agent {
  Pose2 initial_pose;
  double speed = 0.0;
  double length = 4.5;
  double width = 2.0;

  Pose2 pose_at(double t) const {
    return {initial_pose.position + (speed * t) * geom::unit_vector(initial_pose.heading), initial_pose.heading};
  }
  friend bool operator==(const Agent&, const Agent&) = default;
};

enum class LightState : std::uint8_t { Red, Green };

/// Stop line oriented from the left edge to the right edge of the governed
/// lane, so the travel direction is (b - a) rotated by +90 degrees.
struct TrafficLight {
  Point2 a;
  Point2 b;
  LightState state = LightState::Red;

  friend bool operator==(const TrafficLight&, const TrafficLight&) = default;
};

/// Ego kinematic sample; history holds the states at t = -dt and t = 0.
struct EgoState {
  Point2 position;
  double speed = 0.0;
  double accel = 0.0;

  friend bool operator==(const EgoState&, const EgoState&) = default;
};

enum class RoadKind : std::uint8_t { Straight, Curved, TJunction };

const char* to_string(RoadKind kind);

struct Scenario {
  std::uint64_t seed = 0;
  RoadKind kind = RoadKind::Straight;
  Pose2 ego_pose;  // identity by construction
  double ego_speed = 0.0;
  double ego_length = 4.5;
  double ego_width = 2.0;
  std::vector<EgoState> ego_history;
  std::vector<Agent> agents;
  std::vector<ConvexPolygon> drivable;
  std::vector<Polyline> lanes;  // centerlines, vertex order = travel direction
  Polyline route;
  std::vector<TrafficLight> lights;
  Trajectory expert;
  std::int64_t expert_index = -1;  // vocabulary index, -1 once the scenario is rotated

  friend bool operator==(const Scenario&, const Scenario&) = default;

  /// Current ego acceleration (last history sample).
  double ego_accel() const { return ego_history.empty() ? 0.0 : ego_history.back().accel; }
};

struct GenConfig {
  double turn_fraction = 0.08;
  double curved_fraction = 0.35;
  double lane_width = 3.5;
  double ego_length = 4.5;
  double ego_width = 2.0;
  int max_agents = 4;
  double light_probability = 0.3;
  double red_probability = 0.6;
  double max_ego_speed = 14.0;
  double max_turn_speed = 5.0;
  double max_road_curvature = 0.015;
  double road_behind = 30.0;
  double road_ahead = 90.0;
  double junction_offset = 4.0;  // distance from ego to the crossing road edge
  int max_attempts = 64;

  friend bool operator==(const GenConfig&, const GenConfig&) = default;

  /// Throws InvalidArgument for configs that cannot generate valid worlds.
  void validate() const;
};

/// Deterministic in (seed, cfg). Throws GenerationFailed after cfg.max_attempts
/// rejected worlds (over-dense agents or no safe vocabulary entry). When
/// `labels` is given it receives the default-evaluator labels of the result.
Scenario generate_scenario(std::uint64_t seed, const GenConfig& cfg, const vocab::TrajectoryVocabulary& vocab,
                           eval::LabelSet* labels = nullptr);

/// Best vocabulary entry under EPDMS (ties: higher EP, then lower index).
/// Ignores any expert already stored in `s`. Throws NoSafeTrajectory.
std::size_t expert_trajectory(const Scenario& s, const vocab::TrajectoryVocabulary& vocab);

/// Rotates all world geometry by -theta about the origin; the ego keeps the
/// identity pose and the expert becomes rotate_trajectory(expert, -theta).
Scenario rotate_scenario(const Scenario& s, double theta);

/// Uniform draw on [-max_angle, max_angle].
double sample_rotation(std::mt19937_64& rng, double max_angle);

/// Uniform double in [0, 1) from the top 53 bits; portable across standard libraries.
double uniform01(std::mt19937_64& rng);

/// Unbiased integer in [0, n).
std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n);

/// Mirror across the x axis (left <-> right). Used by symmetry checks.
Scenario mirror_scenario(const Scenario& s);

}  // namespace scenario
}  // namespace suprim

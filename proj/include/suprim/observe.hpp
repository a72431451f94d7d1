#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <vector>

#include "suprim/scenario.hpp"

namespace suprim::scenario {

enum class TokenKind : std::uint8_t { Ego, Agent, LanePoint, Light, BoundaryPoint };
inline constexpr std::size_t kTokenKinds = 5;
inline constexpr std::size_t kTokenWidth = 8;

const char* to_string(TokenKind kind);

struct Token {
  TokenKind kind = TokenKind::Ego;
  std::array<double, kTokenWidth> feature{};
  Point2 source;  // ego-frame position the token describes (origin for the ego token)

  friend bool operator==(const Token&, const Token&) = default;
};

struct ObservationTokens {
  std::vector<Token> tokens;
  double fov_halfangle = 0.75 * std::numbers::pi;

  friend bool operator==(const ObservationTokens&, const ObservationTokens&) = default;
};

struct ObserveConfig {
  std::size_t max_lane_points = 24;
  std::size_t max_boundary_points = 16;
  double lane_spacing = 5.0;      // m between lane samples
  double boundary_spacing = 5.0;  // m between boundary samples
  double max_range = 60.0;        // m

  friend bool operator==(const ObserveConfig&, const ObserveConfig&) = default;
};

/// Half-angles of the 1/3/5-camera analogues.
double camera_halfangle(int cameras);

/// Tokenized view of the scenario restricted to |bearing| <= fov_halfangle.
/// Order: kind, then distance, then bearing. Throws InvalidArgument when the
/// half-angle is outside (0, pi].
ObservationTokens observe(const Scenario& s, double fov_halfangle, const ObserveConfig& cfg = {});

/// -1 right, 0 straight, +1 left, from the route heading 20 m ahead.
int route_command(const Scenario& s);

}  // namespace suprim::scenario

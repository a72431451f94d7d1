#pragma once

#include <cstddef>
#include <istream>
#include <ostream>
#include <vector>

#include "suprim/geom.hpp"

namespace suprim::vocab {

using geom::Trajectory;

/// Grid of constant-curvature arcs with trapezoidal speed profiles.
/// Ordering is curvature-major, then target speed, then initial speed.
struct GridSpec {
  std::size_t curvature_levels = 64;
  std::size_t speed_levels = 16;
  std::size_t initial_speed_levels = 8;
  std::size_t expected_size = 8192;
  double max_curvature = 0.2;       // 1/m
  double max_speed = 15.0;          // m/s, top target-speed level
  double max_initial_speed = 14.0;  // m/s, top initial-speed level
  double accel = 2.0;               // m/s^2 while speeding up
  double decel = 3.0;               // m/s^2 while slowing down
  double horizon = 4.0;             // s
  double dt = 0.5;                  // s

  std::size_t size() const { return curvature_levels * speed_levels * initial_speed_levels; }
  std::size_t waypoint_count() const;
  void validate() const;

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

struct EntryParams {
  double curvature = 0.0;
  double target_speed = 0.0;
  double initial_speed = 0.0;
};

/// Curvature of level i; symmetric, quadratically denser near zero.
double curvature_level(const GridSpec& spec, std::size_t i);

/// Single arc entry starting at the identity pose.
Trajectory arc_entry(const EntryParams& p, const GridSpec& spec);

class TrajectoryVocabulary {
 public:
  TrajectoryVocabulary() = default;
  TrajectoryVocabulary(GridSpec spec, std::vector<Trajectory> entries, std::vector<EntryParams> params);

  const GridSpec& spec() const { return spec_; }
  std::size_t size() const { return entries_.size(); }
  const Trajectory& operator[](std::size_t i) const { return entries_[i]; }
  const std::vector<Trajectory>& entries() const { return entries_; }
  const EntryParams& params(std::size_t i) const { return params_[i]; }
  std::size_t index_of(std::size_t curvature_level, std::size_t speed_level, std::size_t initial_level) const;

 private:
  GridSpec spec_;
  std::vector<Trajectory> entries_;
  std::vector<EntryParams> params_;
};

/// Throws InvalidSpec when the grid does not multiply to expected_size or a
/// bound is violated.
TrajectoryVocabulary build_vocabulary(const GridSpec& spec = {});

/// Little-endian binary form used inside caches and checkpoints.
void write_grid(std::ostream& os, const GridSpec& g);
GridSpec read_grid(std::istream& is);

/// Process-wide default vocabulary (built once).
const TrajectoryVocabulary& default_vocabulary();

/// Root-mean-square waypoint distance. Throws ShapeMismatch.
double l2_distance(const Trajectory& a, const Trajectory& b);

/// exp(-d^2 / scale^2).
double normalized_distance(double d, double scale = 3.0);

/// argmin of l2_distance; ties to the lowest index. Throws ShapeMismatch.
std::size_t nearest_entry(const TrajectoryVocabulary& v, const Trajectory& t);

}  // namespace suprim::vocab

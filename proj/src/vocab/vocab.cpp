#include "suprim/vocab.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "suprim/binio.hpp"
#include "suprim/errors.hpp"

namespace suprim::vocab {

std::size_t GridSpec::waypoint_count() const {
  return static_cast<std::size_t>(std::llround(horizon / dt));
}

void GridSpec::validate() const {
  if (curvature_levels == 0 || speed_levels < 2 || initial_speed_levels == 0) {
    throw InvalidSpec("grid dimensions must be positive (speed levels >= 2)");
  }
  if (curvature_levels % 2 != 0) throw InvalidSpec("curvature levels must be even for mirror symmetry");
  if (size() != expected_size) {
    throw InvalidSpec("grid product " + std::to_string(size()) + " != " + std::to_string(expected_size));
  }
  if (!(max_curvature > 0.0 && max_curvature <= 0.2)) throw InvalidSpec("max curvature must be in (0, 0.2]");
  if (!(max_speed > 0.0 && max_speed <= 15.0)) throw InvalidSpec("max speed must be in (0, 15]");
  if (!(max_initial_speed >= 0.0 && max_initial_speed <= max_speed)) throw InvalidSpec("bad initial speed bound");
  if (!(accel > 0.0 && decel > 0.0)) throw InvalidSpec("accel and decel must be positive");
  if (!(dt > 0.0 && horizon >= 2.0 * dt)) throw InvalidSpec("horizon must hold at least two steps");
  if (std::abs(horizon / dt - static_cast<double>(waypoint_count())) > 1e-9) {
    throw InvalidSpec("horizon must be a multiple of dt");
  }
}

double curvature_level(const GridSpec& spec, std::size_t i) {
  const std::size_t half = spec.curvature_levels / 2;
  const double denom = static_cast<double>(half) - 0.5;
  // Levels 0..half-1 are negative (right turns), mirrored by half..2*half-1.
  const bool left = i >= half;
  const std::size_t j = left ? i - half : half - 1 - i;
  const double u = (static_cast<double>(j) + 0.5) / denom;
  const double magnitude = spec.max_curvature * std::min(1.0, u * u);
  return left ? magnitude : -magnitude;
}

namespace {

// Distance travelled after time t on the trapezoid from v0 to vt.
double arc_length_at(double t, double v0, double vt, const GridSpec& spec) {
  if (v0 == vt) return v0 * t;
  const double a = vt > v0 ? spec.accel : -spec.decel;
  const double ramp = (vt - v0) / a;
  if (t <= ramp) return v0 * t + 0.5 * a * t * t;
  return v0 * ramp + 0.5 * a * ramp * ramp + vt * (t - ramp);
}

}  // namespace

Trajectory arc_entry(const EntryParams& p, const GridSpec& spec) {
  Trajectory t;
  t.dt = spec.dt;
  t.start = {{0.0, 0.0}, 0.0};
  const std::size_t n = spec.waypoint_count();
  t.waypoints.reserve(n);
  const double k = p.curvature;
  for (std::size_t j = 1; j <= n; ++j) {
    const double s = arc_length_at(static_cast<double>(j) * spec.dt, p.initial_speed, p.target_speed, spec);
    geom::Pose2 pose;
    if (k == 0.0) {
      pose = {{s, 0.0}, 0.0};
    } else {
      // sin(ks)/k and 2 sin^2(ks/2)/k: odd in k, so mirrored entries are exact reflections.
      const double half = std::sin(0.5 * k * s);
      pose = {{std::sin(k * s) / k, 2.0 * half * half / k}, geom::normalize_angle(k * s)};
    }
    t.waypoints.push_back(pose);
  }
  return t;
}

TrajectoryVocabulary::TrajectoryVocabulary(GridSpec spec, std::vector<Trajectory> entries,
                                           std::vector<EntryParams> params)
    : spec_(spec), entries_(std::move(entries)), params_(std::move(params)) {}

std::size_t TrajectoryVocabulary::index_of(std::size_t curvature_level, std::size_t speed_level,
                                           std::size_t initial_level) const {
  return (curvature_level * spec_.speed_levels + speed_level) * spec_.initial_speed_levels + initial_level;
}

TrajectoryVocabulary build_vocabulary(const GridSpec& spec) {
  spec.validate();
  std::vector<Trajectory> entries;
  std::vector<EntryParams> params;
  entries.reserve(spec.size());
  params.reserve(spec.size());
  const double speed_step = spec.max_speed / static_cast<double>(spec.speed_levels - 1);
  const double initial_step = spec.initial_speed_levels > 1
                                  ? spec.max_initial_speed / static_cast<double>(spec.initial_speed_levels - 1)
                                  : 0.0;
  for (std::size_t ki = 0; ki < spec.curvature_levels; ++ki) {
    const double k = curvature_level(spec, ki);
    for (std::size_t si = 0; si < spec.speed_levels; ++si) {
      for (std::size_t ii = 0; ii < spec.initial_speed_levels; ++ii) {
        const EntryParams p{k, static_cast<double>(si) * speed_step, static_cast<double>(ii) * initial_step};
        entries.push_back(arc_entry(p, spec));
        params.push_back(p);
      }
    }
  }
  return TrajectoryVocabulary(spec, std::move(entries), std::move(params));
}

const TrajectoryVocabulary& default_vocabulary() {
  static const TrajectoryVocabulary vocab = build_vocabulary(GridSpec{});
  return vocab;
}

double l2_distance(const Trajectory& a, const Trajectory& b) {
  if (a.waypoints.size() != b.waypoints.size() || a.dt != b.dt) {
    throw ShapeMismatch("trajectories differ in waypoint count or dt");
  }
  if (a.waypoints.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < a.waypoints.size(); ++i) {
    const geom::Point2 d = a.waypoints[i].position - b.waypoints[i].position;
    sum += geom::dot(d, d);
  }
  return std::sqrt(sum / static_cast<double>(a.waypoints.size()));
}

double normalized_distance(double d, double scale) {
  if (d < 0.0 || !(scale > 0.0)) throw InvalidArgument("normalized_distance needs d >= 0 and scale > 0");
  return std::exp(-(d * d) / (scale * scale));
}

std::size_t nearest_entry(const TrajectoryVocabulary& v, const Trajectory& t) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double d = l2_distance(v[i], t);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

void write_grid(std::ostream& os, const GridSpec& g) {
  bin::put<std::uint64_t>(os, g.curvature_levels);
  bin::put<std::uint64_t>(os, g.speed_levels);
  bin::put<std::uint64_t>(os, g.initial_speed_levels);
  bin::put<std::uint64_t>(os, g.expected_size);
  for (double v : {g.max_curvature, g.max_speed, g.max_initial_speed, g.accel, g.decel, g.horizon, g.dt}) {
    bin::put(os, v);
  }
}

GridSpec read_grid(std::istream& is) {
  GridSpec g;
  g.curvature_levels = bin::get<std::uint64_t>(is);
  g.speed_levels = bin::get<std::uint64_t>(is);
  g.initial_speed_levels = bin::get<std::uint64_t>(is);
  g.expected_size = bin::get<std::uint64_t>(is);
  for (double* v : {&g.max_curvature, &g.max_speed, &g.max_initial_speed, &g.accel, &g.decel, &g.horizon, &g.dt}) {
    *v = bin::get<double>(is);
  }
  return g;
}

}  // namespace suprim::vocab

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "suprim/geom.hpp"
#include "suprim/scenario.hpp"

namespace suprim::eval {

using geom::Trajectory;
using scenario::Scenario;

enum class Metric : std::uint8_t { NC, DAC, DDC, TLC, EP, TTC, LK, HC, EC, C };
inline constexpr std::size_t kMetricCount = 10;
inline constexpr std::array<Metric, kMetricCount> kAllMetrics = {Metric::NC,  Metric::DAC, Metric::DDC, Metric::TLC,
                                                                 Metric::EP,  Metric::TTC, Metric::LK,  Metric::HC,
                                                                 Metric::EC,  Metric::C};

const char* metric_name(Metric m);
Metric metric_from_name(const std::string& name);

struct SubscoreVector {
  double nc = 1.0;
  double dac = 1.0;
  double ddc = 1.0;
  double tlc = 1.0;
  double ep = 1.0;
  double ttc = 1.0;
  double lk = 1.0;
  double hc = 1.0;
  double ec = 1.0;
  double c = 1.0;

  double get(Metric m) const;
  void set(Metric m, double value);
  friend bool operator==(const SubscoreVector&, const SubscoreVector&) = default;
};

struct MetricWeights {
  std::vector<Metric> penalties;
  std::vector<std::pair<Metric, double>> averages;

  /// v1 (PDMS): NC x DAC x weighted(EP 5, TTC 5, C 2).
  static MetricWeights pdms();
  /// v2 (EPDMS): NC x DAC x DDC x TLC x weighted(EP 5, TTC 5, LK 2, HC 1, EC ec_weight).
  static MetricWeights epdms(double ec_weight = 1.0);

  void validate() const;
};

/// (prod penalties) x (sum w * score / sum w).
double aggregate(const SubscoreVector& sub, const MetricWeights& w);

struct EvaluatorConfig {
  double ttc_horizon = 1.0;     // s
  double ttc_substep = 0.1;     // s
  double max_long_accel = 4.0;  // m/s^2
  double max_lat_accel = 4.9;   // m/s^2
  double max_jerk = 8.4;        // m/s^3
  double max_yaw_rate = 0.95;   // rad/s
  double lane_keep_threshold = 0.5;      // m
  double direction_threshold_deg = 90.0;
  double ec_window = 1.0;       // s
  double ec_max_change = 2.0;   // m/s^2
  double min_expert_progress = 0.5;  // m
  double ec_weight = 1.0;

  friend bool operator==(const EvaluatorConfig&, const EvaluatorConfig&) = default;
  MetricWeights pdms_weights() const { return MetricWeights::pdms(); }
  MetricWeights epdms_weights() const { return MetricWeights::epdms(ec_weight); }
};

/// Spatial acceleration structure over a scenario's static geometry. Results
/// are identical to brute force; only lookup cost changes.
class ScenarioIndex {
 public:
  explicit ScenarioIndex(const Scenario& s);

  const Scenario& scenario() const { return *scenario_; }
  bool drivable(geom::Point2 p) const;

  struct LaneHit {
    double distance = 0.0;
    double direction = 0.0;
  };
  /// Nearest lane centerline segment (ties: lowest lane, then segment).
  LaneHit nearest_lane(geom::Point2 p) const;

 private:
  struct Segment {
    geom::Point2 a;
    geom::Point2 b;
    double direction;
  };
  std::size_t bucket_of(std::int64_t cx, std::int64_t cy) const;
  std::int64_t cell_x(double x) const;
  std::int64_t cell_y(double y) const;

  const Scenario* scenario_;
  double cell_size_ = 4.0;
  double origin_x_ = 0.0;
  double origin_y_ = 0.0;
  std::int64_t nx_ = 1;
  std::int64_t ny_ = 1;
  std::vector<Segment> segments_;
  std::vector<std::vector<std::uint32_t>> drivable_buckets_;
  std::vector<std::vector<std::uint32_t>> segment_buckets_;
};

/// Route progress (arc length of the final waypoint's projection).
double route_progress(const Scenario& s, const Trajectory& t);

double score_nc(const Scenario& s, const Trajectory& t);
double score_dac(const Scenario& s, const Trajectory& t);
double score_ddc(const Scenario& s, const Trajectory& t, const EvaluatorConfig& cfg = {});
double score_tlc(const Scenario& s, const Trajectory& t);
/// progress(t) / progress(expert), clipped; 1 when the expert barely moves.
double score_ep(const Scenario& s, const Trajectory& t, const EvaluatorConfig& cfg = {});
double score_ttc(const Scenario& s, const Trajectory& t, const EvaluatorConfig& cfg = {});
double score_comfort(const Scenario& s, const Trajectory& t, const EvaluatorConfig& cfg = {});
double score_hc(const Scenario& s, const Trajectory& t, const EvaluatorConfig& cfg = {});
double score_lk(const Scenario& s, const Trajectory& t, const EvaluatorConfig& cfg = {});
double score_ec(const Scenario& s, const Trajectory& t, const EvaluatorConfig& cfg = {});

/// All ten subscores. EP is normalized by `reference_progress`.
SubscoreVector score_all(const ScenarioIndex& index, const Trajectory& t, double reference_progress,
                         const EvaluatorConfig& cfg = {});

/// Convenience: builds an index and uses the scenario's expert as EP reference.
SubscoreVector score_all(const Scenario& s, const Trajectory& t, const EvaluatorConfig& cfg = {});

}  // namespace suprim::eval

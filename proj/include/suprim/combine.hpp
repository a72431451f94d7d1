#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "suprim/evaluator.hpp"

namespace suprim::harness {

/// Score-table column layout shared by the planner heads and the combiner:
/// column 0 is the imitation (distance) head, then one column per metric.
inline constexpr std::size_t kScoreColumns = 10;
inline constexpr std::array<eval::Metric, kScoreColumns - 1> kHeadMetrics = {
    eval::Metric::NC, eval::Metric::DAC, eval::Metric::DDC, eval::Metric::TLC, eval::Metric::EP,
    eval::Metric::TTC, eval::Metric::LK, eval::Metric::HC, eval::Metric::C};

/// Column of metric m in a score table. Throws InvalidArgument for EC.
std::size_t column_of(eval::Metric m);

enum class MetricVersion : std::uint8_t { V1, V2 };
const char* to_string(MetricVersion v);
MetricVersion version_from(const std::string& s);

struct InferenceCoefficients {
  MetricVersion version = MetricVersion::V2;
  double imi = 0.0;
  std::vector<std::pair<eval::Metric, double>> penalties;
  std::vector<std::pair<eval::Metric, double>> averages;
  double lambda_avg = 0.0;

  static InferenceCoefficients v1();
  static InferenceCoefficients v2();
  static InferenceCoefficients for_version(MetricVersion v) { return v == MetricVersion::V1 ? v1() : v2(); }
  void validate() const;

  friend bool operator==(const InferenceCoefficients&, const InferenceCoefficients&) = default;
};

inline constexpr double kScoreClamp = 1e-7;

/// imi*ln s_imi + sum lambda_m ln s_m + lambda_avg ln(sum lambda_n s_n).
/// Scores are clamped to [1e-7, 1]; NaN or out-of-range inputs and a
/// non-positive weighted sum throw DomainError.
double combine_score(double imi, const eval::SubscoreVector& scores, const InferenceCoefficients& c);

/// Same on one score-table row laid out as kScoreColumns.
double combine_row(const double* row, const InferenceCoefficients& c);

}  // namespace suprim::harness

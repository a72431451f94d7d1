#include "suprim/combine.hpp"

#include <algorithm>
#include <cmath>

#include "suprim/errors.hpp"

namespace suprim::harness {

using eval::Metric;

std::size_t column_of(Metric m) {
  for (std::size_t i = 0; i < kHeadMetrics.size(); ++i) {
    if (kHeadMetrics[i] == m) return i + 1;
  }
  throw InvalidArgument(std::string("metric has no head: ") + eval::metric_name(m));
}

const char* to_string(MetricVersion v) { return v == MetricVersion::V1 ? "v1" : "v2"; }

MetricVersion version_from(const std::string& s) {
  if (s == "v1") return MetricVersion::V1;
  if (s == "v2") return MetricVersion::V2;
  throw InvalidArgument("metric version must be v1 or v2, got '" + s + "'");
}

InferenceCoefficients InferenceCoefficients::v1() {
  return {MetricVersion::V1, 0.05, {{Metric::NC, 0.5}, {Metric::DAC, 0.5}},
          {{Metric::EP, 5.0}, {Metric::TTC, 5.0}, {Metric::C, 2.0}}, 8.0};
}

InferenceCoefficients InferenceCoefficients::v2() {
  return {MetricVersion::V2,
          0.02,
          {{Metric::NC, 0.5}, {Metric::DAC, 0.5}, {Metric::DDC, 0.3}, {Metric::TLC, 0.1}},
          {{Metric::EP, 5.0}, {Metric::TTC, 5.0}, {Metric::LK, 2.0}, {Metric::HC, 1.0}},
          6.0};
}

void InferenceCoefficients::validate() const {
  const auto bad = [](double w) { return !(w >= 0.0) || !std::isfinite(w); };
  if (bad(imi) || bad(lambda_avg)) throw InvalidArgument("inference weights must be finite and >= 0");
  for (const auto& [m, w] : penalties) {
    if (bad(w)) throw InvalidArgument("inference weights must be finite and >= 0");
    column_of(m);
  }
  for (const auto& [m, w] : averages) {
    if (bad(w)) throw InvalidArgument("inference weights must be finite and >= 0");
    column_of(m);
  }
  double avg_total = 0.0;
  for (const auto& [m, w] : averages) avg_total += w;
  if (lambda_avg > 0.0 && !(avg_total > 0.0)) throw InvalidArgument("average term needs a positive weight");
  const eval::MetricWeights mw = version == MetricVersion::V1 ? eval::MetricWeights::pdms() : eval::MetricWeights::epdms();
  for (const auto& [m, w] : penalties) {
    if (std::find(mw.penalties.begin(), mw.penalties.end(), m) == mw.penalties.end()) {
      throw InvalidArgument("penalty coefficient for a metric outside the version's penalty set");
    }
  }
  for (const auto& [m, w] : averages) {
    if (std::none_of(mw.averages.begin(), mw.averages.end(), [&](const auto& p) { return p.first == m; })) {
      throw InvalidArgument("average coefficient for a metric outside the version's average set");
    }
  }
}

namespace {

double clamp_score(double s) {
  if (std::isnan(s) || s < 0.0 || s > 1.0 + 1e-12) throw DomainError("score outside [0, 1]: " + std::to_string(s));
  return std::clamp(s, kScoreClamp, 1.0);
}

template <class Get>
double combine(double imi, Get get, const InferenceCoefficients& c) {
  double out = c.imi * std::log(clamp_score(imi));
  for (const auto& [m, w] : c.penalties) out += w * std::log(clamp_score(get(m)));
  double avg = 0.0;
  for (const auto& [m, w] : c.averages) avg += w * clamp_score(get(m));
  if (!(avg > 0.0)) throw DomainError("weighted average term must be positive");
  return out + c.lambda_avg * std::log(avg);
}

}  // namespace

double combine_score(double imi, const eval::SubscoreVector& scores, const InferenceCoefficients& c) {
  return combine(imi, [&](Metric m) { return scores.get(m); }, c);
}

double combine_row(const double* row, const InferenceCoefficients& c) {
  return combine(row[0], [&](Metric m) { return row[column_of(m)]; }, c);
}

}  // namespace suprim::harness

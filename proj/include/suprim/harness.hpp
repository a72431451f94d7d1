#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "suprim/combine.hpp"
#include "suprim/dataset.hpp"
#include "suprim/labels.hpp"
#include "suprim/planner.hpp"

namespace suprim::harness {

using geom::Trajectory;
using scenario::Scenario;

/// Scenarios paired with their labels; pointers stay owned by the caller.
struct EvalSet {
  std::vector<const Scenario*> scenarios;
  std::vector<const eval::LabelSet*> labels;

  std::size_t size() const { return scenarios.size(); }
  void add(const Scenario& s, const eval::LabelSet& l) {
    scenarios.push_back(&s);
    labels.push_back(&l);
  }
};

/// Records of `ds` with the given tag (both when `all`), paired with `labels`.
EvalSet select_split(const scenario::Dataset& ds, const std::vector<eval::LabelSet>& labels, scenario::SplitTag tag,
                     bool all = false);

struct EvalRow {
  std::uint64_t seed = 0;
  std::size_t selected = 0;
  eval::SubscoreVector subscores;
  double aggregate = 0.0;  // PDMS or EPDMS of the selected entry, in [0, 1]

  friend bool operator==(const EvalRow&, const EvalRow&) = default;
};

struct EvalReport {
  MetricVersion version = MetricVersion::V2;
  std::vector<EvalRow> rows;
  std::array<double, eval::kMetricCount> metric_means{};  // percent, indexed by Metric
  double aggregate_mean = 0.0;                             // percent
  std::uint64_t config_hash = 0;
  std::uint64_t checkpoint_id = 0;

  double mean(eval::Metric m) const { return metric_means[static_cast<std::size_t>(m)]; }
  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// Loads the label cache at `cache` when its key matches the dataset, grid and
/// evaluator; otherwise labels every record and rewrites the cache.
std::vector<eval::LabelSet> ensure_labels(const scenario::Dataset& ds, const std::filesystem::path& cache,
                                          const vocab::TrajectoryVocabulary& v, const eval::EvaluatorConfig& cfg = {});

eval::MetricWeights weights_for(MetricVersion v, const eval::EvaluatorConfig& cfg = {});

/// Report over already-selected entries (one per scenario).
EvalReport report_from_selection(const EvalSet& set, const std::vector<std::size_t>& selected, MetricVersion v,
                                 const eval::EvaluatorConfig& cfg = {});

/// Runs inference on every scenario (parallel, ordered) and scores the
/// selected entries with their ground-truth labels.
EvalReport evaluate(const planner::Planner& model, const EvalSet& set, MetricVersion v, bool use_teacher,
                    const eval::EvaluatorConfig& cfg = {}, const scenario::ObserveConfig& obs = {});

/// Per-scenario best aggregate averaged (percent).
double oracle_ceiling(const EvalSet& set, MetricVersion v, const eval::EvaluatorConfig& cfg = {});

/// Monte-Carlo random selection: `samples` uniform draws per scenario.
double random_baseline(const EvalSet& set, MetricVersion v, std::size_t samples, std::uint64_t seed,
                       const eval::EvaluatorConfig& cfg = {});

struct OracleTable {
  std::vector<std::size_t> ks;
  std::vector<double> values;  // percent, mean best-in-top-K
};

/// Rankings come from InferResult::ranking(). Throws KOutOfRange.
OracleTable oracle_study(const planner::Planner& model, const EvalSet& set, const std::vector<std::size_t>& ks,
                         MetricVersion v, bool use_teacher, const eval::EvaluatorConfig& cfg = {},
                         const scenario::ObserveConfig& obs = {});
/// Same from precomputed rankings.
OracleTable oracle_from_rankings(const EvalSet& set, const std::vector<std::vector<double>>& rankings,
                                 const std::vector<std::size_t>& ks, MetricVersion v,
                                 const eval::EvaluatorConfig& cfg = {});

enum class TurnSplit : std::uint8_t { Left, Forward, Right };
const char* to_string(TurnSplit s);

struct SplitSpec {
  double boundary_deg = 30.0;
  TurnSplit classify(const Trajectory& expert) const;
};

struct SplitReports {
  EvalReport left;
  EvalReport forward;
  EvalReport right;
  const EvalReport& get(TurnSplit s) const { return s == TurnSplit::Left ? left : s == TurnSplit::Right ? right : forward; }
};

/// Partitions an existing report by the expert turning angle of each row.
SplitReports split_report(const EvalSet& set, const EvalReport& full, const SplitSpec& spec = {});
SplitReports split_eval(const planner::Planner& model, const EvalSet& set, MetricVersion v, bool use_teacher,
                        const SplitSpec& spec = {}, const eval::EvaluatorConfig& cfg = {},
                        const scenario::ObserveConfig& obs = {});

struct Histogram {
  std::vector<double> edges;  // bins + 1 values, radians
  std::vector<double> freq;   // normalized so the largest bin is 1
  std::vector<std::size_t> counts;
};

/// Counts entries with EPDMS > 0.99 or among the three best of their scenario,
/// binned by final heading over [-pi, pi). Throws EmptyDataset.
Histogram heading_histogram(const vocab::TrajectoryVocabulary& v, const std::vector<const eval::LabelSet*>& labels,
                            std::size_t bins, const eval::EvaluatorConfig& cfg = {});

/// KL(p || uniform) of the counts normalized to a distribution.
double kl_to_uniform(const Histogram& h);

/// Labels of one rotated copy per scenario, theta ~ U[-max_angle, max_angle]
/// from a generator seeded with `seed`.
std::vector<eval::LabelSet> rotated_labels(const std::vector<const Scenario*>& scenarios,
                                           const vocab::TrajectoryVocabulary& v, double max_angle, std::uint64_t seed,
                                           const eval::EvaluatorConfig& cfg = {});

struct FovRow {
  int cameras = 0;
  double halfangle = 0.0;
  double mean_tokens = 0.0;
  double aggregate = 0.0;  // percent
};

/// One row per camera count, each evaluated with the planner built for it.
std::vector<FovRow> fov_sweep(const std::vector<std::pair<int, const planner::Planner*>>& models, const EvalSet& set,
                              MetricVersion v, bool use_teacher, const eval::EvaluatorConfig& cfg = {},
                              const scenario::ObserveConfig& obs = {});

// reports

std::string report_text(const EvalReport& r, const std::string& title);
std::string report_csv(const EvalReport& r);
std::string oracle_text(const OracleTable& t);
std::string oracle_csv(const OracleTable& t);
std::string histogram_csv(const Histogram& h);
std::string fov_csv(const std::vector<FovRow>& rows);
std::string split_text(const SplitReports& s);
std::string split_csv(const SplitReports& s);
/// Minimal bar chart.
std::string svg_bars(const std::string& title, const std::vector<std::string>& labels, const std::vector<double>& values);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace suprim::harness

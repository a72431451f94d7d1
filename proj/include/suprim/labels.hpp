#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "suprim/evaluator.hpp"
#include "suprim/vocab.hpp"

namespace suprim::eval {

/// Per-entry raw rule results before EP normalization.
struct RawScores {
  std::vector<std::uint16_t> bits;  // bit (1 << Metric) set when the binary rule passes
  std::vector<double> progress;     // route progress of each entry
};

RawScores score_vocabulary(const Scenario& s, const vocab::TrajectoryVocabulary& v, const EvaluatorConfig& cfg = {});

std::uint16_t pack_bits(const SubscoreVector& sub);

/// Ground-truth supervision for every vocabulary entry of one scenario.
/// Binary rules are bit-packed; pdms, epdms and nd are derived on demand.
struct LabelSet {
  std::vector<std::uint16_t> bits;
  std::vector<double> ep;
  std::vector<double> l2;  // RMS distance to the expert
  double nd_scale = 3.0;

  std::size_t size() const { return bits.size(); }
  SubscoreVector subscores(std::size_t i) const;
  double value(std::size_t i, Metric m) const;
  double pdms(std::size_t i) const;
  double epdms(std::size_t i, double ec_weight = 1.0) const;
  double nd(std::size_t i) const;
  double aggregate(std::size_t i, const MetricWeights& w) const;
  std::vector<double> aggregates(const MetricWeights& w) const;

  friend bool operator==(const LabelSet&, const LabelSet&) = default;
};

/// Labels from precomputed raw scores, EP normalized by the expert's progress.
LabelSet make_labels(const Scenario& s, const vocab::TrajectoryVocabulary& v, const RawScores& raw,
                     const EvaluatorConfig& cfg = {});

LabelSet label_vocabulary(const Scenario& s, const vocab::TrajectoryVocabulary& v, const EvaluatorConfig& cfg = {});

/// Best ground truth among the K highest-ranked entries (ties: lower index
/// ranks first). Throws KOutOfRange (K == 0 or K > N) and ShapeMismatch.
double oracle_topk(std::span<const double> gt, std::span<const double> ranking, std::size_t K);

/// Indices of the k largest scores, ordered by score descending, ties by
/// ascending index. Throws KOutOfRange.
std::vector<std::size_t> topk_indices(std::span<const double> scores, std::size_t k);

/// Sidecar cache of label sets keyed by (dataset hash, grid, evaluator hash).
struct LabelCacheKey {
  std::uint64_t dataset_hash = 0;
  vocab::GridSpec grid;
  std::uint64_t evaluator_hash = 0;
  friend bool operator==(const LabelCacheKey&, const LabelCacheKey&) = default;
};

std::uint64_t hash_evaluator_config(const EvaluatorConfig& cfg);

void save_label_cache(const std::filesystem::path& path, const LabelCacheKey& key, const std::vector<LabelSet>& labels);
/// Throws LabelCacheMiss when the file is absent or keyed differently.
std::vector<LabelSet> load_label_cache(const std::filesystem::path& path, const LabelCacheKey& key);

}  // namespace suprim::eval

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "suprim/combine.hpp"
#include "suprim/diffcore.hpp"
#include "suprim/labels.hpp"
#include "suprim/observe.hpp"
#include "suprim/vocab.hpp"

namespace suprim::planner {

using geom::Point2;
using geom::Trajectory;
using harness::kScoreColumns;
using scenario::Scenario;
inline constexpr std::size_t kMetricColumns = kScoreColumns - 1;

enum class EmaMode : std::uint8_t { Pretrained, Scratch };
const char* to_string(EmaMode m);
EmaMode ema_mode_from(const std::string& s);

/// Teacher momentum per training epoch (1-based). Pretrained ramps
/// 0.992 -> 0.996 over epochs 1..3, then 0.998. Scratch holds 0 for
/// epochs 1..3 and then follows the pretrained curve shifted by 3.
struct EmaSchedule {
  EmaMode mode = EmaMode::Pretrained;
  /// Piecewise-linear in a continuous epoch coordinate.
  double at(double epoch) const;
  double momentum(int epoch) const { return at(static_cast<double>(epoch)); }
  friend bool operator==(const EmaSchedule&, const EmaSchedule&) = default;
};

struct PlannerConfig {
  std::size_t hidden_dim = 256;
  std::size_t ffn_dim = 512;
  std::size_t trans_dec_layers = 3;
  std::size_t refine_dec_layers = 3;
  std::size_t attention_heads = 4;
  std::size_t top_k = 256;
  bool coarse_self_attention = false;
  bool refine_self_attention = true;
  bool use_refine = true;  // false: single-stage selection, k = N, no refine loss
  bool use_augmentation = true;
  bool use_distillation = true;
  double theta = std::numbers::pi / 6.0;
  std::array<double, kMetricColumns> delta = {0.15, 0.15, 0.15, 0.15, 0.15, 0.15, 0.15, 0.15, 0.15};
  double imi_temperature = 1.0;  // m^2
  EmaSchedule ema;
  double lr = 7.5e-5;
  std::size_t batch_size = 4;
  std::size_t epochs = 6;
  harness::MetricVersion version = harness::MetricVersion::V2;
  double fov_halfangle = 0.75 * std::numbers::pi;

  /// Throws InvalidArgument. vocab_size == 0 skips the top_k bound.
  void validate(std::size_t vocab_size = 0) const;
  std::uint64_t hash() const;
  harness::InferenceCoefficients coefficients() const { return harness::InferenceCoefficients::for_version(version); }

  friend bool operator==(const PlannerConfig&, const PlannerConfig&) = default;
};

/// Predicted scores of a stage: one row per entry, columns as kScoreColumns.
struct ScoreTable {
  dc::Array2 scores;                 // post-sigmoid, in (0, 1)
  std::vector<std::size_t> entries;  // vocabulary index of each row
  int stage = -1;                    // -1 coarse, l >= 0 refine layer l

  std::vector<double> combined(const harness::InferenceCoefficients& c) const;
};

/// Deterministic Xavier-uniform initialization of every model parameter.
/// traj_width is 2 x waypoints per vocabulary entry.
dc::ParamStore init_params(const PlannerConfig& cfg, std::uint64_t seed, std::size_t traj_width = 16);

/// N x 16 waypoint coordinates (x / 30, y / 30 per waypoint).
dc::Array2 trajectory_features(const vocab::TrajectoryVocabulary& v);

/// Token-major feature matrix of an observation (T x kTokenWidth).
dc::Array2 token_features(const scenario::ObservationTokens& obs);

dc::Var encode_observation(dc::Tape& t, dc::ParamStore& p, const scenario::ObservationTokens& obs);
dc::Var encode_trajectories(dc::Tape& t, dc::ParamStore& p, dc::Var features);

struct StageOutput {
  dc::Var features;  // g rows
  dc::Var logits;    // rows x kScoreColumns, pre-sigmoid
  dc::Var scores;    // sigmoid(logits)
};

StageOutput coarse_stage(dc::Tape& t, dc::ParamStore& p, const PlannerConfig& cfg, dc::Var E, dc::Var f);

/// Top-k of the combined scores (ties: ascending index). Throws KOutOfRange.
std::vector<std::size_t> topk_filter(std::span<const double> combined, std::size_t k);

/// One output per refine layer over the filtered features.
std::vector<StageOutput> refine_stage(dc::Tape& t, dc::ParamStore& p, const PlannerConfig& cfg, dc::Var E,
                                      dc::Var g_filtered);

/// softmax(-d^2 / temperature). Throws InvalidArgument for temperature <= 0.
std::vector<double> imitation_targets(std::span<const double> l2, double temperature);

/// Supervision table (entries x kScoreColumns): nd, then the metric subscores.
dc::Array2 label_table(const eval::LabelSet& labels);
dc::Array2 gather_rows(const dc::Array2& a, std::span<const std::size_t> rows);

/// cross_entropy(imitation logits, targets) + sum of bce(scores, labels).
/// imi_logits is rows x 1. Throws ShapeMismatch.
dc::Var loss_coarse(dc::Tape& t, dc::Var scores, dc::Var imi_logits, const dc::Array2& labels,
                    std::span<const double> imitation);

/// Sum over layers of the coarse-form loss on the filtered entries.
dc::Var loss_refine(dc::Tape& t, const std::vector<StageOutput>& layers, const dc::Array2& labels,
                    std::span<const double> imitation);

struct SoftLabelSet {
  dc::Array2 yhat;  // entries x kScoreColumns; column 0 is nd to the shifted expert
  Trajectory shifted_expert;
  std::vector<double> shifted_l2;
};

/// y + clip(teacher - y, -delta, delta) on the metric columns; the expert is
/// shifted per waypoint toward `selected` by at most 1 m.
SoftLabelSet make_soft_labels(const dc::Array2& teacher, const dc::Array2& labels,
                              std::span<const double> delta, const Trajectory& expert, const Trajectory& selected,
                              const vocab::TrajectoryVocabulary& v, double nd_scale = 3.0);

Trajectory shift_toward(const Trajectory& expert, const Trajectory& target, double max_shift = 1.0);

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  PlannerConfig config;
  vocab::GridSpec grid;
  dc::ParamStore student;
  dc::ParamStore teacher;
  dc::AdamState adam;
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  std::uint64_t seed = 0;
  std::uint64_t data_hash = 0;

  std::uint64_t config_hash() const;
  std::uint64_t id() const;  // hash of config and parameters
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
/// Throws IoError, CheckpointVersionMismatch.
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct TrainSample {
  const Scenario* scenario = nullptr;
  const eval::LabelSet* labels = nullptr;
};

struct StepLog {
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  double l_ori = 0.0;
  double l_aug = 0.0;
  double l_soft = 0.0;
  double ema_m = 0.0;
  double wall_ms = 0.0;
};

struct TrainOptions {
  std::optional<std::filesystem::path> out_dir;  // epoch checkpoints + train_log.jsonl
  std::size_t max_steps = 0;                     // 0: run every epoch to the end
  eval::EvaluatorConfig evaluator;
  scenario::ObserveConfig observe;
  std::function<void(const StepLog&)> on_step;
};

/// FNV-1a over the scenario seeds and labels, stored in checkpoints.
std::uint64_t data_hash(const std::vector<TrainSample>& data);

/// Trains student and EMA teacher. Throws EmptyDataset, NonFiniteDetected
/// (after writing the last good checkpoint when out_dir is set).
Checkpoint train(const std::vector<TrainSample>& data, const vocab::TrajectoryVocabulary& v, const PlannerConfig& cfg,
                 std::uint64_t seed, const TrainOptions& opt = {});

/// Per-sample loss terms on a fresh tape; exposed for tests.
struct SampleLoss {
  dc::Var l_ori;
  dc::Var l_soft;  // invalid when no teacher table was given
};

struct SoftTarget {
  dc::Array2 teacher_table;  // N x kScoreColumns
  Trajectory selected;
};

SampleLoss sample_loss(dc::Tape& t, dc::ParamStore& p, const PlannerConfig& cfg, const dc::Array2& traj_features,
                       const scenario::ObservationTokens& obs, const eval::LabelSet& labels, const Trajectory& expert,
                       const vocab::TrajectoryVocabulary& v, const SoftTarget* soft);

struct InferResult {
  std::size_t selected = 0;
  Trajectory trajectory;
  ScoreTable coarse;
  std::vector<double> coarse_combined;  // N
  std::vector<std::size_t> topk;        // ordered by coarse combined score
  std::vector<ScoreTable> refine;       // one per refine layer, rows follow topk
  std::vector<double> refine_combined;  // last layer, rows follow topk

  /// Larger is better over all N entries: refined entries ahead of the rest,
  /// each group in its stage's order.
  std::vector<double> ranking() const;
};

/// Inference wrapper holding cached trajectory encodings per checkpoint.
class Planner {
 public:
  Planner(Checkpoint ckpt, const vocab::TrajectoryVocabulary& v);
  InferResult infer(const Scenario& s, bool use_teacher = true, const scenario::ObserveConfig& obs = {}) const;
  InferResult infer_tokens(const scenario::ObservationTokens& obs, bool use_teacher = true) const;
  const Checkpoint& checkpoint() const { return ckpt_; }
  const PlannerConfig& config() const { return ckpt_.config; }
  const dc::Array2& encodings(bool use_teacher) const;

 private:
  Checkpoint ckpt_;
  const vocab::TrajectoryVocabulary* vocab_;
  dc::Array2 features_;
  mutable std::array<std::optional<dc::Array2>, 2> cache_;
};

/// Stage outputs for fixed parameters, values only. Exposed for tests.
InferResult run_pipeline(dc::ParamStore& p, const PlannerConfig& cfg, const dc::Array2& traj_encoding,
                         const scenario::ObservationTokens& obs, const vocab::TrajectoryVocabulary& v);

}  // namespace suprim::planner

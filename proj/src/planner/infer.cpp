#include <algorithm>
#include <numeric>

#include "suprim/errors.hpp"
#include "suprim/planner.hpp"

namespace suprim::planner {

using dc::Array2;
using dc::Tape;
using dc::Var;

InferResult run_pipeline(dc::ParamStore& p, const PlannerConfig& cfg, const Array2& traj_encoding,
                         const scenario::ObservationTokens& obs, const vocab::TrajectoryVocabulary& v) {
  Tape t(false);
  const Var E = encode_observation(t, p, obs);
  const StageOutput co = coarse_stage(t, p, cfg, E, t.constant(traj_encoding));
  const auto coeffs = cfg.coefficients();
  InferResult r;
  r.coarse.scores = t.value(co.scores);
  if (!r.coarse.scores.all_finite()) throw NonFiniteDetected("non-finite coarse scores");
  r.coarse.entries.resize(r.coarse.scores.rows);
  std::iota(r.coarse.entries.begin(), r.coarse.entries.end(), std::size_t{0});
  r.coarse_combined = r.coarse.combined(coeffs);
  if (!cfg.use_refine) {
    r.topk = topk_filter(r.coarse_combined, r.coarse_combined.size());
    r.selected = r.topk.front();
  } else {
    r.topk = topk_filter(r.coarse_combined, cfg.top_k);
    const auto layers = refine_stage(t, p, cfg, E, t.gather_rows(co.features, r.topk));
    for (std::size_t l = 0; l < layers.size(); ++l) {
      ScoreTable tab;
      tab.scores = t.value(layers[l].scores);
      if (!tab.scores.all_finite()) throw NonFiniteDetected("non-finite refine scores");
      tab.entries = r.topk;
      tab.stage = static_cast<int>(l);
      r.refine.push_back(std::move(tab));
    }
    r.refine_combined = r.refine.back().combined(coeffs);
    // ties keep the coarse order
    std::size_t best = 0;
    for (std::size_t i = 1; i < r.refine_combined.size(); ++i) {
      if (r.refine_combined[i] > r.refine_combined[best]) best = i;
    }
    r.selected = r.topk[best];
  }
  r.trajectory = v[r.selected];
  return r;
}

std::vector<double> InferResult::ranking() const {
  const std::size_t n = coarse_combined.size();
  std::vector<double> out(n, 0.0);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return coarse_combined[a] > coarse_combined[b]; });
  for (std::size_t r = 0; r < n; ++r) out[order[r]] = static_cast<double>(n - r);
  if (refine_combined.empty()) return out;
  std::vector<std::size_t> pos(topk.size());
  std::iota(pos.begin(), pos.end(), std::size_t{0});
  std::stable_sort(pos.begin(), pos.end(),
                   [&](std::size_t a, std::size_t b) { return refine_combined[a] > refine_combined[b]; });
  for (std::size_t r = 0; r < pos.size(); ++r) out[topk[pos[r]]] = static_cast<double>(2 * n - r);
  return out;
}

Planner::Planner(Checkpoint ckpt, const vocab::TrajectoryVocabulary& v)
    : ckpt_(std::move(ckpt)), vocab_(&v), features_(trajectory_features(v)) {
  if (!(v.spec() == ckpt_.grid)) throw InvalidArgument("vocabulary grid differs from the checkpoint grid");
  ckpt_.config.validate(v.size());
}

// record-free tapes never touch gradient buffers, so the const_casts below
// leave the stores unchanged
const Array2& Planner::encodings(bool use_teacher) const {
  auto& slot = cache_[use_teacher ? 1 : 0];
  if (!slot) {
    auto& store = const_cast<dc::ParamStore&>(use_teacher ? ckpt_.teacher : ckpt_.student);
    Tape t(false);
    slot = t.value(encode_trajectories(t, store, t.constant(features_)));
  }
  return *slot;
}

InferResult Planner::infer_tokens(const scenario::ObservationTokens& obs, bool use_teacher) const {
  auto& store = const_cast<dc::ParamStore&>(use_teacher ? ckpt_.teacher : ckpt_.student);
  return run_pipeline(store, ckpt_.config, encodings(use_teacher), obs, *vocab_);
}

InferResult Planner::infer(const Scenario& s, bool use_teacher, const scenario::ObserveConfig& obs) const {
  return infer_tokens(scenario::observe(s, ckpt_.config.fov_halfangle, obs), use_teacher);
}

}  // namespace suprim::planner

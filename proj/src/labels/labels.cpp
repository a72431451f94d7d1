#include "suprim/labels.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "suprim/binio.hpp"
#include "suprim/errors.hpp"
#include "suprim/parallel.hpp"

namespace suprim::eval {

namespace {

constexpr std::uint16_t bit(Metric m) { return static_cast<std::uint16_t>(1U << static_cast<unsigned>(m)); }

constexpr char kCacheMagic[4] = {'S', 'P', 'L', 'C'};
constexpr std::uint32_t kCacheVersion = 1;

}  // namespace

std::uint16_t pack_bits(const SubscoreVector& sub) {
  std::uint16_t out = 0;
  for (Metric m : kAllMetrics) {
    if (m != Metric::EP && sub.get(m) == 1.0) out |= bit(m);
  }
  return out;
}

RawScores score_vocabulary(const Scenario& s, const vocab::TrajectoryVocabulary& v, const EvaluatorConfig& cfg) {
  const ScenarioIndex index(s);
  RawScores raw;
  raw.bits.resize(v.size());
  raw.progress.resize(v.size());
  parallel_for(v.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      raw.bits[i] = pack_bits(score_all(index, v[i], 0.0, cfg));
      raw.progress[i] = route_progress(s, v[i]);
    }
  });
  return raw;
}

SubscoreVector LabelSet::subscores(std::size_t i) const {
  SubscoreVector out;
  for (Metric m : kAllMetrics) out.set(m, value(i, m));
  return out;
}

double LabelSet::value(std::size_t i, Metric m) const {
  if (m == Metric::EP) return ep[i];
  return (bits[i] & bit(m)) != 0 ? 1.0 : 0.0;
}

double LabelSet::aggregate(std::size_t i, const MetricWeights& w) const { return eval::aggregate(subscores(i), w); }

double LabelSet::pdms(std::size_t i) const { return aggregate(i, MetricWeights::pdms()); }

double LabelSet::epdms(std::size_t i, double ec_weight) const { return aggregate(i, MetricWeights::epdms(ec_weight)); }

double LabelSet::nd(std::size_t i) const { return vocab::normalized_distance(l2[i], nd_scale); }

std::vector<double> LabelSet::aggregates(const MetricWeights& w) const {
  std::vector<double> out(size());
  for (std::size_t i = 0; i < size(); ++i) out[i] = aggregate(i, w);
  return out;
}

LabelSet make_labels(const Scenario& s, const vocab::TrajectoryVocabulary& v, const RawScores& raw,
                     const EvaluatorConfig& cfg) {
  LabelSet out;
  out.bits = raw.bits;
  const double reference = route_progress(s, s.expert);
  out.ep.resize(v.size());
  out.l2.resize(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out.ep[i] = reference < cfg.min_expert_progress ? 1.0 : std::clamp(raw.progress[i] / reference, 0.0, 1.0);
    out.l2[i] = vocab::l2_distance(v[i], s.expert);
  }
  return out;
}

LabelSet label_vocabulary(const Scenario& s, const vocab::TrajectoryVocabulary& v, const EvaluatorConfig& cfg) {
  return make_labels(s, v, score_vocabulary(s, v, cfg), cfg);
}

std::vector<std::size_t> topk_indices(std::span<const double> scores, std::size_t k) {
  if (k == 0 || k > scores.size()) {
    throw KOutOfRange("k=" + std::to_string(k) + " outside [1, " + std::to_string(scores.size()) + "]");
  }
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const auto before = [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
  };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), before);
  idx.resize(k);
  return idx;
}

double oracle_topk(std::span<const double> gt, std::span<const double> ranking, std::size_t K) {
  if (gt.size() != ranking.size()) throw ShapeMismatch("oracle_topk: gt and ranking lengths differ");
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i : topk_indices(ranking, K)) best = std::max(best, gt[i]);
  return best;
}

std::uint64_t hash_evaluator_config(const EvaluatorConfig& cfg) {
  bin::Fnv1a h;
  for (double v : {cfg.ttc_horizon, cfg.ttc_substep, cfg.max_long_accel, cfg.max_lat_accel, cfg.max_jerk,
                   cfg.max_yaw_rate, cfg.lane_keep_threshold, cfg.direction_threshold_deg, cfg.ec_window,
                   cfg.ec_max_change, cfg.min_expert_progress, cfg.ec_weight}) {
    h.f64(v);
  }
  return h.value();
}

namespace {

}  // namespace

void save_label_cache(const std::filesystem::path& path, const LabelCacheKey& key, const std::vector<LabelSet>& labels) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write label cache " + tmp);
    os.write(kCacheMagic, 4);
    bin::put(os, kCacheVersion);
    bin::put(os, key.dataset_hash);
    vocab::write_grid(os, key.grid);
    bin::put(os, key.evaluator_hash);
    bin::put<std::uint64_t>(os, labels.size());
    for (const LabelSet& l : labels) {
      bin::put_vec(os, l.bits);
      bin::put_vec(os, l.ep);
      bin::put_vec(os, l.l2);
      bin::put(os, l.nd_scale);
    }
    if (!os) throw IoError("failed writing label cache " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move label cache into place: " + ec.message());
}

std::vector<LabelSet> load_label_cache(const std::filesystem::path& path, const LabelCacheKey& key) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw LabelCacheMiss("no label cache at " + path.string());
  char magic[4] = {};
  is.read(magic, 4);
  if (!is || !std::equal(magic, magic + 4, kCacheMagic)) throw LabelCacheMiss("not a label cache: " + path.string());
  if (bin::get<std::uint32_t>(is) != kCacheVersion) throw LabelCacheMiss("label cache version differs");
  LabelCacheKey stored;
  stored.dataset_hash = bin::get<std::uint64_t>(is);
  stored.grid = vocab::read_grid(is);
  stored.evaluator_hash = bin::get<std::uint64_t>(is);
  if (!(stored == key)) throw LabelCacheMiss("label cache key differs for " + path.string());
  const auto count = bin::get<std::uint64_t>(is);
  std::vector<LabelSet> out(count);
  for (LabelSet& l : out) {
    l.bits = bin::get_vec<std::uint16_t>(is);
    l.ep = bin::get_vec<double>(is);
    l.l2 = bin::get_vec<double>(is);
    l.nd_scale = bin::get<double>(is);
  }
  return out;
}

}  // namespace suprim::eval

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "suprim/binio.hpp"
#include "suprim/errors.hpp"
#include "suprim/planner.hpp"
#include "suprim/scenario.hpp"

namespace suprim::planner {

using dc::Array2;
using dc::ParamStore;
using dc::Tape;
using dc::Var;

const char* to_string(EmaMode m) { return m == EmaMode::Pretrained ? "pretrained" : "scratch"; }

EmaMode ema_mode_from(const std::string& s) {
  if (s == "pretrained") return EmaMode::Pretrained;
  if (s == "scratch") return EmaMode::Scratch;
  throw InvalidArgument("ema mode must be pretrained or scratch, got '" + s + "'");
}

double EmaSchedule::at(double epoch) const {
  // knots of the pretrained curve: (1, .992) (3, .996) (4, .998), flat outside
  const auto pretrained = [](double e) {
    if (e <= 1.0) return 0.992;
    if (e <= 3.0) return std::lerp(0.992, 0.996, (e - 1.0) / 2.0);
    if (e <= 4.0) return std::lerp(0.996, 0.998, e - 3.0);
    return 0.998;
  };
  if (mode == EmaMode::Pretrained) return pretrained(epoch);
  if (epoch <= 3.0) return 0.0;
  if (epoch <= 4.0) return std::lerp(0.0, 0.992, epoch - 3.0);
  return pretrained(epoch - 3.0);
}

void PlannerConfig::validate(std::size_t vocab_size) const {
  if (hidden_dim == 0 || ffn_dim == 0) throw InvalidArgument("hidden_dim and ffn_dim must be positive");
  if (attention_heads == 0 || hidden_dim % attention_heads != 0) {
    throw InvalidArgument("hidden_dim must be divisible by attention_heads");
  }
  if (trans_dec_layers == 0) throw InvalidArgument("trans_dec_layers must be >= 1");
  if (use_refine && refine_dec_layers == 0) throw InvalidArgument("refine_dec_layers must be >= 1");
  if (top_k == 0 || (vocab_size != 0 && top_k > vocab_size)) throw InvalidArgument("top_k must be in [1, N]");
  for (double d : delta) {
    if (!(d >= 0.0 && d <= 1.0)) throw InvalidArgument("delta must lie in [0, 1]");
  }
  if (!(imi_temperature > 0.0)) throw InvalidArgument("imi_temperature must be positive");
  if (!(theta >= 0.0 && theta <= std::numbers::pi)) throw InvalidArgument("theta must lie in [0, pi]");
  if (!(lr > 0.0) || batch_size == 0) throw InvalidArgument("lr and batch_size must be positive");
  if (!(fov_halfangle > 0.0 && fov_halfangle <= std::numbers::pi)) throw InvalidArgument("fov half-angle must be in (0, pi]");
}

std::uint64_t PlannerConfig::hash() const {
  bin::Fnv1a h;
  for (std::size_t v : {hidden_dim, ffn_dim, trans_dec_layers, refine_dec_layers, attention_heads, top_k, batch_size,
                        epochs}) {
    h.u64(v);
  }
  for (bool b : {coarse_self_attention, refine_self_attention, use_refine, use_augmentation, use_distillation}) {
    h.u64(b ? 1 : 0);
  }
  h.f64(theta);
  for (double d : delta) h.f64(d);
  h.f64(imi_temperature);
  h.u64(static_cast<std::uint64_t>(ema.mode));
  h.f64(lr);
  h.u64(static_cast<std::uint64_t>(version));
  h.f64(fov_halfangle);
  return h.value();
}

std::vector<double> ScoreTable::combined(const harness::InferenceCoefficients& c) const {
  std::vector<double> out(scores.rows);
  for (std::size_t r = 0; r < scores.rows; ++r) out[r] = harness::combine_row(scores.row_ptr(r), c);
  return out;
}

namespace {

constexpr std::size_t kTrajScaleDiv = 30;

Var P(Tape& t, ParamStore& p, const std::string& name) { return t.param(p, p.find(name)); }

std::string kind_prefix(std::size_t k) { return "tok." + std::string(scenario::to_string(static_cast<scenario::TokenKind>(k))); }

void add_linear(ParamStore& p, std::mt19937_64& rng, const std::string& name, std::size_t in, std::size_t out,
                bool bias = true) {
  const double a = std::sqrt(6.0 / static_cast<double>(in + out));
  Array2 w(in, out);
  for (double& x : w.data) x = (2.0 * scenario::uniform01(rng) - 1.0) * a;
  p.add(name + ".w", std::move(w));
  if (bias) p.add(name + ".b", Array2(1, out));
}

void add_norm(ParamStore& p, const std::string& name, std::size_t dim) {
  p.add(name + ".g", Array2(1, dim, 1.0));
  p.add(name + ".b", Array2(1, dim));
}

void add_decoder_layer(ParamStore& p, std::mt19937_64& rng, const std::string& prefix, const PlannerConfig& cfg,
                       bool self_attention) {
  const std::size_t H = cfg.hidden_dim;
  for (const char* block : {"sa", "ca"}) {
    if (std::string(block) == "sa" && !self_attention) continue;
    const std::string b = prefix + "." + block;
    add_linear(p, rng, b + ".q", H, H, false);
    add_linear(p, rng, b + ".k", H, H, false);
    add_linear(p, rng, b + ".v", H, H, false);
    add_linear(p, rng, b + ".o", H, H);
    add_norm(p, b + ".ln", H);
  }
  add_linear(p, rng, prefix + ".ff1", H, cfg.ffn_dim);
  add_linear(p, rng, prefix + ".ff2", cfg.ffn_dim, H);
  add_norm(p, prefix + ".ff.ln", H);
}

void add_heads(ParamStore& p, std::mt19937_64& rng, const std::string& prefix, std::size_t H) {
  add_linear(p, rng, prefix + ".dist1", H, H);
  add_linear(p, rng, prefix + ".dist2", H, 1);
  add_linear(p, rng, prefix + ".metric", H, kMetricColumns);
}

Var linear(Tape& t, ParamStore& p, const std::string& name, Var x) {
  return t.add_bias(t.matmul(x, P(t, p, name + ".w")), P(t, p, name + ".b"));
}

Var norm(Tape& t, ParamStore& p, const std::string& name, Var x) {
  return t.layer_norm(x, P(t, p, name + ".g"), P(t, p, name + ".b"));
}

Var attention_block(Tape& t, ParamStore& p, const std::string& b, Var x, Var kv, std::size_t heads) {
  const Var q = t.matmul(x, P(t, p, b + ".q.w"));
  const Var k = t.matmul(kv, P(t, p, b + ".k.w"));
  const Var v = t.matmul(kv, P(t, p, b + ".v.w"));
  const Var o = linear(t, p, b + ".o", t.attention(q, k, v, heads));
  return norm(t, p, b + ".ln", t.add(x, o));
}

Var decoder_layer(Tape& t, ParamStore& p, const std::string& prefix, const PlannerConfig& cfg, Var x, Var E,
                  bool self_attention) {
  if (self_attention) x = attention_block(t, p, prefix + ".sa", x, x, cfg.attention_heads);
  x = attention_block(t, p, prefix + ".ca", x, E, cfg.attention_heads);
  const Var h = t.relu(linear(t, p, prefix + ".ff1", x));
  return norm(t, p, prefix + ".ff.ln", t.add(x, linear(t, p, prefix + ".ff2", h)));
}

StageOutput heads(Tape& t, ParamStore& p, const std::string& prefix, Var g) {
  const Var h = t.relu(linear(t, p, prefix + ".dist1", g));
  const Var d = linear(t, p, prefix + ".dist2", h);
  const Var m = linear(t, p, prefix + ".metric", g);
  StageOutput out;
  out.features = g;
  out.logits = t.concat_cols({d, m});
  out.scores = t.sigmoid(out.logits);
  return out;
}

}  // namespace

ParamStore init_params(const PlannerConfig& cfg, std::uint64_t seed, std::size_t traj_width) {
  cfg.validate();
  std::mt19937_64 rng(seed ^ 0x5eed5eed5eed5eedULL);
  ParamStore p;
  const std::size_t H = cfg.hidden_dim;
  for (std::size_t k = 0; k < scenario::kTokenKinds; ++k) {
    add_linear(p, rng, kind_prefix(k) + ".l1", scenario::kTokenWidth, H);
    add_linear(p, rng, kind_prefix(k) + ".l2", H, H);
  }
  add_linear(p, rng, "traj.l1", traj_width, H);
  add_linear(p, rng, "traj.l2", H, H);
  for (std::size_t l = 0; l < cfg.trans_dec_layers; ++l) {
    add_decoder_layer(p, rng, "coarse.l" + std::to_string(l), cfg, cfg.coarse_self_attention);
  }
  add_heads(p, rng, "coarse.head", H);
  if (cfg.use_refine) {
    for (std::size_t l = 0; l < cfg.refine_dec_layers; ++l) {
      add_decoder_layer(p, rng, "refine.l" + std::to_string(l), cfg, cfg.refine_self_attention);
    }
    add_heads(p, rng, "refine.head", H);
  }
  return p;
}

Array2 trajectory_features(const vocab::TrajectoryVocabulary& v) {
  const std::size_t w = v.size() == 0 ? 0 : v[0].waypoints.size();
  Array2 out(v.size(), 2 * w);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto& wps = v[i].waypoints;
    if (wps.size() != w) throw ShapeMismatch("vocabulary entries differ in waypoint count");
    for (std::size_t j = 0; j < w; ++j) {
      out(i, 2 * j) = wps[j].position.x / static_cast<double>(kTrajScaleDiv);
      out(i, 2 * j + 1) = wps[j].position.y / static_cast<double>(kTrajScaleDiv);
    }
  }
  return out;
}

Array2 token_features(const scenario::ObservationTokens& obs) {
  Array2 out(obs.tokens.size(), scenario::kTokenWidth);
  for (std::size_t i = 0; i < obs.tokens.size(); ++i) {
    std::copy(obs.tokens[i].feature.begin(), obs.tokens[i].feature.end(), out.row_ptr(i));
  }
  return out;
}

Var encode_observation(Tape& t, ParamStore& p, const scenario::ObservationTokens& obs) {
  if (obs.tokens.empty()) throw InvalidArgument("observation has no tokens");
  std::vector<Var> parts;
  std::size_t i = 0;
  while (i < obs.tokens.size()) {
    const auto kind = obs.tokens[i].kind;
    std::size_t j = i;
    while (j < obs.tokens.size() && obs.tokens[j].kind == kind) ++j;
    Array2 x(j - i, scenario::kTokenWidth);
    for (std::size_t r = i; r < j; ++r) {
      std::copy(obs.tokens[r].feature.begin(), obs.tokens[r].feature.end(), x.row_ptr(r - i));
    }
    const std::string pre = kind_prefix(static_cast<std::size_t>(kind));
    const Var h = t.relu(linear(t, p, pre + ".l1", t.constant(std::move(x))));
    parts.push_back(linear(t, p, pre + ".l2", h));
    i = j;
  }
  return parts.size() == 1 ? parts[0] : t.concat_rows(parts);
}

Var encode_trajectories(Tape& t, ParamStore& p, Var features) {
  if (t.value(features).cols != p.value(p.find("traj.l1.w")).rows) {
    throw ShapeMismatch("trajectory features do not match the encoder input width");
  }
  return linear(t, p, "traj.l2", t.relu(linear(t, p, "traj.l1", features)));
}

StageOutput coarse_stage(Tape& t, ParamStore& p, const PlannerConfig& cfg, Var E, Var f) {
  Var x = f;
  for (std::size_t l = 0; l < cfg.trans_dec_layers; ++l) {
    x = decoder_layer(t, p, "coarse.l" + std::to_string(l), cfg, x, E, cfg.coarse_self_attention);
  }
  return heads(t, p, "coarse.head", x);
}

std::vector<std::size_t> topk_filter(std::span<const double> combined, std::size_t k) {
  return eval::topk_indices(combined, k);
}

std::vector<StageOutput> refine_stage(Tape& t, ParamStore& p, const PlannerConfig& cfg, Var E, Var g_filtered) {
  std::vector<StageOutput> out;
  Var x = g_filtered;
  for (std::size_t l = 0; l < cfg.refine_dec_layers; ++l) {
    x = decoder_layer(t, p, "refine.l" + std::to_string(l), cfg, x, E, cfg.refine_self_attention);
    out.push_back(heads(t, p, "refine.head", x));
  }
  return out;
}

std::vector<double> imitation_targets(std::span<const double> l2, double temperature) {
  if (!(temperature > 0.0)) throw InvalidArgument("imitation temperature must be positive");
  std::vector<double> out(l2.size());
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < l2.size(); ++i) {
    out[i] = -l2[i] * l2[i] / temperature;
    hi = std::max(hi, out[i]);
  }
  double z = 0.0;
  for (double& x : out) {
    x = std::exp(x - hi);
    z += x;
  }
  for (double& x : out) x /= z;
  return out;
}

Array2 label_table(const eval::LabelSet& labels) {
  Array2 out(labels.size(), kScoreColumns);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    double* row = out.row_ptr(i);
    row[0] = labels.nd(i);
    for (std::size_t c = 0; c < kMetricColumns; ++c) row[c + 1] = labels.value(i, harness::kHeadMetrics[c]);
  }
  return out;
}

Array2 gather_rows(const Array2& a, std::span<const std::size_t> rows) {
  Array2 out(rows.size(), a.cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= a.rows) throw ShapeMismatch("gather_rows: row index out of range");
    std::copy(a.row_ptr(rows[r]), a.row_ptr(rows[r]) + a.cols, out.row_ptr(r));
  }
  return out;
}

Var loss_coarse(Tape& t, Var scores, Var imi_logits, const Array2& labels, std::span<const double> imitation) {
  const Array2& s = t.value(scores);
  const Array2& z = t.value(imi_logits);
  if (!s.same_shape(labels) || s.cols != kScoreColumns || z.rows != s.rows || z.cols != 1 ||
      imitation.size() != s.rows) {
    throw ShapeMismatch("loss_coarse: score table, imitation logits and labels disagree");
  }
  const Var ce = t.cross_entropy(t.transpose(imi_logits), t.constant(Array2::row(imitation)));
  return t.add(ce, t.bce(scores, t.constant(labels), dc::Reduction::Sum));
}

Var loss_refine(Tape& t, const std::vector<StageOutput>& layers, const Array2& labels,
                std::span<const double> imitation) {
  Var total = t.constant(Array2(1, 1));
  for (const StageOutput& l : layers) {
    total = t.add(total, loss_coarse(t, l.scores, t.slice_cols(l.logits, 0, 1), labels, imitation));
  }
  return total;
}

Trajectory shift_toward(const Trajectory& expert, const Trajectory& target, double max_shift) {
  if (expert.waypoints.size() != target.waypoints.size()) {
    throw ShapeMismatch("shift_toward: trajectories differ in waypoint count");
  }
  Trajectory out = expert;
  for (std::size_t i = 0; i < out.waypoints.size(); ++i) {
    const Point2 off = target.waypoints[i].position - expert.waypoints[i].position;
    const double len = geom::norm(off);
    if (len <= max_shift) {
      out.waypoints[i].position = target.waypoints[i].position;
    } else {
      out.waypoints[i].position = expert.waypoints[i].position + (max_shift / len) * off;
    }
  }
  return out;
}

SoftLabelSet make_soft_labels(const Array2& teacher, const Array2& labels, std::span<const double> delta,
                              const Trajectory& expert, const Trajectory& selected,
                              const vocab::TrajectoryVocabulary& v, double nd_scale) {
  if (!teacher.same_shape(labels) || labels.cols != kScoreColumns || labels.rows != v.size()) {
    throw ShapeMismatch("make_soft_labels: teacher table and labels disagree");
  }
  if (delta.size() != kMetricColumns) throw ShapeMismatch("make_soft_labels: one delta per metric column");
  for (double d : delta) {
    if (!(d >= 0.0 && d <= 1.0)) throw InvalidArgument("delta must lie in [0, 1]");
  }
  SoftLabelSet out;
  out.yhat = labels;
  for (std::size_t r = 0; r < labels.rows; ++r) {
    for (std::size_t c = 1; c < kScoreColumns; ++c) {
      const double y = labels(r, c);
      const double d = delta[c - 1];
      out.yhat(r, c) = std::clamp(y + std::clamp(teacher(r, c) - y, -d, d), 0.0, 1.0);
    }
  }
  out.shifted_expert = shift_toward(expert, selected);
  out.shifted_l2.resize(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out.shifted_l2[i] = vocab::l2_distance(v[i], out.shifted_expert);
    out.yhat(i, 0) = vocab::normalized_distance(out.shifted_l2[i], nd_scale);
  }
  return out;
}

}  // namespace suprim::planner

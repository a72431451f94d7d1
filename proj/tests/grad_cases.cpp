#include "grad_cases.hpp"

#include <memory>
#include <numbers>

#include "suprim/labels.hpp"
#include "suprim/planner.hpp"
#include "suprim/vocab.hpp"
#include "test_util.hpp"

namespace suprim::testing {

using dc::Array2;
using dc::ParamStore;
using dc::Reduction;
using dc::Tape;
using dc::Var;

namespace {

// sum(out * R) so every output element carries a distinct weight
Var project(Tape& t, Var out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Array2& v = t.value(out);
  return t.sum(t.mul(out, t.constant(random_array(rng, v.rows, v.cols))));
}

ParamStore store_of(std::initializer_list<std::pair<const char*, Array2>> items) {
  ParamStore p;
  for (const auto& [name, a] : items) p.add(name, a);
  return p;
}

// zero biases put constant feature rows exactly on relu kinks
void jitter(ParamStore& p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for (dc::ParamId id = 0; id < p.size(); ++id) {
    for (double& x : p.value(id).data) x += u(rng);
  }
}

struct PlannerFixture {
  vocab::TrajectoryVocabulary vocab;
  Array2 features;
  scenario::ObservationTokens obs;
  scenario::Scenario scenario;
  eval::LabelSet labels;
  planner::SoftTarget soft;
};

std::shared_ptr<const PlannerFixture> planner_fixture() {
  auto f = std::make_shared<PlannerFixture>();
  vocab::GridSpec g;
  g.curvature_levels = 4;
  g.speed_levels = 4;
  g.initial_speed_levels = 2;
  g.expected_size = 32;
  f->vocab = vocab::build_vocabulary(g);
  f->features = planner::trajectory_features(f->vocab);
  f->scenario = straight_road(8.0);
  f->scenario.agents = {parked({15.0, 0.5}, 0.1)};
  f->scenario.expert = f->vocab[21];
  f->labels = eval::label_vocabulary(f->scenario, f->vocab);
  // ego, agent, one lane point, one boundary point
  scenario::ObserveConfig oc;
  oc.max_lane_points = 1;
  oc.max_boundary_points = 1;
  f->obs = scenario::observe(f->scenario, std::numbers::pi, oc);
  std::mt19937_64 rng(12);
  f->soft = {random_array(rng, f->vocab.size(), planner::kScoreColumns, 0.01, 0.99), f->vocab[5]};
  return f;
}

}  // namespace

std::vector<GradCase> diffcore_cases() {
  std::vector<GradCase> out;
  std::mt19937_64 rng(1);
  out.push_back({"matmul", store_of({{"a", random_array(rng, 3, 4)}, {"b", random_array(rng, 4, 2)}}),
                 [](Tape& t, ParamStore& s) { return project(t, t.matmul(t.param(s, 0), t.param(s, 1)), 7); }});
  out.push_back({"matmul_nt", store_of({{"a", random_array(rng, 3, 4)}, {"b", random_array(rng, 5, 4)}}),
                 [](Tape& t, ParamStore& s) { return project(t, t.matmul_nt(t.param(s, 0), t.param(s, 1)), 7); }});
  out.push_back({"add sub mul scale", store_of({{"a", random_array(rng, 3, 4)}, {"b", random_array(rng, 3, 4)}}),
                 [](Tape& t, ParamStore& s) {
                   const Var a = t.param(s, 0), b = t.param(s, 1);
                   return project(t, t.mul(t.add(a, b), t.sub(a, t.scale(b, 0.7))), 3);
                 }});
  out.push_back({"add_bias", store_of({{"a", random_array(rng, 4, 3)}, {"b", random_array(rng, 1, 3)}}),
                 [](Tape& t, ParamStore& s) { return project(t, t.add_bias(t.param(s, 0), t.param(s, 1)), 4); }});
  out.push_back({"transpose", store_of({{"a", random_array(rng, 2, 5)}}),
                 [](Tape& t, ParamStore& s) { return project(t, t.transpose(t.param(s, 0)), 5); }});
  out.push_back({"concat and slice",
                 store_of({{"a", random_array(rng, 3, 2)}, {"b", random_array(rng, 3, 4)}, {"c", random_array(rng, 2, 6)}}),
                 [](Tape& t, ParamStore& s) {
                   const Var ab = t.concat_cols({t.param(s, 0), t.param(s, 1)});
                   const Var abc = t.concat_rows({ab, t.param(s, 2)});
                   return project(t, t.slice_cols(abc, 1, 5), 6);
                 }});
  out.push_back({"gather_rows with repeats", store_of({{"a", random_array(rng, 5, 3)}}),
                 [](Tape& t, ParamStore& s) { return project(t, t.gather_rows(t.param(s, 0), {4, 1, 1, 0}), 8); }});
  out.push_back({"mean and sum", store_of({{"a", random_array(rng, 3, 3)}}), [](Tape& t, ParamStore& s) {
                   const Var a = t.param(s, 0);
                   return t.add(t.scale(t.mean(t.mul(a, a)), 3.0), t.sum(a));
                 }});

  rng.seed(2);
  Array2 off_kink = random_array(rng, 4, 4);
  for (double& x : off_kink.data) x += x >= 0 ? 0.05 : -0.05;
  out.push_back({"relu", store_of({{"a", off_kink}}),
                 [](Tape& t, ParamStore& s) { return project(t, t.relu(t.param(s, 0)), 9); }});
  out.push_back({"sigmoid", store_of({{"a", random_array(rng, 3, 5, -4, 4)}}),
                 [](Tape& t, ParamStore& s) { return project(t, t.sigmoid(t.param(s, 0)), 10); }});
  out.push_back({"softmax_rows", store_of({{"a", random_array(rng, 3, 6, -2, 2)}}),
                 [](Tape& t, ParamStore& s) { return project(t, t.softmax_rows(t.param(s, 0)), 11); }});
  out.push_back({"layer_norm",
                 store_of({{"x", random_array(rng, 4, 6)}, {"g", random_array(rng, 1, 6, 0.5, 1.5)}, {"b", random_array(rng, 1, 6)}}),
                 [](Tape& t, ParamStore& s) {
                   return project(t, t.layer_norm(t.param(s, 0), t.param(s, 1), t.param(s, 2)), 12);
                 }});
  for (std::size_t heads : {1u, 2u}) {
    out.push_back({"attention " + std::to_string(heads) + " head(s)",
                   store_of({{"q", random_array(rng, 3, 4)}, {"k", random_array(rng, 5, 4)}, {"v", random_array(rng, 5, 4)}}),
                   [heads](Tape& t, ParamStore& s) {
                     return project(t, t.attention(t.param(s, 0), t.param(s, 1), t.param(s, 2), heads), 13);
                   }});
  }

  rng.seed(3);
  const Array2 target = random_array(rng, 4, 3, 0.0, 1.0);
  out.push_back({"bce mean", store_of({{"z", random_array(rng, 4, 3, -3, 3)}}),
                 [target](Tape& t, ParamStore& s) { return t.bce(t.sigmoid(t.param(s, 0)), t.constant(target)); }});
  out.push_back({"bce sum", store_of({{"z", random_array(rng, 4, 3, -3, 3)}}), [target](Tape& t, ParamStore& s) {
                   return t.bce(t.sigmoid(t.param(s, 0)), t.constant(target), Reduction::Sum);
                 }});
  Array2 dist = random_array(rng, 2, 5, 0.0, 1.0);
  for (std::size_t r = 0; r < 2; ++r) {
    double z = 0.0;
    for (std::size_t c = 0; c < 5; ++c) z += dist(r, c);
    for (std::size_t c = 0; c < 5; ++c) dist(r, c) /= z;
  }
  out.push_back({"cross_entropy", store_of({{"l", random_array(rng, 2, 5, -2, 2)}}),
                 [dist](Tape& t, ParamStore& s) { return t.cross_entropy(t.param(s, 0), t.constant(dist)); }});
  return out;
}

std::vector<GradCase> planner_cases() {
  const auto fx = planner_fixture();
  std::vector<GradCase> out;
  for (bool refine : {true, false}) {
    planner::PlannerConfig cfg;
    cfg.hidden_dim = 8;
    cfg.ffn_dim = 12;
    cfg.attention_heads = 2;
    cfg.trans_dec_layers = 1;
    cfg.refine_dec_layers = 2;
    cfg.top_k = 6;
    cfg.coarse_self_attention = true;
    cfg.refine_self_attention = true;
    cfg.use_refine = refine;
    ParamStore p = planner::init_params(cfg, refine ? 11 : 13);
    jitter(p, refine ? 21 : 23);
    out.push_back({refine ? "planner loss, coarse-to-fine" : "planner loss, single stage", std::move(p),
                   [fx, cfg](Tape& t, ParamStore& s) {
                     const planner::SampleLoss sl = planner::sample_loss(t, s, cfg, fx->features, fx->obs, fx->labels,
                                                                         fx->scenario.expert, fx->vocab, &fx->soft);
                     return t.add(sl.l_ori, sl.l_soft);
                   }});
  }
  return out;
}

}  // namespace suprim::testing

#include <chrono>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <random>
#include <sstream>

#include "suprim/binio.hpp"
#include "suprim/errors.hpp"
#include "suprim/planner.hpp"
#include "suprim/scenario.hpp"

namespace suprim::planner {

using dc::Array2;
using dc::ParamStore;
using dc::Tape;
using dc::Var;

namespace {

constexpr char kCheckpointMagic[4] = {'S', 'P', 'C', 'K'};

void put_config(std::ostream& os, const PlannerConfig& c) {
  for (std::size_t v : {c.hidden_dim, c.ffn_dim, c.trans_dec_layers, c.refine_dec_layers, c.attention_heads, c.top_k,
                        c.batch_size, c.epochs}) {
    bin::put<std::uint64_t>(os, v);
  }
  for (bool b : {c.coarse_self_attention, c.refine_self_attention, c.use_refine, c.use_augmentation,
                 c.use_distillation}) {
    bin::put<std::uint8_t>(os, b ? 1 : 0);
  }
  bin::put(os, c.theta);
  for (double d : c.delta) bin::put(os, d);
  bin::put(os, c.imi_temperature);
  bin::put<std::uint8_t>(os, static_cast<std::uint8_t>(c.ema.mode));
  bin::put(os, c.lr);
  bin::put<std::uint8_t>(os, static_cast<std::uint8_t>(c.version));
  bin::put(os, c.fov_halfangle);
}

PlannerConfig get_config(std::istream& is) {
  PlannerConfig c;
  for (std::size_t* v : {&c.hidden_dim, &c.ffn_dim, &c.trans_dec_layers, &c.refine_dec_layers, &c.attention_heads,
                         &c.top_k, &c.batch_size, &c.epochs}) {
    *v = bin::get<std::uint64_t>(is);
  }
  for (bool* b : {&c.coarse_self_attention, &c.refine_self_attention, &c.use_refine, &c.use_augmentation,
                  &c.use_distillation}) {
    *b = bin::get<std::uint8_t>(is) != 0;
  }
  c.theta = bin::get<double>(is);
  for (double& d : c.delta) d = bin::get<double>(is);
  c.imi_temperature = bin::get<double>(is);
  c.ema.mode = static_cast<EmaMode>(bin::get<std::uint8_t>(is));
  c.lr = bin::get<double>(is);
  c.version = static_cast<harness::MetricVersion>(bin::get<std::uint8_t>(is));
  c.fov_halfangle = bin::get<double>(is);
  return c;
}

void put_array(std::ostream& os, const Array2& a) {
  bin::put<std::uint64_t>(os, a.rows);
  bin::put<std::uint64_t>(os, a.cols);
  bin::put_vec(os, a.data);
}

Array2 get_array(std::istream& is) {
  const auto r = bin::get<std::uint64_t>(is);
  const auto c = bin::get<std::uint64_t>(is);
  auto data = bin::get_vec<double>(is);
  if (data.size() != r * c) throw IoError("corrupt checkpoint (array shape)");
  return Array2(r, c, std::move(data));
}

void put_store(std::ostream& os, const ParamStore& s) {
  bin::put<std::uint64_t>(os, s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    bin::put_str(os, s.name(i));
    put_array(os, s.value(i));
  }
}

ParamStore get_store(std::istream& is) {
  ParamStore s;
  const auto n = bin::get<std::uint64_t>(is);
  if (n > (1U << 20)) throw IoError("corrupt checkpoint (parameter count)");
  for (std::uint64_t i = 0; i < n; ++i) {
    std::string name = bin::get_str(is);
    s.add(name, get_array(is));
  }
  return s;
}

void hash_store(bin::Fnv1a& h, const ParamStore& s) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    h.str(s.name(i));
    const Array2& a = s.value(i);
    h.u64(a.rows);
    h.u64(a.cols);
    h.bytes(a.data.data(), a.data.size() * sizeof(double));
  }
}

// teacher table: last refine layer inside the teacher's top-k, coarse scores elsewhere
SoftTarget teacher_target(ParamStore& teacher, const PlannerConfig& cfg, const Array2& traj_features,
                          const scenario::ObservationTokens& obs, const vocab::TrajectoryVocabulary& v) {
  Array2 f;
  {
    Tape t(false);
    f = t.value(encode_trajectories(t, teacher, t.constant(traj_features)));
  }
  InferResult r = run_pipeline(teacher, cfg, f, obs, v);
  SoftTarget out;
  out.teacher_table = std::move(r.coarse.scores);
  if (!r.refine.empty()) {
    const Array2& last = r.refine.back().scores;
    for (std::size_t i = 0; i < r.topk.size(); ++i) {
      std::memcpy(out.teacher_table.row_ptr(r.topk[i]), last.row_ptr(i), kScoreColumns * sizeof(double));
    }
  }
  out.selected = std::move(r.trajectory);
  return out;
}

struct Snapshot {
  ParamStore student;
  ParamStore teacher;
  dc::AdamState adam;
  std::uint64_t step;
  std::uint64_t epoch;
};

}  // namespace

std::uint64_t data_hash(const std::vector<TrainSample>& data) {
  bin::Fnv1a h;
  for (const TrainSample& d : data) {
    h.u64(d.scenario->seed);
    h.bytes(d.labels->bits.data(), d.labels->bits.size() * sizeof(std::uint16_t));
    h.bytes(d.labels->ep.data(), d.labels->ep.size() * sizeof(double));
    h.bytes(d.labels->l2.data(), d.labels->l2.size() * sizeof(double));
  }
  return h.value();
}

std::uint64_t Checkpoint::config_hash() const {
  bin::Fnv1a h;
  h.u64(config.hash());
  std::ostringstream os;
  vocab::write_grid(os, grid);
  h.str(os.str());
  return h.value();
}

std::uint64_t Checkpoint::id() const {
  bin::Fnv1a h;
  h.u64(config_hash());
  h.u64(step);
  hash_store(h, student);
  hash_store(h, teacher);
  return h.value();
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write checkpoint " + tmp);
    os.write(kCheckpointMagic, 4);
    bin::put(os, kCheckpointVersion);
    put_config(os, c.config);
    vocab::write_grid(os, c.grid);
    bin::put(os, c.config_hash());
    for (std::uint64_t v : {c.step, c.epoch, c.seed, c.data_hash}) bin::put(os, v);
    put_store(os, c.student);
    put_store(os, c.teacher);
    for (double v : {c.adam.lr, c.adam.beta1, c.adam.beta2, c.adam.eps}) bin::put(os, v);
    bin::put(os, c.adam.step);
    bin::put<std::uint64_t>(os, c.adam.m.size());
    for (const Array2& a : c.adam.m) put_array(os, a);
    for (const Array2& a : c.adam.v) put_array(os, a);
    os.flush();
    if (!os) throw IoError("failed writing checkpoint " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read checkpoint " + path.string());
  char magic[4] = {};
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kCheckpointMagic, 4) != 0) throw IoError("not a checkpoint: " + path.string());
  const auto version = bin::get<std::uint32_t>(is);
  if (version != kCheckpointVersion) {
    throw CheckpointVersionMismatch("checkpoint version " + std::to_string(version) + ", expected " +
                                    std::to_string(kCheckpointVersion));
  }
  Checkpoint c;
  c.config = get_config(is);
  c.grid = vocab::read_grid(is);
  const auto stored_hash = bin::get<std::uint64_t>(is);
  if (stored_hash != c.config_hash()) throw IoError("checkpoint config hash mismatch: " + path.string());
  c.step = bin::get<std::uint64_t>(is);
  c.epoch = bin::get<std::uint64_t>(is);
  c.seed = bin::get<std::uint64_t>(is);
  c.data_hash = bin::get<std::uint64_t>(is);
  c.student = get_store(is);
  c.teacher = get_store(is);
  if (!c.student.same_layout(c.teacher)) throw IoError("checkpoint student and teacher layouts differ");
  c.adam.lr = bin::get<double>(is);
  c.adam.beta1 = bin::get<double>(is);
  c.adam.beta2 = bin::get<double>(is);
  c.adam.eps = bin::get<double>(is);
  c.adam.step = bin::get<std::uint64_t>(is);
  const auto n = bin::get<std::uint64_t>(is);
  if (n != c.student.size()) throw IoError("checkpoint optimizer state does not match the parameters");
  for (std::uint64_t i = 0; i < n; ++i) c.adam.m.push_back(get_array(is));
  for (std::uint64_t i = 0; i < n; ++i) c.adam.v.push_back(get_array(is));
  return c;
}

SampleLoss sample_loss(Tape& t, ParamStore& p, const PlannerConfig& cfg, const Array2& traj_features,
                       const scenario::ObservationTokens& obs, const eval::LabelSet& labels, const Trajectory& expert,
                       const vocab::TrajectoryVocabulary& v, const SoftTarget* soft) {
  if (labels.size() != v.size() || traj_features.rows != v.size()) {
    throw ShapeMismatch("labels, features and vocabulary sizes differ");
  }
  const Var E = encode_observation(t, p, obs);
  const Var f = encode_trajectories(t, p, t.constant(traj_features));
  const StageOutput co = coarse_stage(t, p, cfg, E, f);
  const Var imi_logits = t.slice_cols(co.logits, 0, 1);
  const Array2 Y = label_table(labels);
  SampleLoss out;
  out.l_ori = loss_coarse(t, co.scores, imi_logits, Y, imitation_targets(labels.l2, cfg.imi_temperature));

  std::vector<std::size_t> idx;
  std::vector<StageOutput> layers;
  if (cfg.use_refine) {
    ScoreTable tab{t.value(co.scores), {}, -1};
    if (!tab.scores.all_finite()) throw NonFiniteDetected("non-finite coarse scores");
    idx = topk_filter(tab.combined(cfg.coefficients()), cfg.top_k);
    layers = refine_stage(t, p, cfg, E, t.gather_rows(co.features, idx));
    std::vector<double> l2(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) l2[i] = labels.l2[idx[i]];
    out.l_ori = t.add(out.l_ori, loss_refine(t, layers, gather_rows(Y, idx), imitation_targets(l2, cfg.imi_temperature)));
  }

  if (soft != nullptr) {
    const SoftLabelSet sl =
        make_soft_labels(soft->teacher_table, Y, cfg.delta, expert, soft->selected, v, labels.nd_scale);
    out.l_soft = loss_coarse(t, co.scores, imi_logits, sl.yhat, imitation_targets(sl.shifted_l2, cfg.imi_temperature));
    if (cfg.use_refine) {
      std::vector<double> l2(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) l2[i] = sl.shifted_l2[idx[i]];
      out.l_soft = t.add(out.l_soft, loss_refine(t, layers, gather_rows(sl.yhat, idx),
                                                 imitation_targets(l2, cfg.imi_temperature)));
    }
  }
  return out;
}

Checkpoint train(const std::vector<TrainSample>& data, const vocab::TrajectoryVocabulary& v, const PlannerConfig& cfg,
                 std::uint64_t seed, const TrainOptions& opt) {
  if (data.empty()) throw EmptyDataset("training set is empty");
  cfg.validate(v.size());
  for (const TrainSample& d : data) {
    if (d.scenario == nullptr || d.labels == nullptr || d.labels->size() != v.size()) {
      throw ShapeMismatch("training sample without labels for this vocabulary");
    }
  }
  const Array2 features = trajectory_features(v);
  Checkpoint ck;
  ck.config = cfg;
  ck.grid = v.spec();
  ck.seed = seed;
  ck.data_hash = data_hash(data);
  ck.student = init_params(cfg, seed, features.cols);
  ck.teacher = ck.student;
  ck.adam = make_adam(ck.student, cfg.lr);

  std::vector<scenario::ObservationTokens> obs;
  obs.reserve(data.size());
  for (const TrainSample& d : data) obs.push_back(scenario::observe(*d.scenario, cfg.fov_halfangle, opt.observe));

  std::ofstream log;
  if (opt.out_dir) {
    std::filesystem::create_directories(*opt.out_dir);
    log.open(*opt.out_dir / "train_log.jsonl", std::ios::trunc);
    if (!log) throw IoError("cannot write training log in " + opt.out_dir->string());
  }

  std::mt19937_64 rng(seed ^ 0x7a11c0ffee5eedULL);
  const double inv_batch = 1.0 / static_cast<double>(cfg.batch_size);
  Snapshot good{ck.student, ck.teacher, ck.adam, 0, 0};
  try {
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
      const double m = cfg.ema.momentum(static_cast<int>(epoch));
      std::vector<std::size_t> order(data.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[scenario::uniform_index(rng, i)]);
      }
      for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
        if (opt.max_steps != 0 && ck.step >= opt.max_steps) break;
        const auto t0 = std::chrono::steady_clock::now();
        good = {ck.student, ck.teacher, ck.adam, ck.step, ck.epoch};
        ck.student.zero_grad();
        StepLog rec;
        const std::size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
        for (std::size_t b = b0; b < b1; ++b) {
          const TrainSample& d = data[order[b]];
          const scenario::ObservationTokens& o = obs[order[b]];
          std::optional<SoftTarget> soft;
          if (cfg.use_distillation) soft = teacher_target(ck.teacher, cfg, features, o, v);
          {
            Tape t;
            const SampleLoss sl = sample_loss(t, ck.student, cfg, features, o, *d.labels, d.scenario->expert, v,
                                              soft ? &*soft : nullptr);
            Var total = sl.l_ori;
            rec.l_ori += t.value(sl.l_ori).data[0];
            if (sl.l_soft.valid()) {
              rec.l_soft += t.value(sl.l_soft).data[0];
              total = t.add(total, sl.l_soft);
            }
            t.backward(t.scale(total, inv_batch));
          }
          if (cfg.use_augmentation) {
            const double theta = scenario::sample_rotation(rng, cfg.theta);
            const Scenario rs = scenario::rotate_scenario(*d.scenario, theta);
            const eval::LabelSet rl = eval::label_vocabulary(rs, v, opt.evaluator);
            const auto ro = scenario::observe(rs, cfg.fov_halfangle, opt.observe);
            Tape t;
            const SampleLoss sl = sample_loss(t, ck.student, cfg, features, ro, rl, rs.expert, v, nullptr);
            rec.l_aug += t.value(sl.l_ori).data[0];
            t.backward(t.scale(sl.l_ori, inv_batch));
          }
        }
        if (!ck.student.grads_finite()) throw NonFiniteDetected("non-finite gradient at step " + std::to_string(ck.step));
        dc::adam_step(ck.student, ck.adam);
        if (!ck.student.values_finite()) throw NonFiniteDetected("non-finite parameters at step " + std::to_string(ck.step));
        dc::ema_update(ck.teacher, ck.student, m);
        ++ck.step;
        const double n = static_cast<double>(b1 - b0);
        rec.step = ck.step;
        rec.epoch = epoch;
        rec.l_ori /= n;
        rec.l_aug /= n;
        rec.l_soft /= n;
        rec.ema_m = m;
        rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        if (log.is_open()) {
          const nlohmann::json j = {{"step", rec.step},   {"L_ori", rec.l_ori}, {"L_aug", rec.l_aug},
                                    {"L_soft", rec.l_soft}, {"ema_m", rec.ema_m}, {"wall_ms", rec.wall_ms}};
          log << j.dump() << std::endl;
        }
        if (opt.on_step) opt.on_step(rec);
      }
      ck.epoch = epoch;
      if (opt.out_dir) {
        save_checkpoint(*opt.out_dir / ("checkpoint_epoch" + std::to_string(epoch) + ".bin"), ck);
        save_checkpoint(*opt.out_dir / "checkpoint.bin", ck);
      }
      if (opt.max_steps != 0 && ck.step >= opt.max_steps) break;
    }
  } catch (const NonFiniteDetected&) {
    ck.student = std::move(good.student);
    ck.teacher = std::move(good.teacher);
    ck.adam = std::move(good.adam);
    ck.step = good.step;
    ck.epoch = good.epoch;
    if (opt.out_dir) save_checkpoint(*opt.out_dir / "checkpoint_last_good.bin", ck);
    throw;
  }
  return ck;
}

}  // namespace suprim::planner

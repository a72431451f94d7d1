#include "suprim/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "suprim/errors.hpp"
#include "suprim/parallel.hpp"
#include "suprim/scenario.hpp"

namespace suprim::harness {

using eval::kAllMetrics;
using eval::Metric;

EvalSet select_split(const scenario::Dataset& ds, const std::vector<eval::LabelSet>& labels, scenario::SplitTag tag,
                     bool all) {
  if (labels.size() != ds.records.size()) throw ShapeMismatch("labels do not match the dataset records");
  EvalSet out;
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    if (all || ds.records[i].split == tag) out.add(ds.records[i].scenario, labels[i]);
  }
  return out;
}

std::vector<eval::LabelSet> ensure_labels(const scenario::Dataset& ds, const std::filesystem::path& cache,
                                          const vocab::TrajectoryVocabulary& v, const eval::EvaluatorConfig& cfg) {
  const eval::LabelCacheKey key{ds.content_hash, v.spec(), eval::hash_evaluator_config(cfg)};
  try {
    auto labels = eval::load_label_cache(cache, key);
    if (labels.size() == ds.records.size()) return labels;
  } catch (const LabelCacheMiss&) {
  }
  std::vector<eval::LabelSet> labels;
  labels.reserve(ds.records.size());
  for (const auto& r : ds.records) labels.push_back(eval::label_vocabulary(r.scenario, v, cfg));
  eval::save_label_cache(cache, key, labels);
  return labels;
}

eval::MetricWeights weights_for(MetricVersion v, const eval::EvaluatorConfig& cfg) {
  return v == MetricVersion::V1 ? cfg.pdms_weights() : cfg.epdms_weights();
}

namespace {

void fill_means(EvalReport& r) {
  r.metric_means.fill(0.0);
  r.aggregate_mean = 0.0;
  if (r.rows.empty()) return;
  for (const EvalRow& row : r.rows) {
    for (Metric m : kAllMetrics) r.metric_means[static_cast<std::size_t>(m)] += row.subscores.get(m);
    r.aggregate_mean += row.aggregate;
  }
  const double n = static_cast<double>(r.rows.size());
  for (double& x : r.metric_means) x = 100.0 * x / n;
  r.aggregate_mean = 100.0 * r.aggregate_mean / n;
}

void check_set(const EvalSet& set) {
  if (set.scenarios.size() != set.labels.size()) throw ShapeMismatch("eval set scenarios and labels differ in count");
}

std::vector<planner::InferResult> infer_all(const planner::Planner& model, const EvalSet& set, bool use_teacher,
                                            const scenario::ObserveConfig& obs, double halfangle) {
  check_set(set);
  model.encodings(use_teacher);  // fill the cache before workers read it
  std::vector<planner::InferResult> out(set.size());
  parallel_for(set.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      out[i] = model.infer_tokens(scenario::observe(*set.scenarios[i], halfangle, obs), use_teacher);
    }
  });
  return out;
}

}  // namespace

EvalReport report_from_selection(const EvalSet& set, const std::vector<std::size_t>& selected, MetricVersion v,
                                 const eval::EvaluatorConfig& cfg) {
  check_set(set);
  if (selected.size() != set.size()) throw ShapeMismatch("one selection per scenario required");
  const eval::MetricWeights w = weights_for(v, cfg);
  EvalReport r;
  r.version = v;
  r.rows.resize(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    const eval::LabelSet& l = *set.labels[i];
    if (selected[i] >= l.size()) throw InvalidArgument("selected index outside the vocabulary");
    EvalRow& row = r.rows[i];
    row.seed = set.scenarios[i]->seed;
    row.selected = selected[i];
    row.subscores = l.subscores(selected[i]);
    row.aggregate = eval::aggregate(row.subscores, w);
  }
  fill_means(r);
  return r;
}

EvalReport evaluate(const planner::Planner& model, const EvalSet& set, MetricVersion v, bool use_teacher,
                    const eval::EvaluatorConfig& cfg, const scenario::ObserveConfig& obs) {
  const auto results = infer_all(model, set, use_teacher, obs, model.config().fov_halfangle);
  std::vector<std::size_t> selected(results.size());
  for (std::size_t i = 0; i < results.size(); ++i) selected[i] = results[i].selected;
  EvalReport r = report_from_selection(set, selected, v, cfg);
  r.checkpoint_id = model.checkpoint().id();
  return r;
}

double oracle_ceiling(const EvalSet& set, MetricVersion v, const eval::EvaluatorConfig& cfg) {
  check_set(set);
  if (set.size() == 0) throw EmptyDataset("no scenarios to evaluate");
  const eval::MetricWeights w = weights_for(v, cfg);
  double sum = 0.0;
  for (const eval::LabelSet* l : set.labels) {
    const auto agg = l->aggregates(w);
    sum += *std::max_element(agg.begin(), agg.end());
  }
  return 100.0 * sum / static_cast<double>(set.size());
}

double random_baseline(const EvalSet& set, MetricVersion v, std::size_t samples, std::uint64_t seed,
                       const eval::EvaluatorConfig& cfg) {
  check_set(set);
  if (set.size() == 0) throw EmptyDataset("no scenarios to evaluate");
  if (samples == 0) throw InvalidArgument("random baseline needs at least one sample");
  const eval::MetricWeights w = weights_for(v, cfg);
  std::mt19937_64 rng(seed);
  double sum = 0.0;
  for (const eval::LabelSet* l : set.labels) {
    double s = 0.0;
    for (std::size_t k = 0; k < samples; ++k) s += l->aggregate(scenario::uniform_index(rng, l->size()), w);
    sum += s / static_cast<double>(samples);
  }
  return 100.0 * sum / static_cast<double>(set.size());
}

OracleTable oracle_from_rankings(const EvalSet& set, const std::vector<std::vector<double>>& rankings,
                                 const std::vector<std::size_t>& ks, MetricVersion v,
                                 const eval::EvaluatorConfig& cfg) {
  check_set(set);
  if (rankings.size() != set.size()) throw ShapeMismatch("one ranking per scenario required");
  if (set.size() == 0) throw EmptyDataset("no scenarios to evaluate");
  const eval::MetricWeights w = weights_for(v, cfg);
  OracleTable t;
  t.ks = ks;
  t.values.assign(ks.size(), 0.0);
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto gt = set.labels[i]->aggregates(w);
    for (std::size_t j = 0; j < ks.size(); ++j) t.values[j] += eval::oracle_topk(gt, rankings[i], ks[j]);
  }
  for (double& x : t.values) x = 100.0 * x / static_cast<double>(set.size());
  return t;
}

OracleTable oracle_study(const planner::Planner& model, const EvalSet& set, const std::vector<std::size_t>& ks,
                         MetricVersion v, bool use_teacher, const eval::EvaluatorConfig& cfg,
                         const scenario::ObserveConfig& obs) {
  const auto results = infer_all(model, set, use_teacher, obs, model.config().fov_halfangle);
  std::vector<std::vector<double>> rankings(results.size());
  for (std::size_t i = 0; i < results.size(); ++i) rankings[i] = results[i].ranking();
  return oracle_from_rankings(set, rankings, ks, v, cfg);
}

const char* to_string(TurnSplit s) {
  switch (s) {
    case TurnSplit::Left: return "left";
    case TurnSplit::Forward: return "forward";
    case TurnSplit::Right: return "right";
  }
  return "?";
}

TurnSplit SplitSpec::classify(const Trajectory& expert) const {
  // a stopped expert has no direction of travel
  if (geom::distance(expert.waypoints.back().position, expert.start.position) < 0.1) return TurnSplit::Forward;
  const double deg = geom::turning_angle(expert);
  if (deg > boundary_deg) return TurnSplit::Left;
  if (deg < -boundary_deg) return TurnSplit::Right;
  return TurnSplit::Forward;
}

SplitReports split_report(const EvalSet& set, const EvalReport& full, const SplitSpec& spec) {
  check_set(set);
  if (full.rows.size() != set.size()) throw ShapeMismatch("report rows do not match the eval set");
  SplitReports out;
  for (EvalReport* r : {&out.left, &out.forward, &out.right}) {
    r->version = full.version;
    r->config_hash = full.config_hash;
    r->checkpoint_id = full.checkpoint_id;
  }
  for (std::size_t i = 0; i < set.size(); ++i) {
    const TurnSplit s = spec.classify(set.scenarios[i]->expert);
    EvalReport& r = s == TurnSplit::Left ? out.left : s == TurnSplit::Right ? out.right : out.forward;
    r.rows.push_back(full.rows[i]);
  }
  for (EvalReport* r : {&out.left, &out.forward, &out.right}) fill_means(*r);
  return out;
}

SplitReports split_eval(const planner::Planner& model, const EvalSet& set, MetricVersion v, bool use_teacher,
                        const SplitSpec& spec, const eval::EvaluatorConfig& cfg, const scenario::ObserveConfig& obs) {
  return split_report(set, evaluate(model, set, v, use_teacher, cfg, obs), spec);
}

Histogram heading_histogram(const vocab::TrajectoryVocabulary& v, const std::vector<const eval::LabelSet*>& labels,
                            std::size_t bins, const eval::EvaluatorConfig& cfg) {
  if (labels.empty()) throw EmptyDataset("heading histogram needs at least one labeled scenario");
  if (bins == 0) throw InvalidArgument("bins must be positive");
  const double pi = std::numbers::pi;
  Histogram h;
  h.edges.resize(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b) h.edges[b] = -pi + 2.0 * pi * static_cast<double>(b) / static_cast<double>(bins);
  h.counts.assign(bins, 0);
  std::vector<std::size_t> bin_of(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double a = geom::normalize_angle(v[i].waypoints.back().heading);
    auto b = static_cast<std::size_t>(std::floor((a + pi) / (2.0 * pi) * static_cast<double>(bins)));
    bin_of[i] = std::min(b, bins - 1);
  }
  const eval::MetricWeights w = cfg.epdms_weights();
  for (const eval::LabelSet* l : labels) {
    if (l->size() != v.size()) throw ShapeMismatch("labels do not match the vocabulary");
    const auto agg = l->aggregates(w);
    const auto top = eval::topk_indices(agg, std::min<std::size_t>(3, agg.size()));
    std::vector<char> take(agg.size(), 0);
    for (std::size_t i : top) take[i] = 1;
    for (std::size_t i = 0; i < agg.size(); ++i) {
      if (take[i] || agg[i] > 0.99) ++h.counts[bin_of[i]];
    }
  }
  const std::size_t hi = *std::max_element(h.counts.begin(), h.counts.end());
  h.freq.resize(bins);
  for (std::size_t b = 0; b < bins; ++b) h.freq[b] = hi == 0 ? 0.0 : static_cast<double>(h.counts[b]) / static_cast<double>(hi);
  return h;
}

double kl_to_uniform(const Histogram& h) {
  const double total = static_cast<double>(std::accumulate(h.counts.begin(), h.counts.end(), std::size_t{0}));
  if (total == 0.0) throw EmptyDataset("histogram has no counts");
  const double n = static_cast<double>(h.counts.size());
  double kl = 0.0;
  for (std::size_t c : h.counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / total;
    kl += p * std::log(p * n);
  }
  return kl;
}

std::vector<eval::LabelSet> rotated_labels(const std::vector<const Scenario*>& scenarios,
                                           const vocab::TrajectoryVocabulary& v, double max_angle, std::uint64_t seed,
                                           const eval::EvaluatorConfig& cfg) {
  std::mt19937_64 rng(seed);
  std::vector<eval::LabelSet> out;
  out.reserve(scenarios.size());
  for (const Scenario* s : scenarios) {
    const double theta = scenario::sample_rotation(rng, max_angle);
    out.push_back(eval::label_vocabulary(scenario::rotate_scenario(*s, theta), v, cfg));
  }
  return out;
}

std::vector<FovRow> fov_sweep(const std::vector<std::pair<int, const planner::Planner*>>& models, const EvalSet& set,
                              MetricVersion v, bool use_teacher, const eval::EvaluatorConfig& cfg,
                              const scenario::ObserveConfig& obs) {
  std::vector<FovRow> rows;
  for (const auto& [cameras, model] : models) {
    FovRow row;
    row.cameras = cameras;
    row.halfangle = scenario::camera_halfangle(cameras);
    double tokens = 0.0;
    for (const Scenario* s : set.scenarios) tokens += static_cast<double>(scenario::observe(*s, row.halfangle, obs).tokens.size());
    row.mean_tokens = set.size() == 0 ? 0.0 : tokens / static_cast<double>(set.size());
    const auto results = infer_all(*model, set, use_teacher, obs, row.halfangle);
    std::vector<std::size_t> selected(results.size());
    for (std::size_t i = 0; i < results.size(); ++i) selected[i] = results[i].selected;
    row.aggregate = report_from_selection(set, selected, v, cfg).aggregate_mean;
    rows.push_back(row);
  }
  return rows;
}

namespace {

std::string f2(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

std::string g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string hex(std::uint64_t x) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

const char* aggregate_name(MetricVersion v) { return v == MetricVersion::V1 ? "PDMS" : "EPDMS"; }

}  // namespace

std::string report_text(const EvalReport& r, const std::string& title) {
  std::ostringstream os;
  os << title << '\n';
  os << "version " << to_string(r.version) << "  scenarios " << r.rows.size() << "  config " << hex(r.config_hash)
     << "  checkpoint " << hex(r.checkpoint_id) << '\n';
  for (Metric m : kAllMetrics) os << eval::metric_name(m) << '\t';
  os << aggregate_name(r.version) << '\n';
  for (Metric m : kAllMetrics) os << f2(r.mean(m)) << '\t';
  os << f2(r.aggregate_mean) << '\n';
  return os.str();
}

std::string report_csv(const EvalReport& r) {
  std::ostringstream os;
  os << "seed,selected";
  for (Metric m : kAllMetrics) os << ',' << eval::metric_name(m);
  os << ",aggregate\n";
  for (const EvalRow& row : r.rows) {
    os << row.seed << ',' << row.selected;
    for (Metric m : kAllMetrics) os << ',' << g17(row.subscores.get(m));
    os << ',' << g17(row.aggregate) << '\n';
  }
  os << "mean,";
  for (Metric m : kAllMetrics) os << ',' << g17(r.mean(m) / 100.0);
  os << ',' << g17(r.aggregate_mean / 100.0) << '\n';
  return os.str();
}

std::string oracle_text(const OracleTable& t) {
  std::ostringstream os;
  os << "K";
  for (std::size_t k : t.ks) os << '\t' << k;
  os << "\nbest-in-top-K";
  for (double x : t.values) os << '\t' << f2(x);
  os << '\n';
  return os.str();
}

std::string oracle_csv(const OracleTable& t) {
  std::ostringstream os;
  os << "k,value\n";
  for (std::size_t i = 0; i < t.ks.size(); ++i) os << t.ks[i] << ',' << g17(t.values[i] / 100.0) << '\n';
  return os.str();
}

std::string histogram_csv(const Histogram& h) {
  std::ostringstream os;
  os << "bin_lo,bin_hi,count,freq\n";
  for (std::size_t b = 0; b < h.counts.size(); ++b) {
    os << g17(h.edges[b]) << ',' << g17(h.edges[b + 1]) << ',' << h.counts[b] << ',' << g17(h.freq[b]) << '\n';
  }
  return os.str();
}

std::string fov_csv(const std::vector<FovRow>& rows) {
  std::ostringstream os;
  os << "cameras,halfangle,mean_tokens,aggregate\n";
  for (const FovRow& r : rows) {
    os << r.cameras << ',' << g17(r.halfangle) << ',' << g17(r.mean_tokens) << ',' << g17(r.aggregate / 100.0) << '\n';
  }
  return os.str();
}

std::string split_text(const SplitReports& s) {
  std::string out;
  for (TurnSplit t : {TurnSplit::Left, TurnSplit::Forward, TurnSplit::Right}) {
    out += report_text(s.get(t), std::string("split ") + to_string(t));
  }
  return out;
}

std::string split_csv(const SplitReports& s) {
  std::ostringstream os;
  os << "split,scenarios";
  for (Metric m : kAllMetrics) os << ',' << eval::metric_name(m);
  os << ",aggregate\n";
  for (TurnSplit t : {TurnSplit::Left, TurnSplit::Forward, TurnSplit::Right}) {
    const EvalReport& r = s.get(t);
    os << to_string(t) << ',' << r.rows.size();
    for (Metric m : kAllMetrics) os << ',' << g17(r.mean(m) / 100.0);
    os << ',' << g17(r.aggregate_mean / 100.0) << '\n';
  }
  return os.str();
}

std::string svg_bars(const std::string& title, const std::vector<std::string>& labels, const std::vector<double>& values) {
  if (labels.size() != values.size()) throw ShapeMismatch("svg_bars: one label per value");
  const double width = 640.0;
  const double height = 360.0;
  const double left = 50.0;
  const double bottom = 60.0;
  const double top = 40.0;
  double hi = 0.0;
  for (double v : values) hi = std::max(hi, v);
  if (hi <= 0.0) hi = 1.0;
  const double n = static_cast<double>(std::max<std::size_t>(values.size(), 1));
  const double slot = (width - left - 10.0) / n;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">"
     << title << "</text>\n";
  const double plot_h = height - top - bottom;
  os << "<line x1=\"" << left << "\" y1=\"" << height - bottom << "\" x2=\"" << width - 10 << "\" y2=\""
     << height - bottom << "\" stroke=\"black\"/>\n";
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double h = plot_h * std::max(0.0, values[i]) / hi;
    const double x = left + slot * static_cast<double>(i) + slot * 0.1;
    os << "<rect x=\"" << x << "\" y=\"" << height - bottom - h << "\" width=\"" << slot * 0.8 << "\" height=\"" << h
       << "\" fill=\"steelblue\"/>\n";
    os << "<text x=\"" << x + slot * 0.4 << "\" y=\"" << height - bottom + 14
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" << labels[i] << "</text>\n";
    os << "<text x=\"" << x + slot * 0.4 << "\" y=\"" << height - bottom - h - 4
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" << f2(values[i]) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
  if (!os) throw IoError("failed writing " + path.string());
}

}  // namespace suprim::harness

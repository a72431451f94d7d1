// suprim command line: dataset generation, labeling, training and analyses.

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "suprim/config.hpp"
#include "suprim/dataset.hpp"
#include "suprim/errors.hpp"
#include "suprim/harness.hpp"
#include "suprim/labels.hpp"
#include "suprim/planner.hpp"
#include "suprim/vocab.hpp"

namespace fs = std::filesystem;
using namespace suprim;

namespace {

struct Globals {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out = "out";
};

struct DataOpts {
  std::string dataset;
  std::string labels;
};

struct Context {
  harness::Config cfg;
  fs::path out;
  std::uint64_t seed = 0;
};

Context make_context(const Globals& g) {
  Context c;
  if (!g.config_path.empty()) c.cfg = harness::load_config(g.config_path);
  c.out = g.out;
  c.seed = g.seed;
  fs::create_directories(c.out);
  return c;
}

fs::path or_default(const std::string& s, const fs::path& fallback) { return s.empty() ? fallback : fs::path(s); }

struct Loaded {
  scenario::Dataset ds;
  std::vector<eval::LabelSet> labels;
};

Loaded load_data(const Context& c, const DataOpts& d, const vocab::TrajectoryVocabulary& v) {
  Loaded l;
  const fs::path ds_path = or_default(d.dataset, c.out / "dataset.jsonl");
  l.ds = scenario::load_dataset(ds_path);
  l.labels = harness::ensure_labels(l.ds, or_default(d.labels, fs::path(ds_path).replace_extension(".labels.bin")), v,
                                    c.cfg.evaluator);
  return l;
}

harness::EvalSet split_of(const Loaded& l, const std::string& split) {
  if (split == "all") return harness::select_split(l.ds, l.labels, scenario::SplitTag::Test, true);
  return harness::select_split(l.ds, l.labels, split == "train" ? scenario::SplitTag::Train : scenario::SplitTag::Test);
}

std::vector<std::size_t> parse_ks(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoull(item));
  if (out.empty()) throw InvalidArgument("--ks needs at least one value");
  return out;
}

void say(const std::string& s) { std::cout << s << std::flush; }

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
  // keep large tape buffers in the heap instead of fresh mmaps every step
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  CLI::App app{"suprim: procedural driving scenarios, rule scoring and a coarse-to-fine trajectory selector"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "INI config file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "seed (dataset start seed, training init seed, rotation seed)");
  app.add_option("--out", g.out, "output directory")->capture_default_str();

  DataOpts data;
  const auto add_data = [&](CLI::App* sub) {
    sub->add_option("--dataset", data.dataset, "dataset file (default <out>/dataset.jsonl)");
    sub->add_option("--labels", data.labels, "label cache (default next to the dataset)");
  };

  std::size_t count = 0;
  std::size_t test_count = 0;
  bool with_labels = false;
  auto* gen = app.add_subcommand("gen", "generate a dataset");
  gen->add_option("--count", count, "number of scenarios (default from config)");
  gen->add_option("--test-count", test_count, "trailing records tagged test (default from config)");
  gen->add_flag("--labels", with_labels, "also write the label cache computed during generation");

  auto* labels = app.add_subcommand("labels", "label every vocabulary entry of every scenario");
  add_data(labels);

  std::size_t max_steps = 0;
  auto* train = app.add_subcommand("train", "train student and EMA teacher on the train split");
  add_data(train);
  train->add_option("--max-steps", max_steps, "stop after this many optimizer steps (0: all epochs)");

  std::string checkpoint;
  std::string split = "test";
  std::string version;
  bool student = false;
  bool plots = false;
  const auto add_model = [&](CLI::App* sub, bool required) {
    auto* opt = sub->add_option("--checkpoint", checkpoint, "checkpoint file");
    if (required) opt->required();
    add_data(sub);
    sub->add_option("--split", split, "train, test or all")->check(CLI::IsMember({"train", "test", "all"}));
    sub->add_option("--version", version, "metric version v1 or v2 (default from config)")
        ->check(CLI::IsMember({"v1", "v2"}));
    sub->add_flag("--student", student, "use the student instead of the config's inference model");
    sub->add_flag("--plots", plots, "also write SVG plots");
  };
  auto* evalc = app.add_subcommand("eval", "evaluate a checkpoint");
  add_model(evalc, true);

  std::string ks = "1,4,16,256";
  auto* oracle = app.add_subcommand("oracle", "best-in-top-K study");
  add_model(oracle, true);
  oracle->add_option("--ks", ks, "comma-separated K values")->capture_default_str();

  auto* split_eval = app.add_subcommand("split-eval", "left / forward / right split evaluation");
  add_model(split_eval, true);

  std::size_t bins = 36;
  auto* dist = app.add_subcommand("dist-hist", "heading histogram of high-scoring entries, original vs rotated");
  add_data(dist);
  dist->add_option("--bins", bins, "histogram bins")->capture_default_str();
  dist->add_flag("--plots", plots, "also write SVG plots");

  bool retrain = false;
  auto* fov = app.add_subcommand("fov-sweep", "1/3/5-camera field-of-view comparison");
  add_model(fov, false);
  fov->add_flag("--retrain", retrain, "train one model per field of view instead of masking one checkpoint");
  fov->add_option("--max-steps", max_steps, "training steps per model with --retrain");

  std::size_t index = 0;
  auto* infer = app.add_subcommand("infer", "select a trajectory for one scenario");
  add_model(infer, true);
  infer->add_option("--index", index, "record index in the dataset")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }
  if (fov->parsed() && !retrain && checkpoint.empty()) {
    std::cerr << "error: fov-sweep needs --checkpoint or --retrain\n\n" << fov->help();
    return 1;
  }

  try {
    const Context c = make_context(g);
    const vocab::TrajectoryVocabulary v = vocab::build_vocabulary();
    const harness::MetricVersion ver = version.empty() ? c.cfg.planner.version : harness::version_from(version);
    const bool use_teacher = c.cfg.use_teacher && !student;

    if (gen->parsed()) {
      const std::size_t n = count != 0 ? count : c.cfg.count;
      const std::size_t nt = gen->count("--test-count") != 0 ? test_count : std::min(c.cfg.test_count, n);
      std::vector<eval::LabelSet> lab;
      const bool reuse = with_labels && c.cfg.evaluator == eval::EvaluatorConfig{};
      scenario::Dataset ds = scenario::generate_dataset(c.seed, n, nt, c.cfg.generator, v, reuse ? &lab : nullptr);
      const fs::path path = c.out / "dataset.jsonl";
      scenario::save_dataset(path, ds);
      if (with_labels) {
        const fs::path cache = fs::path(path).replace_extension(".labels.bin");
        if (reuse) {
          eval::save_label_cache(cache, {ds.content_hash, v.spec(), eval::hash_evaluator_config(c.cfg.evaluator)}, lab);
        } else {
          harness::ensure_labels(ds, cache, v, c.cfg.evaluator);
        }
      }
      say("wrote " + path.string() + " (" + std::to_string(n) + " scenarios, " + std::to_string(nt) + " test)\n");
      return 0;
    }

    if (labels->parsed()) {
      const Loaded l = load_data(c, data, v);
      say("labeled " + std::to_string(l.labels.size()) + " scenarios\n");
      return 0;
    }

    if (train->parsed()) {
      const Loaded l = load_data(c, data, v);
      std::vector<planner::TrainSample> samples;
      for (std::size_t i = 0; i < l.ds.records.size(); ++i) {
        if (l.ds.records[i].split == scenario::SplitTag::Train) samples.push_back({&l.ds.records[i].scenario, &l.labels[i]});
      }
      planner::TrainOptions opt;
      opt.out_dir = c.out;
      opt.max_steps = max_steps;
      opt.evaluator = c.cfg.evaluator;
      opt.observe = c.cfg.observe;
      const planner::Checkpoint ck = planner::train(samples, v, c.cfg.planner, c.seed, opt);
      planner::save_checkpoint(c.out / "checkpoint.bin", ck);
      char id[24];
      std::snprintf(id, sizeof id, "%016llx", static_cast<unsigned long long>(ck.id()));
      say("trained " + std::to_string(ck.step) + " steps, checkpoint " + id + "\n");
      return 0;
    }

    if (dist->parsed()) {
      const Loaded l = load_data(c, data, v);
      std::vector<const scenario::Scenario*> sc;
      std::vector<const eval::LabelSet*> orig;
      for (std::size_t i = 0; i < l.ds.records.size(); ++i) {
        sc.push_back(&l.ds.records[i].scenario);
        orig.push_back(&l.labels[i]);
      }
      const auto rot = harness::rotated_labels(sc, v, c.cfg.planner.theta, c.seed, c.cfg.evaluator);
      std::vector<const eval::LabelSet*> aug = orig;
      for (const auto& r : rot) aug.push_back(&r);
      const auto h0 = harness::heading_histogram(v, orig, bins, c.cfg.evaluator);
      const auto h1 = harness::heading_histogram(v, aug, bins, c.cfg.evaluator);
      harness::write_text(c.out / "heading_hist_original.csv", harness::histogram_csv(h0));
      harness::write_text(c.out / "heading_hist_augmented.csv", harness::histogram_csv(h1));
      std::ostringstream os;
      os.precision(6);
      os << "KL to uniform: original " << harness::kl_to_uniform(h0) << "  augmented " << harness::kl_to_uniform(h1)
         << '\n';
      harness::write_text(c.out / "dist_hist.txt", os.str());
      if (plots) {
        std::vector<std::string> names;
        for (std::size_t b = 0; b < bins; ++b) names.push_back(std::to_string(static_cast<int>(std::lround(h0.edges[b] * 180.0 / std::numbers::pi))));
        harness::write_text(c.out / "heading_hist_original.svg", harness::svg_bars("original", names, h0.freq));
        harness::write_text(c.out / "heading_hist_augmented.svg", harness::svg_bars("augmented", names, h1.freq));
      }
      say(os.str());
      return 0;
    }

    const Loaded l = load_data(c, data, v);
    const harness::EvalSet set = split_of(l, split);
    if (set.size() == 0) throw EmptyDataset("split '" + split + "' has no scenarios");

    if (fov->parsed()) {
      std::vector<std::unique_ptr<planner::Planner>> owned;
      std::vector<std::pair<int, const planner::Planner*>> models;
      for (int cams : {1, 3, 5}) {
        if (retrain) {
          planner::PlannerConfig pc = c.cfg.planner;
          pc.fov_halfangle = scenario::camera_halfangle(cams);
          std::vector<planner::TrainSample> samples;
          for (std::size_t i = 0; i < l.ds.records.size(); ++i) {
            if (l.ds.records[i].split == scenario::SplitTag::Train) samples.push_back({&l.ds.records[i].scenario, &l.labels[i]});
          }
          planner::TrainOptions opt;
          opt.max_steps = max_steps;
          opt.evaluator = c.cfg.evaluator;
          opt.observe = c.cfg.observe;
          owned.push_back(std::make_unique<planner::Planner>(planner::train(samples, v, pc, c.seed, opt), v));
        } else if (owned.empty()) {
          owned.push_back(std::make_unique<planner::Planner>(planner::load_checkpoint(checkpoint), v));
        }
        models.emplace_back(cams, owned.back().get());
      }
      const auto rows = harness::fov_sweep(models, set, ver, use_teacher, c.cfg.evaluator, c.cfg.observe);
      harness::write_text(c.out / "fov_sweep.csv", harness::fov_csv(rows));
      if (plots) {
        std::vector<std::string> names;
        std::vector<double> vals;
        for (const auto& r : rows) {
          names.push_back(std::to_string(r.cameras) + " cam");
          vals.push_back(r.aggregate);
        }
        harness::write_text(c.out / "fov_sweep.svg", harness::svg_bars("field of view", names, vals));
      }
      say(harness::fov_csv(rows));
      return 0;
    }

    const planner::Planner model(planner::load_checkpoint(checkpoint), v);

    if (infer->parsed()) {
      if (index >= l.ds.records.size()) throw InvalidArgument("--index beyond the dataset");
      const auto r = model.infer(l.ds.records[index].scenario, use_teacher, c.cfg.observe);
      const eval::LabelSet& lab = l.labels[index];
      const std::size_t shown = std::min<std::size_t>(8, r.topk.size());
      nlohmann::json j = {{"seed", l.ds.records[index].scenario.seed},
                          {"selected", r.selected},
                          {"epdms", lab.epdms(r.selected)},
                          {"pdms", lab.pdms(r.selected)},
                          {"coarse_top", std::vector<std::size_t>(r.topk.begin(), r.topk.begin() + static_cast<std::ptrdiff_t>(shown))}};
      nlohmann::json wps = nlohmann::json::array();
      for (const auto& w : r.trajectory.waypoints) wps.push_back({w.position.x, w.position.y, w.heading});
      j["waypoints"] = wps;
      if (!r.refine_combined.empty()) {
        const auto ranking = r.ranking();
        const auto order = eval::topk_indices(ranking, shown);
        j["refined_top"] = order;
      }
      harness::write_text(c.out / "infer.json", j.dump(2) + "\n");
      say(j.dump(2) + "\n");
      return 0;
    }

    if (evalc->parsed()) {
      harness::EvalReport rep = harness::evaluate(model, set, ver, use_teacher, c.cfg.evaluator, c.cfg.observe);
      rep.config_hash = c.cfg.hash();
      const std::string text = harness::report_text(rep, "evaluation (" + split + ")");
      harness::write_text(c.out / "eval_report.txt", text);
      harness::write_text(c.out / "eval_report.csv", harness::report_csv(rep));
      if (plots) {
        std::vector<std::string> names;
        std::vector<double> vals;
        for (eval::Metric m : eval::kAllMetrics) {
          names.push_back(eval::metric_name(m));
          vals.push_back(rep.mean(m));
        }
        names.push_back(ver == harness::MetricVersion::V1 ? "PDMS" : "EPDMS");
        vals.push_back(rep.aggregate_mean);
        harness::write_text(c.out / "eval_report.svg", harness::svg_bars("evaluation", names, vals));
      }
      say(text);
      return 0;
    }

    if (oracle->parsed()) {
      const auto t = harness::oracle_study(model, set, parse_ks(ks), ver, use_teacher, c.cfg.evaluator, c.cfg.observe);
      harness::write_text(c.out / "oracle.txt", harness::oracle_text(t));
      harness::write_text(c.out / "oracle.csv", harness::oracle_csv(t));
      if (plots) {
        std::vector<std::string> names;
        for (std::size_t k : t.ks) names.push_back("K=" + std::to_string(k));
        harness::write_text(c.out / "oracle.svg", harness::svg_bars("best in top-K", names, t.values));
      }
      say(harness::oracle_text(t));
      return 0;
    }

    if (split_eval->parsed()) {
      harness::EvalReport rep = harness::evaluate(model, set, ver, use_teacher, c.cfg.evaluator, c.cfg.observe);
      rep.config_hash = c.cfg.hash();
      const auto s = harness::split_report(set, rep);
      harness::write_text(c.out / "split_report.txt", harness::split_text(s));
      harness::write_text(c.out / "split_report.csv", harness::split_csv(s));
      say(harness::split_text(s));
      return 0;
    }
  } catch (const suprim::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

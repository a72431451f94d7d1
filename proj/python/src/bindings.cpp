#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "suprim/combine.hpp"
#include "suprim/config.hpp"
#include "suprim/errors.hpp"
#include "suprim/harness.hpp"
#include "suprim/labels.hpp"
#include "suprim/planner.hpp"
#include "suprim/vocab.hpp"

namespace py = pybind11;
using namespace suprim;

namespace {

py::array_t<double> waypoints_array(const geom::Trajectory& t) {
  py::array_t<double> out({static_cast<py::ssize_t>(t.waypoints.size()), py::ssize_t{3}});
  auto a = out.mutable_unchecked<2>();
  for (std::size_t j = 0; j < t.waypoints.size(); ++j) {
    a(j, 0) = t.waypoints[j].position.x;
    a(j, 1) = t.waypoints[j].position.y;
    a(j, 2) = t.waypoints[j].heading;
  }
  return out;
}

py::dict subscores_dict(const eval::SubscoreVector& s) {
  py::dict d;
  for (eval::Metric m : eval::kAllMetrics) d[eval::metric_name(m)] = s.get(m);
  return d;
}

py::dict report_dict(const harness::EvalReport& r) {
  py::dict d;
  d["version"] = harness::to_string(r.version);
  d["aggregate"] = r.aggregate_mean;
  py::dict means;
  for (eval::Metric m : eval::kAllMetrics) means[eval::metric_name(m)] = r.mean(m);
  d["metrics"] = means;
  std::vector<std::size_t> selected;
  for (const auto& row : r.rows) selected.push_back(row.selected);
  d["selected"] = selected;
  return d;
}

// dataset plus its labels, kept together so EvalSet pointers stay valid
struct LabeledDataset {
  scenario::Dataset ds;
  std::vector<eval::LabelSet> labels;

  harness::EvalSet split(const std::string& which) const {
    if (which == "all") return harness::select_split(ds, labels, scenario::SplitTag::Train, true);
    if (which == "train") return harness::select_split(ds, labels, scenario::SplitTag::Train);
    if (which == "test") return harness::select_split(ds, labels, scenario::SplitTag::Test);
    throw InvalidArgument("split must be train, test or all");
  }
};

struct Model {
  planner::Planner planner;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Trajectory-vocabulary planner: simulator, scoring, training and analyses";

  static py::exception<Error> base(m, "SuprimError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const InvalidArgument& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    } catch (const IoError& e) {
      PyErr_SetString(PyExc_OSError, e.what());
    } catch (const Error& e) {
      base(e.what());
    }
  });

  m.def("vocabulary_size", [] { return vocab::default_vocabulary().size(); });
  m.def("vocabulary_entry", [](std::size_t i) {
    const auto& v = vocab::default_vocabulary();
    if (i >= v.size()) throw py::index_error("vocabulary index out of range");
    return waypoints_array(v[i]);
  }, py::arg("index"), "Waypoints (x, y, heading) of one vocabulary entry.");

  m.def("combine_score", [](double imi, const std::map<std::string, double>& scores, const std::string& version) {
    eval::SubscoreVector s;
    for (const auto& [name, value] : scores) s.set(eval::metric_from_name(name), value);
    return harness::combine_score(imi, s, harness::InferenceCoefficients::for_version(harness::version_from(version)));
  }, py::arg("imi"), py::arg("scores"), py::arg("version") = "v2");

  m.def("parse_config", [](const std::string& text) { return harness::dump_config(harness::parse_config(text)); },
        py::arg("text"), "Validates INI text and returns its canonical form.");
  m.def("default_config", [] { return harness::dump_config(harness::Config{}); });

  py::class_<LabeledDataset>(m, "Dataset")
      .def_static("generate", [](std::uint64_t seed_begin, std::size_t count, std::size_t test_count) {
        LabeledDataset d;
        d.ds = scenario::generate_dataset(seed_begin, count, test_count, {}, vocab::default_vocabulary(), &d.labels);
        return d;
      }, py::arg("seed_begin"), py::arg("count"), py::arg("test_count") = 0)
      .def_static("load", [](const std::filesystem::path& path, const std::filesystem::path& labels) {
        LabeledDataset d;
        d.ds = scenario::load_dataset(path);
        d.labels = harness::ensure_labels(d.ds, labels, vocab::default_vocabulary());
        return d;
      }, py::arg("path"), py::arg("labels"))
      .def("save", [](LabeledDataset& d, const std::filesystem::path& path) { scenario::save_dataset(path, d.ds); })
      .def("__len__", [](const LabeledDataset& d) { return d.ds.records.size(); })
      .def("seed", [](const LabeledDataset& d, std::size_t i) { return d.ds.records.at(i).scenario.seed; })
      .def("is_test", [](const LabeledDataset& d, std::size_t i) {
        return d.ds.records.at(i).split == scenario::SplitTag::Test;
      })
      .def("expert", [](const LabeledDataset& d, std::size_t i) {
        return waypoints_array(d.ds.records.at(i).scenario.expert);
      })
      .def("subscores", [](const LabeledDataset& d, std::size_t i, std::size_t entry) {
        return subscores_dict(d.labels.at(i).subscores(entry));
      }, py::arg("index"), py::arg("entry"))
      .def("aggregates", [](const LabeledDataset& d, std::size_t i, const std::string& version) {
        const auto w = harness::weights_for(harness::version_from(version));
        const auto a = d.labels.at(i).aggregates(w);
        return py::array_t<double>(static_cast<py::ssize_t>(a.size()), a.data());
      }, py::arg("index"), py::arg("version") = "v2")
      .def("oracle", [](const LabeledDataset& d, const std::string& split, const std::string& version) {
        return harness::oracle_ceiling(d.split(split), harness::version_from(version));
      }, py::arg("split") = "all", py::arg("version") = "v2");

  py::class_<Model>(m, "Model")
      .def_static("load", [](const std::filesystem::path& path) {
        return Model{planner::Planner(planner::load_checkpoint(path), vocab::default_vocabulary())};
      }, py::arg("path"))
      .def_static("train", [](const LabeledDataset& d, const std::string& config, std::uint64_t seed,
                              std::size_t max_steps) {
        const harness::Config cfg = harness::parse_config(config);
        std::vector<planner::TrainSample> samples;
        for (std::size_t i = 0; i < d.ds.records.size(); ++i) {
          if (d.ds.records[i].split == scenario::SplitTag::Train) samples.push_back({&d.ds.records[i].scenario, &d.labels[i]});
        }
        planner::TrainOptions opt;
        opt.max_steps = max_steps;
        opt.observe = cfg.observe;
        opt.evaluator = cfg.evaluator;
        py::gil_scoped_release release;
        return Model{planner::Planner(planner::train(samples, vocab::default_vocabulary(), cfg.planner, seed, opt),
                                      vocab::default_vocabulary())};
      }, py::arg("dataset"), py::arg("config") = "", py::arg("seed") = 0, py::arg("max_steps") = 0)
      .def("save", [](const Model& mdl, const std::filesystem::path& path) {
        planner::save_checkpoint(path, mdl.planner.checkpoint());
      })
      .def_property_readonly("id", [](const Model& mdl) { return mdl.planner.checkpoint().id(); })
      .def("infer", [](const Model& mdl, const LabeledDataset& d, std::size_t i, bool use_teacher) {
        const auto r = mdl.planner.infer(d.ds.records.at(i).scenario, use_teacher);
        py::dict out;
        out["selected"] = r.selected;
        out["topk"] = r.topk;
        out["trajectory"] = waypoints_array(r.trajectory);
        return out;
      }, py::arg("dataset"), py::arg("index"), py::arg("use_teacher") = true)
      .def("evaluate", [](const Model& mdl, const LabeledDataset& d, const std::string& split,
                          const std::string& version, bool use_teacher) {
        const auto set = d.split(split);
        py::gil_scoped_release release;
        auto r = harness::evaluate(mdl.planner, set, harness::version_from(version), use_teacher);
        py::gil_scoped_acquire acquire;
        return report_dict(r);
      }, py::arg("dataset"), py::arg("split") = "test", py::arg("version") = "v2", py::arg("use_teacher") = true);
}

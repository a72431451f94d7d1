#include "suprim/dataset.hpp"

#include <fstream>
#include <json.hpp>

#include "suprim/binio.hpp"
#include "suprim/labels.hpp"
#include "suprim/errors.hpp"
#include "suprim/parallel.hpp"
#include "suprim/vocab.hpp"

namespace suprim::scenario {

using nlohmann::json;

const char* to_string(SplitTag tag) { return tag == SplitTag::Train ? "train" : "test"; }

namespace {

json pt(Point2 p) { return json::array({p.x, p.y}); }
Point2 pt(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

json pose(const Pose2& p) { return json::array({p.position.x, p.position.y, p.heading}); }
Pose2 pose(const json& j) { return {{j.at(0).get<double>(), j.at(1).get<double>()}, j.at(2).get<double>()}; }

json points(const std::vector<Point2>& v) {
  json out = json::array();
  for (Point2 p : v) out.push_back(pt(p));
  return out;
}

std::vector<Point2> points(const json& j) {
  std::vector<Point2> out;
  for (const auto& e : j) out.push_back(pt(e));
  return out;
}

json traj(const Trajectory& t) {
  json wps = json::array();
  for (const auto& w : t.waypoints) wps.push_back(pose(w));
  return {{"dt", t.dt}, {"start", pose(t.start)}, {"waypoints", wps}};
}

Trajectory traj(const json& j) {
  Trajectory t;
  t.dt = j.at("dt").get<double>();
  t.start = pose(j.at("start"));
  for (const auto& w : j.at("waypoints")) t.waypoints.push_back(pose(w));
  return t;
}

RoadKind kind_from(const std::string& s) {
  if (s == "straight") return RoadKind::Straight;
  if (s == "curved") return RoadKind::Curved;
  if (s == "t_junction") return RoadKind::TJunction;
  throw IoError("unknown road kind '" + s + "'");
}

json scenario_json(const Scenario& s) {
  json agents = json::array();
  for (const Agent& a : s.agents) {
    agents.push_back({{"pose", pose(a.initial_pose)}, {"speed", a.speed}, {"length", a.length}, {"width", a.width}});
  }
  json drivable = json::array();
  for (const auto& c : s.drivable) drivable.push_back(points(c.vertices()));
  json lanes = json::array();
  for (const auto& l : s.lanes) lanes.push_back(points(l.points));
  json lights = json::array();
  for (const auto& l : s.lights) {
    lights.push_back({{"a", pt(l.a)}, {"b", pt(l.b)}, {"state", l.state == LightState::Red ? "red" : "green"}});
  }
  json history = json::array();
  for (const auto& h : s.ego_history) history.push_back({{"position", pt(h.position)}, {"speed", h.speed}, {"accel", h.accel}});
  return {{"seed", s.seed},
          {"kind", to_string(s.kind)},
          {"ego_pose", pose(s.ego_pose)},
          {"ego_speed", s.ego_speed},
          {"ego_length", s.ego_length},
          {"ego_width", s.ego_width},
          {"ego_history", history},
          {"agents", agents},
          {"drivable", drivable},
          {"lanes", lanes},
          {"route", points(s.route.points)},
          {"lights", lights},
          {"expert", traj(s.expert)},
          {"expert_index", s.expert_index}};
}

Scenario scenario_from(const json& j) {
  Scenario s;
  s.seed = j.at("seed").get<std::uint64_t>();
  s.kind = kind_from(j.at("kind").get<std::string>());
  s.ego_pose = pose(j.at("ego_pose"));
  s.ego_speed = j.at("ego_speed").get<double>();
  s.ego_length = j.at("ego_length").get<double>();
  s.ego_width = j.at("ego_width").get<double>();
  for (const auto& h : j.at("ego_history")) {
    s.ego_history.push_back({pt(h.at("position")), h.at("speed").get<double>(), h.at("accel").get<double>()});
  }
  for (const auto& a : j.at("agents")) {
    s.agents.push_back({pose(a.at("pose")), a.at("speed").get<double>(), a.at("length").get<double>(),
                        a.at("width").get<double>()});
  }
  for (const auto& c : j.at("drivable")) s.drivable.emplace_back(points(c));
  for (const auto& l : j.at("lanes")) s.lanes.push_back({points(l)});
  s.route.points = points(j.at("route"));
  for (const auto& l : j.at("lights")) {
    s.lights.push_back({pt(l.at("a")), pt(l.at("b")),
                        l.at("state").get<std::string>() == "red" ? LightState::Red : LightState::Green});
  }
  s.expert = traj(j.at("expert"));
  s.expert_index = j.at("expert_index").get<std::int64_t>();
  return s;
}

json gen_config_json(const GenConfig& c) {
  return {{"turn_fraction", c.turn_fraction},       {"curved_fraction", c.curved_fraction},
          {"lane_width", c.lane_width},             {"ego_length", c.ego_length},
          {"ego_width", c.ego_width},               {"max_agents", c.max_agents},
          {"light_probability", c.light_probability}, {"red_probability", c.red_probability},
          {"max_ego_speed", c.max_ego_speed},       {"max_turn_speed", c.max_turn_speed},
          {"max_road_curvature", c.max_road_curvature}, {"road_behind", c.road_behind},
          {"road_ahead", c.road_ahead},             {"junction_offset", c.junction_offset},
          {"max_attempts", c.max_attempts}};
}

GenConfig gen_config_from(const json& j) {
  GenConfig c;
  c.turn_fraction = j.at("turn_fraction").get<double>();
  c.curved_fraction = j.at("curved_fraction").get<double>();
  c.lane_width = j.at("lane_width").get<double>();
  c.ego_length = j.at("ego_length").get<double>();
  c.ego_width = j.at("ego_width").get<double>();
  c.max_agents = j.at("max_agents").get<int>();
  c.light_probability = j.at("light_probability").get<double>();
  c.red_probability = j.at("red_probability").get<double>();
  c.max_ego_speed = j.at("max_ego_speed").get<double>();
  c.max_turn_speed = j.at("max_turn_speed").get<double>();
  c.max_road_curvature = j.at("max_road_curvature").get<double>();
  c.road_behind = j.at("road_behind").get<double>();
  c.road_ahead = j.at("road_ahead").get<double>();
  c.junction_offset = j.at("junction_offset").get<double>();
  c.max_attempts = j.at("max_attempts").get<int>();
  return c;
}

}  // namespace

void save_dataset(const std::filesystem::path& path, Dataset& ds) {
  const json header = {{"format_version", kDatasetFormatVersion},
                       {"gen_config", gen_config_json(ds.gen_config)},
                       {"seed_range", json::array({ds.seed_begin, ds.seed_end})},
                       {"count", ds.records.size()}};
  bin::Fnv1a h;
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write dataset " + path.string());
  const auto emit = [&](const std::string& line) {
    h.str(line);
    os << line << '\n';
  };
  emit(header.dump());
  for (const DatasetRecord& r : ds.records) {
    json rec = {{"split", to_string(r.split)}, {"scenario", scenario_json(r.scenario)}};
    emit(rec.dump());
  }
  os.flush();
  if (!os) throw IoError("failed writing dataset " + path.string());
  ds.content_hash = h.value();
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read dataset " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw IoError("dataset has no header: " + path.string());
  bin::Fnv1a h;
  h.str(line);
  Dataset ds;
  try {
    const json header = json::parse(line);
    const int version = header.at("format_version").get<int>();
    if (version != kDatasetFormatVersion) {
      throw FormatVersionMismatch("dataset format " + std::to_string(version) + ", expected " +
                                  std::to_string(kDatasetFormatVersion));
    }
    ds.gen_config = gen_config_from(header.at("gen_config"));
    ds.seed_begin = header.at("seed_range").at(0).get<std::uint64_t>();
    ds.seed_end = header.at("seed_range").at(1).get<std::uint64_t>();
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
      ++line_no;
      if (line.empty()) continue;
      h.str(line);
      const json rec = json::parse(line);
      DatasetRecord r;
      r.split = rec.at("split").get<std::string>() == "test" ? SplitTag::Test : SplitTag::Train;
      r.scenario = scenario_from(rec.at("scenario"));
      ds.records.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw IoError("malformed dataset " + path.string() + ": " + e.what());
  } catch (const InvalidArgument& e) {
    throw IoError("malformed dataset geometry in " + path.string() + ": " + e.what());
  }
  ds.content_hash = h.value();
  return ds;
}

Dataset generate_dataset(std::uint64_t seed_begin, std::size_t count, std::size_t test_count, const GenConfig& cfg,
                         const vocab::TrajectoryVocabulary& vocab, std::vector<eval::LabelSet>* labels) {
  if (test_count > count) throw InvalidArgument("test_count exceeds count");
  Dataset ds;
  ds.gen_config = cfg;
  ds.seed_begin = seed_begin;
  ds.seed_end = seed_begin + count;
  ds.records.resize(count);
  if (labels != nullptr) labels->assign(count, {});
  for (std::size_t i = 0; i < count; ++i) {
    ds.records[i].scenario =
        generate_scenario(seed_begin + i, cfg, vocab, labels != nullptr ? &(*labels)[i] : nullptr);
    ds.records[i].split = i + test_count >= count ? SplitTag::Test : SplitTag::Train;
  }
  return ds;
}

}  // namespace suprim::scenario

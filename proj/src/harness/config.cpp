#include "suprim/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "suprim/binio.hpp"
#include "suprim/errors.hpp"

namespace suprim::harness {

namespace {

struct Binding {
  const char* section;
  const char* key;
  std::function<std::string(const Config&)> get;
  std::function<void(Config&, const std::string&)> set;
};

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw InvalidArgument("not a number: '" + s + "'");
  return v;
}

std::uint64_t parse_uint(const std::string& s) {
  std::uint64_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw InvalidArgument("not an unsigned integer: '" + s + "'");
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw InvalidArgument("not a boolean: '" + s + "'");
}

#define BIND_D(sec, key, expr)                                                        \
  Binding {                                                                           \
    sec, key, [](const Config& c) { return fmt(c.expr); },                            \
        [](Config& c, const std::string& s) { c.expr = parse_double(s); }             \
  }
#define BIND_U(sec, key, expr)                                                                            \
  Binding {                                                                                               \
    sec, key, [](const Config& c) { return std::to_string(c.expr); },                                     \
        [](Config& c, const std::string& s) { c.expr = static_cast<decltype(c.expr)>(parse_uint(s)); }   \
  }
#define BIND_B(sec, key, expr)                                                        \
  Binding {                                                                           \
    sec, key, [](const Config& c) { return std::string(c.expr ? "true" : "false"); }, \
        [](Config& c, const std::string& s) { c.expr = parse_bool(s); }               \
  }

const std::vector<Binding>& bindings() {
  static const std::vector<Binding> b = {
      BIND_D("generator", "turn_fraction", generator.turn_fraction),
      BIND_D("generator", "curved_fraction", generator.curved_fraction),
      BIND_D("generator", "lane_width", generator.lane_width),
      BIND_D("generator", "ego_length", generator.ego_length),
      BIND_D("generator", "ego_width", generator.ego_width),
      BIND_U("generator", "max_agents", generator.max_agents),
      BIND_D("generator", "light_probability", generator.light_probability),
      BIND_D("generator", "red_probability", generator.red_probability),
      BIND_D("generator", "max_ego_speed", generator.max_ego_speed),
      BIND_D("generator", "max_turn_speed", generator.max_turn_speed),
      BIND_D("generator", "max_road_curvature", generator.max_road_curvature),
      BIND_D("generator", "road_behind", generator.road_behind),
      BIND_D("generator", "road_ahead", generator.road_ahead),
      BIND_D("generator", "junction_offset", generator.junction_offset),
      BIND_U("generator", "max_attempts", generator.max_attempts),
      BIND_U("generator", "count", count),
      BIND_U("generator", "test_count", test_count),
      BIND_D("evaluator", "ttc_horizon", evaluator.ttc_horizon),
      BIND_D("evaluator", "ttc_substep", evaluator.ttc_substep),
      BIND_D("evaluator", "max_long_accel", evaluator.max_long_accel),
      BIND_D("evaluator", "max_lat_accel", evaluator.max_lat_accel),
      BIND_D("evaluator", "max_jerk", evaluator.max_jerk),
      BIND_D("evaluator", "max_yaw_rate", evaluator.max_yaw_rate),
      BIND_D("evaluator", "lane_keep_threshold", evaluator.lane_keep_threshold),
      BIND_D("evaluator", "direction_threshold_deg", evaluator.direction_threshold_deg),
      BIND_D("evaluator", "ec_window", evaluator.ec_window),
      BIND_D("evaluator", "ec_max_change", evaluator.ec_max_change),
      BIND_D("evaluator", "min_expert_progress", evaluator.min_expert_progress),
      BIND_D("evaluator", "ec_weight", evaluator.ec_weight),
      BIND_U("observe", "max_lane_points", observe.max_lane_points),
      BIND_U("observe", "max_boundary_points", observe.max_boundary_points),
      BIND_D("observe", "lane_spacing", observe.lane_spacing),
      BIND_D("observe", "boundary_spacing", observe.boundary_spacing),
      BIND_D("observe", "max_range", observe.max_range),
      BIND_U("planner", "hidden_dim", planner.hidden_dim),
      BIND_U("planner", "ffn_dim", planner.ffn_dim),
      BIND_U("planner", "trans_dec_layers", planner.trans_dec_layers),
      BIND_U("planner", "refine_dec_layers", planner.refine_dec_layers),
      BIND_U("planner", "attention_heads", planner.attention_heads),
      BIND_U("planner", "top_k", planner.top_k),
      BIND_B("planner", "coarse_self_attention", planner.coarse_self_attention),
      BIND_B("planner", "refine_self_attention", planner.refine_self_attention),
      BIND_B("planner", "use_refine", planner.use_refine),
      BIND_B("planner", "use_augmentation", planner.use_augmentation),
      BIND_B("planner", "use_distillation", planner.use_distillation),
      BIND_D("planner", "theta", planner.theta),
      Binding{"planner", "delta",
              [](const Config& c) {
                std::string out;
                for (std::size_t i = 0; i < c.planner.delta.size(); ++i) out += (i ? "," : "") + fmt(c.planner.delta[i]);
                return out;
              },
              [](Config& c, const std::string& s) {
                std::vector<double> vals;
                std::stringstream ss(s);
                std::string item;
                while (std::getline(ss, item, ',')) vals.push_back(parse_double(item));
                if (vals.size() == 1) {
                  c.planner.delta.fill(vals[0]);
                } else if (vals.size() == c.planner.delta.size()) {
                  std::copy(vals.begin(), vals.end(), c.planner.delta.begin());
                } else {
                  throw InvalidArgument("delta takes 1 or " + std::to_string(c.planner.delta.size()) + " values");
                }
              }},
      BIND_D("planner", "imi_temperature", planner.imi_temperature),
      Binding{"planner", "ema_mode", [](const Config& c) { return std::string(planner::to_string(c.planner.ema.mode)); },
              [](Config& c, const std::string& s) { c.planner.ema.mode = planner::ema_mode_from(s); }},
      BIND_D("planner", "lr", planner.lr),
      BIND_U("planner", "batch_size", planner.batch_size),
      BIND_U("planner", "epochs", planner.epochs),
      BIND_D("planner", "fov_halfangle", planner.fov_halfangle),
      Binding{"inference", "version", [](const Config& c) { return std::string(to_string(c.planner.version)); },
              [](Config& c, const std::string& s) { c.planner.version = version_from(s); }},
      BIND_B("inference", "use_teacher", use_teacher),
      BIND_U("inference", "random_samples", random_samples),
  };
  return b;
}

#undef BIND_D
#undef BIND_U
#undef BIND_B

}  // namespace

Config parse_config(const std::string& text) {
  boost::property_tree::ptree tree;
  std::istringstream is(text);
  try {
    boost::property_tree::ini_parser::read_ini(is, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw InvalidArgument(std::string("malformed config: ") + e.what());
  }
  Config c;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) throw InvalidArgument("config key outside a section: " + section);
    for (const auto& [key, value] : body) {
      const auto& all = bindings();
      const auto it = std::find_if(all.begin(), all.end(), [&](const Binding& b) { return section == b.section && key == b.key; });
      if (it == all.end()) throw InvalidArgument("unknown config key [" + section + "] " + key);
      try {
        it->set(c, value.data());
      } catch (const InvalidArgument& e) {
        throw InvalidArgument("[" + section + "] " + key + ": " + e.what());
      }
    }
  }
  c.generator.validate();
  c.planner.validate();
  eval::MetricWeights::epdms(c.evaluator.ec_weight).validate();
  return c;
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

std::string dump_config(const Config& c) {
  std::string out;
  std::string section;
  for (const Binding& b : bindings()) {
    if (section != b.section) {
      if (!section.empty()) out += '\n';
      section = b.section;
      out += "[" + section + "]\n";
    }
    out += std::string(b.key) + " = " + b.get(c) + "\n";
  }
  return out;
}

std::uint64_t Config::hash() const {
  bin::Fnv1a h;
  h.str(dump_config(*this));
  return h.value();
}

}  // namespace suprim::harness

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "suprim/evaluator.hpp"
#include "suprim/observe.hpp"
#include "suprim/planner.hpp"
#include "suprim/scenario.hpp"

namespace suprim::harness {

/// Everything a run depends on. Serialized as flat INI with the sections
/// generator, evaluator, observe, planner, inference.
struct Config {
  scenario::GenConfig generator;
  std::size_t count = 100;       // scenarios per generated dataset
  std::size_t test_count = 20;   // trailing records tagged test
  eval::EvaluatorConfig evaluator;
  scenario::ObserveConfig observe;
  planner::PlannerConfig planner;
  bool use_teacher = true;       // inference model
  std::size_t random_samples = 64;  // Monte-Carlo draws per scenario for the random baseline

  /// FNV-1a of the canonical INI text.
  std::uint64_t hash() const;
  friend bool operator==(const Config&, const Config&) = default;
};

/// Unknown sections or keys and unparsable values throw InvalidArgument.
Config parse_config(const std::string& text);
Config load_config(const std::filesystem::path& path);
/// Canonical INI text; parse_config(dump_config(c)) == c.
std::string dump_config(const Config& c);

}  // namespace suprim::harness

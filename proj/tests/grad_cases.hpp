#pragma once

// Named finite-difference cases shared by the unit tests and the acceptance run.

#include <string>
#include <vector>

#include "gradcheck.hpp"

namespace suprim::testing {

struct GradCase {
  std::string name;
  dc::ParamStore params;
  LossFn loss;
};

/// One case per differentiable Tape operator.
std::vector<GradCase> diffcore_cases();

/// Full per-sample planner loss (original plus soft term) on a 32-entry
/// vocabulary: coarse-to-fine and single-stage.
std::vector<GradCase> planner_cases();

}  // namespace suprim::testing

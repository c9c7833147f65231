#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fsl/gradcheck.hpp"

namespace fsl {

struct OpCheck {
  std::string op;
  GradcheckReport report;
  double seconds = 0.0;
};

/// Finite-difference checks of every differentiable op on small random
/// inputs. Non-scalar ops are reduced with a random weighting so no gradient
/// component is symmetric by construction.
std::vector<OpCheck> run_gradcheck_suite(std::uint64_t seed = 1, GradcheckOptions options = {});

}  // namespace fsl

#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fsl/graph.hpp"
#include "fsl/tensor.hpp"

namespace fsl {

struct GradcheckOptions {
  double rtol = 1e-4;
  /// Perturbation is step * max(1, |value|).
  double step = 1e-4;
  /// 0 checks every element; otherwise an evenly spaced subset of this size.
  Index max_elements_per_param = 0;
  /// For piecewise-smooth functions (max pooling): when the central
  /// difference disagrees, also accept a second-order one-sided difference.
  bool one_sided_fallback = false;
};

struct GradcheckEntry {
  std::string name;
  Index checked = 0;
  Index one_sided = 0;  // elements resolved by the one-sided fallback
  double max_rel_error = 0.0;
  bool passed = false;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  bool passed() const;
  double max_rel_error() const;
};

/// Compares analytic gradients of the scalar `fn` against central
/// differences. Relative error is |a - n| / max(1, |a|, |n|).
///
/// `fn` must build its result from `params` on the graph it is handed and be
/// deterministic; it is called once recording and twice per checked element
/// in inference mode.
GradcheckReport finite_diff_gradcheck(const std::function<Tensor(Graph&)>& fn,
                                      std::span<const NamedTensor> params,
                                      GradcheckOptions options = {});

}  // namespace fsl

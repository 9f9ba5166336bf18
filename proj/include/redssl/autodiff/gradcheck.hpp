#pragma once

#include <cstddef>
#include <functional>

#include "redssl/autodiff/tape.hpp"

namespace redssl::ad {

// Builds a scalar graph from the leaf x on the supplied tape.
using GraphBuilder = std::function<Var(Tape&, const Var&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  // Coordinates where +eps / -eps perturbations changed a relu pattern or a
  // percentile selection; central differences are meaningless there.
  std::size_t skipped = 0;
  bool passed = true;
};

// Central differences against backward(), coordinate by coordinate. Relative
// error uses max(|analytic|, |numeric|, 1e-8) as denominator. A result above
// tol is reported through `passed`, never thrown.
GradCheckResult finite_difference_check(const GraphBuilder& f, const Matrix& x0, double eps = 1e-6,
                                        double tol = 1e-4);

}  // namespace redssl::ad

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "redssl/autodiff/gradcheck.hpp"

namespace redssl::runner {

struct GradSuiteEntry {
  std::string name;
  ad::GradCheckResult worst;  // largest error over the seeds
  std::size_t checked = 0;    // summed over seeds
  std::size_t skipped = 0;
};

struct GradSuiteResult {
  std::vector<GradSuiteEntry> entries;
  double max_rel_error = 0.0;
  bool passed = true;
};

// Finite-difference checks of every primitive and of the full losses on
// random batches of `batch_size` samples, one run per seed.
GradSuiteResult run_grad_suite(std::size_t seeds = 20, std::size_t batch_size = 8, double tol = 1e-4);

}  // namespace redssl::runner

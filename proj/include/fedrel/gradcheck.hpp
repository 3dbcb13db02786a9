#pragma once

#include <string>
#include <vector>

namespace fedrel {

/// Result of the central finite-difference suite: reverse-mode gradients of
/// every differentiable operation and of the full model forward pass checked
/// against perturb-and-replay numeric derivatives.
struct GradCheckReport {
  struct Entry {
    std::string name;
    double max_rel_error;
  };
  std::vector<Entry> entries;
  double worst = 0.0;

  bool passed(double tolerance = 1e-4) const { return worst < tolerance; }
};

GradCheckReport run_gradient_suite(double fd_step = 1e-5);

}  // namespace fedrel

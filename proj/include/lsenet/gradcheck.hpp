#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace lsenet {

struct GradCheckResult {
  std::string name;
  int instances = 0;
  double worst_rel = 0;
  double tolerance = 1e-3;

  bool pass() const { return worst_rel < tolerance; }
};

/// Central-difference checks for every differentiable op, `instances` random
/// instances each. Runs in double precision to keep finite-difference noise
/// well below the tolerance.
std::vector<GradCheckResult> gradient_check_suite(int instances = 20,
                                                  uint64_t seed = 7);

/// Full-model check on a small configuration: analytic gradients from one
/// backward pass compared against central differences at `probes` randomly
/// chosen coordinates spread over the input image and all parameters.
GradCheckResult end_to_end_gradient_check(int probes = 60, uint64_t seed = 7);

}  // namespace lsenet

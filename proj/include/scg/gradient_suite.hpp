#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace scg {

struct GradientCheckResult {
  std::string name;  // "<family>:<tensor>"
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  bool passed = false;
};

// Central finite differences for the feature losses, the noise-injected
// cycle loss, the unpaired cycle losses, both hinge losses (inputs kept off
// the kinks) and every parameter group of a toy generator and a toy
// discriminator, in double precision.
std::vector<GradientCheckResult> run_gradient_suite(double tolerance = 1e-4, std::uint64_t seed = 0);

}  // namespace scg

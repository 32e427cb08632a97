#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pcmorph {

// Finite-difference verification of every differentiable component: each
// tape primitive, the set encoder, the step MLP (with its input
// concatenation), and the full objective with frozen nearest-neighbor
// assignments. Backs the gradcheck CLI command.
struct GradCheckComponent {
  std::string name;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckComponent> components;

  double worst() const;
  bool all_within(double tol) const;
};

GradCheckReport run_gradcheck_suite(std::uint64_t seed,
                                    std::size_t probes = 100);

}  // namespace pcmorph

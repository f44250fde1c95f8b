#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

namespace rlad {

// Randomized end-to-end gradient verification: each fixture builds a small
// random policy (tabular or mlp) and a synthetic rollout batch, assembles the
// configured objective, and compares every parameter gradient against central
// finite differences. Fixtures cycle through all methods, group sizes
// {2, 4, 8}, response lengths 1..16, and the alpha grid {0, .25, .5, .75, 1};
// frozen log-probs are re-drawn if any token lands within 5e-4 of a clip or
// clamp kink, where central differences straddle the subgradient switch.
struct GradcheckOptions {
  int fixtures = 100;
  std::uint64_t seed = 1;
  double h = 1e-5;
  double tolerance = 1e-4;
  bool corrupt = false;  // deliberately breaks one gradient; the run must fail
  std::ostream* log = nullptr;
};

struct GradcheckResult {
  int fixtures_run = 0;
  double max_rel_error = 0.0;
  std::string worst_fixture;
  bool passed = false;
};

GradcheckResult run_gradcheck(const GradcheckOptions& opt);

}  // namespace rlad

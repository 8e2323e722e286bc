#pragma once

#include <utility>
#include <vector>

#include "meco/dense_array.hpp"
#include "meco/models.hpp"
#include "meco/rng.hpp"

namespace meco {

// Unadjusted Langevin dynamics (no Metropolis correction, matching common EBM
// practice; the discretization bias is documented in the tests against the
// exact stationary variance of the Euler-Maruyama chain).
struct LangevinConfig {
  long steps = 0;
  double step_size = 0.01;  // epsilon
  double noise_scale = 1.0; // multiplies sqrt(epsilon); 0 gives the deterministic test hook
  std::vector<std::pair<double, double>> clamp_box;  // per-coordinate bounds; empty = none
};

// Evolve a batch of chains: x <- x + (eps/2) grad_x log p0 + noise_scale*sqrt(eps)*N(0,I).
// Coordinates are clipped to clamp_box after every step when set. A non-finite
// state mid-chain raises divergence_error naming the step.
DenseArray langevin_chain(const UnnormalizedModel& model, const ParamVector& theta,
                          const DenseArray& x0, const LangevinConfig& config, RngStream& rng);

}  // namespace meco

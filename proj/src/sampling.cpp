#include "meco/sampling.hpp"

#include <cmath>

#include "meco/errors.hpp"

namespace meco {

DenseArray langevin_chain(const UnnormalizedModel& model, const ParamVector& theta,
                          const DenseArray& x0, const LangevinConfig& config, RngStream& rng) {
  require(config.step_size > 0.0, "langevin_chain: step_size must be positive");
  for (double v : x0.flat())
    if (!std::isfinite(v)) throw contract_error("langevin_chain: x0 must be finite");

  const std::size_t n = x0.rows(), d = x0.cols();
  DenseArray x = x0;
  if (config.steps == 0) return x;

  auto eval = model.make_batch_eval(n);
  DenseArray score({n, d});
  const double half_eps = 0.5 * config.step_size;
  const double noise_mag = config.noise_scale * std::sqrt(config.step_size);

  for (long step = 0; step < config.steps; ++step) {
    eval->forward(x, theta);
    eval->grad_x(score);
    for (std::size_t i = 0; i < n; ++i) {
      auto row = x.row(i);
      auto s = score.row(i);
      for (std::size_t j = 0; j < d; ++j) {
        row[j] += half_eps * s[j] + noise_mag * rng.normal();
        if (!config.clamp_box.empty()) {
          const auto& [lo, hi] = config.clamp_box[j];
          row[j] = std::clamp(row[j], lo, hi);
        }
        if (!std::isfinite(row[j]))
          throw divergence_error("langevin_chain: non-finite state", step);
      }
    }
  }
  return x;
}

}  // namespace meco

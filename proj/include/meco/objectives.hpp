#pragma once

#include <span>

#include "meco/dense_array.hpp"
#include "meco/models.hpp"
#include "meco/noise.hpp"
#include "meco/param_vector.hpp"
#include "meco/rng.hpp"
#include "meco/sampling.hpp"

namespace meco {

// Extended NCE parameter tau = (theta, alpha); alpha estimates the
// log-partition.
struct NceParams {
  ParamVector theta;
  double alpha = 0.0;
};

// Gradient in tau-space.
struct TauGrad {
  ParamVector theta;
  double alpha = 0.0;
  double norm() const;
};

struct BaselineConfig {
  int noise_ratio = 1;           // nu: noise samples per data sample
  long langevin_steps = 20;      // searched over {20, 50, 100}
  double langevin_step_size = 0.01;
  std::size_t batch_size = 64;
};

struct ClassifierLossGrad {
  double loss = 0.0;
  TauGrad grad;
  long clip_events = 0;  // eNCE exponent guard activations
};

// Logistic loss between data and noise, h = sigmoid(log p0 - log q - alpha).
// Stable log-sigmoid forms throughout; non-finite log q raises input_error
// naming the offending point.
ClassifierLossGrad nce_loss_and_grad(const UnnormalizedModel& model, const NceParams& tau,
                                     const NoiseDistribution& q, const DenseArray& data,
                                     const DenseArray& noise);

// Exponential-loss variant: with u = log p0 - log q - alpha,
// loss = mean_data exp(-u/2) + mean_noise exp(u/2), exponents clipped at |u/2| <= 60.
ClassifierLossGrad ence_loss_and_grad(const UnnormalizedModel& model, const NceParams& tau,
                                      const NoiseDistribution& q, const DenseArray& data,
                                      const DenseArray& noise);

struct ScoreMatchingResult {
  double loss = 0.0;
  ParamVector grad;
};

// Hyvarinen objective: mean over the batch of
// 0.5*||grad_x log p0||^2 + tr(hess_x log p0). Input dimension capped at 4 by
// the per-coordinate second-derivative sweeps.
ScoreMatchingResult score_matching_loss_and_grad(const UnnormalizedModel& model,
                                                 const ParamVector& theta,
                                                 const DenseArray& data);

struct CdResult {
  ParamVector grad;
  long reinit_count = 0;  // chains that left ||x|| <= 1e6 and were reset to their data point
};

// Contrastive divergence: chains start at the data batch and evolve for
// langevin_steps; grad = -mean_data grad log p0 + mean_chains grad log p0.
CdResult cd_grad(const UnnormalizedModel& model, const ParamVector& theta, const DenseArray& data,
                 long langevin_steps, double step_size, RngStream& rng);

// Persistent chain pool for MCMC-MLE. Rows are chain states; a refresh
// fraction is re-drawn from the broad init Gaussian every call.
struct PersistentPool {
  DenseArray states;
  double refresh_fraction = 0.05;
  double init_sigma = 3.0;
  static PersistentPool broad_init(std::size_t pool_size, std::size_t dim, double sigma,
                                   RngStream& rng);
};

// Same two-term gradient as cd_grad but chains start from the persistent pool
// (updated in place with the final states), or from init_dist when persistence
// is disabled (pool == nullptr).
CdResult mcmc_mle_grad(const UnnormalizedModel& model, const ParamVector& theta,
                       const DenseArray& data, const LangevinConfig& config, PersistentPool* pool,
                       const NoiseDistribution* init_dist, RngStream& rng);

}  // namespace meco

#pragma once

#include <cmath>
#include <span>

#include "meco/dense_array.hpp"
#include "meco/models.hpp"
#include "meco/param_vector.hpp"

namespace meco {

// Step-size schedule: constant, or the PL-driven decreasing sequence
// 1 - mu*eta_t = eta_t^2 / eta_{t-1}^2.
struct StepSchedule {
  enum class Kind { Constant, Pl };
  Kind kind = Kind::Constant;
  double eta0 = 0.01;
  double mu = 1.0;  // PL constant, only read for Kind::Pl
  static StepSchedule constant(double eta) { return {Kind::Constant, eta, 0.0}; }
  static StepSchedule pl(double mu, double eta0) { return {Kind::Pl, eta0, mu}; }
};

// Unique positive root of 1 - mu*eta = eta^2 / eta_prev^2, i.e.
// 1/eta = mu/2 + sqrt(mu^2/4 + 1/eta_prev^2).
double pl_next_eta(double eta_prev, double mu);

struct MecoConfig {
  double gamma = 0.1;
  double beta = 0.9;
  StepSchedule eta = StepSchedule::constant(0.01);
  double u_min_log = std::log(1e-8);  // floor for log u; realizes p0/q >= c > 0
  std::size_t batch_data = 64;
  std::size_t batch_noise = 64;
  // Optional gamma_t = beta_t = min(1, gb_const * max(1, mu) * eta_{t-1}); the
  // experiments default to the fixed constants above.
  bool gb_from_eta = false;
  double gb_const = 1.0;
};

// The estimator pair: u_t kept in log domain, v_t tracking the full gradient.
struct MecoState {
  double log_u = 0.0;
  ParamVector v;
  long t = 0;
  long clip_events = 0;
  double eta_t = 0.0;     // step size for the upcoming update
  double prev_eta = 0.0;  // step size used by the last update (gamma/beta schedule)
};

// Per-step scalars the caller may trace.
struct MecoStepInfo {
  double loss_proxy = 0.0;  // -mean_data log p0 + log u
  double grad_norm = 0.0;   // ||v||
};

// First iteration: u_1 = mini-batch mean ratio (in log domain), v_1 = the
// corresponding gradient estimate. theta is not updated; apply -eta_t * v
// yourself or call meco_apply_update.
MecoState meco_init(const UnnormalizedModel& model, const ParamVector& theta,
                    const DenseArray& data, const DenseArray& noise,
                    std::span<const double> noise_log_q, const MecoConfig& config,
                    MecoStepInfo* info = nullptr);

// theta <- theta - eta_t * v, then advance the schedule. Used once after
// meco_init; meco_step performs it internally.
void meco_apply_update(MecoState& state, const MecoConfig& config, ParamVector& theta);

// Parts (a) and (b) of a step without the parameter update, for callers that
// apply v through a different rule (the Adam-style variant).
void meco_update_estimators(MecoState& state, const UnnormalizedModel& model,
                            const ParamVector& theta, const DenseArray& data,
                            const DenseArray& noise, std::span<const double> noise_log_q,
                            const MecoConfig& config, MecoStepInfo* info = nullptr);

// One full iteration: (a) log-domain momentum update of u with the mini-batch
// LSE-mean ratio, floored at u_min_log; (b) v <- (1-beta) v + beta * stochastic
// gradient, where the partition term weighs each noise point by
// exp(log p0 - log q - log u); (c) theta <- theta - eta_t * v.
void meco_step(MecoState& state, const UnnormalizedModel& model, ParamVector& theta,
               const DenseArray& data, const DenseArray& noise,
               std::span<const double> noise_log_q, const MecoConfig& config,
               MecoStepInfo* info = nullptr);

// Normalized gradient descent: theta <- theta - eta * g / max(||g||, norm_floor).
void ngd_step(ParamVector& theta, const ParamVector& grad, double eta, double norm_floor);

void sgd_step(ParamVector& theta, const ParamVector& grad, double eta);

struct AdamState {
  ParamVector m;
  ParamVector v;
  long t = 0;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Standard bias-corrected Adam update.
void adam_step(AdamState& state, ParamVector& theta, const ParamVector& grad, double eta,
               const AdamConfig& config = {});

}  // namespace meco

#include "meco/optim.hpp"

#include <algorithm>
#include <string>

#include "meco/errors.hpp"
#include "meco/numerics.hpp"

namespace meco {

double pl_next_eta(double eta_prev, double mu) {
  require(eta_prev > 0.0, "pl_next_eta: eta_prev must be positive");
  require(mu > 0.0, "pl_next_eta: mu must be positive");
  double inv = 0.5 * mu + std::sqrt(0.25 * mu * mu + 1.0 / (eta_prev * eta_prev));
  return 1.0 / inv;
}

namespace {

void check_batches(const DenseArray& data, const DenseArray& noise,
                   std::span<const double> noise_log_q) {
  require(data.rows() > 0 && noise.rows() > 0, "meco: batches must be non-empty");
  require(noise_log_q.size() == noise.rows(), "meco: noise_log_q size mismatch");
  for (std::size_t j = 0; j < noise_log_q.size(); ++j)
    if (!std::isfinite(noise_log_q[j]))
      throw input_error("non-finite noise log-density at point " + std::to_string(j));
}

double effective_gamma(const MecoState& state, const MecoConfig& config) {
  if (!config.gb_from_eta) return config.gamma;
  double mu = config.eta.kind == StepSchedule::Kind::Pl ? config.eta.mu : 1.0;
  return std::min(1.0, config.gb_const * std::max(1.0, mu) * state.prev_eta);
}

// Shared core: mini-batch ratio statistics and the gradient estimate
// g = -mean_data grad log p0 + mean_noise exp(log p0 - log q - log u) grad log p0.
struct BatchTerms {
  double lse_mean_log_ratio;
  double mean_data_logp;
};

BatchTerms gradient_estimate(const UnnormalizedModel& model, const ParamVector& theta,
                             const DenseArray& data, const DenseArray& noise,
                             std::span<const double> noise_log_q, double log_u_for_weights,
                             ParamVector& g_out) {
  const std::size_t n = data.rows(), m = noise.rows();
  DenseArray all({n + m, data.cols()});
  std::copy(data.flat().begin(), data.flat().end(), all.flat().begin());
  std::copy(noise.flat().begin(), noise.flat().end(), all.flat().begin() + data.size());
  auto eval = model.make_batch_eval(n + m);
  auto logp = eval->forward(all, theta);

  std::vector<double> log_ratios(m);
  double mean_data_logp = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean_data_logp += logp[i];
  mean_data_logp /= static_cast<double>(n);
  for (std::size_t j = 0; j < m; ++j) log_ratios[j] = logp[n + j] - noise_log_q[j];

  std::vector<double> w(n + m);
  for (std::size_t i = 0; i < n; ++i) w[i] = -1.0 / static_cast<double>(n);
  for (std::size_t j = 0; j < m; ++j)
    w[n + j] = std::exp(log_ratios[j] - log_u_for_weights) / static_cast<double>(m);
  g_out.fill(0.0);
  eval->weighted_grad_theta(w, g_out);

  return {logmeanexp(log_ratios), mean_data_logp};
}

}  // namespace

MecoState meco_init(const UnnormalizedModel& model, const ParamVector& theta,
                    const DenseArray& data, const DenseArray& noise,
                    std::span<const double> noise_log_q, const MecoConfig& config,
                    MecoStepInfo* info) {
  check_batches(data, noise, noise_log_q);
  MecoState state;
  state.v = ParamVector(model.layout());
  state.eta_t = config.eta.eta0;
  state.prev_eta = config.eta.eta0;

  // u_1 = mini-batch mean ratio; weights below then use exactly u_1.
  std::vector<double> log_ratios(noise.rows());
  {
    auto eval = model.make_batch_eval(noise.rows());
    auto logp = eval->forward(noise, theta);
    for (std::size_t j = 0; j < noise.rows(); ++j) log_ratios[j] = logp[j] - noise_log_q[j];
  }
  state.log_u = logmeanexp(log_ratios);
  if (state.log_u < config.u_min_log) {
    state.log_u = config.u_min_log;
    ++state.clip_events;
  }
  auto terms = gradient_estimate(model, theta, data, noise, noise_log_q, state.log_u, state.v);
  state.t = 1;
  if (info) {
    info->loss_proxy = -terms.mean_data_logp + state.log_u;
    info->grad_norm = state.v.norm();
  }
  return state;
}

void meco_apply_update(MecoState& state, const MecoConfig& config, ParamVector& theta) {
  theta.axpy(-state.eta_t, state.v);
  state.prev_eta = state.eta_t;
  if (config.eta.kind == StepSchedule::Kind::Pl)
    state.eta_t = pl_next_eta(state.eta_t, config.eta.mu);
}

void meco_update_estimators(MecoState& state, const UnnormalizedModel& model,
                            const ParamVector& theta, const DenseArray& data,
                            const DenseArray& noise, std::span<const double> noise_log_q,
                            const MecoConfig& config, MecoStepInfo* info) {
  require(state.t >= 1, "meco_step: state must come from meco_init");
  check_batches(data, noise, noise_log_q);

  const double gamma = effective_gamma(state, config);
  const double beta = config.gb_from_eta ? gamma : config.beta;

  // (a) log-domain momentum on u with the batch LSE-mean ratio
  std::vector<double> log_ratios(noise.rows());
  {
    auto eval = model.make_batch_eval(noise.rows());
    auto logp = eval->forward(noise, theta);
    for (std::size_t j = 0; j < noise.rows(); ++j) log_ratios[j] = logp[j] - noise_log_q[j];
  }
  double lse_mean = logmeanexp(log_ratios);
  state.log_u = gamma >= 1.0
                    ? lse_mean
                    : logaddexp(std::log1p(-gamma) + state.log_u, std::log(gamma) + lse_mean);
  if (state.log_u < config.u_min_log) {
    state.log_u = config.u_min_log;
    ++state.clip_events;
  }

  // (b) gradient tracker
  ParamVector g(model.layout());
  auto terms = gradient_estimate(model, theta, data, noise, noise_log_q, state.log_u, g);
  state.v.scale(1.0 - beta);
  state.v.axpy(beta, g);
  ++state.t;
  if (info) {
    info->loss_proxy = -terms.mean_data_logp + state.log_u;
    info->grad_norm = state.v.norm();
  }
}

void meco_step(MecoState& state, const UnnormalizedModel& model, ParamVector& theta,
               const DenseArray& data, const DenseArray& noise,
               std::span<const double> noise_log_q, const MecoConfig& config, MecoStepInfo* info) {
  meco_update_estimators(state, model, theta, data, noise, noise_log_q, config, info);
  meco_apply_update(state, config, theta);  // (c)
}

void ngd_step(ParamVector& theta, const ParamVector& grad, double eta, double norm_floor) {
  require(eta > 0.0, "ngd_step: eta must be positive");
  theta.axpy(-eta / std::max(grad.norm(), norm_floor), grad);
}

void sgd_step(ParamVector& theta, const ParamVector& grad, double eta) {
  theta.axpy(-eta, grad);
}

void adam_step(AdamState& state, ParamVector& theta, const ParamVector& grad, double eta,
               const AdamConfig& config) {
  if (state.t == 0) {
    state.m = ParamVector(theta.layout());
    state.v = ParamVector(theta.layout());
  }
  ++state.t;
  const double b1 = config.beta1, b2 = config.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    state.m[i] = b1 * state.m[i] + (1.0 - b1) * grad[i];
    state.v[i] = b2 * state.v[i] + (1.0 - b2) * grad[i] * grad[i];
    double mhat = state.m[i] / bc1;
    double vhat = state.v[i] / bc2;
    theta[i] -= eta * mhat / (std::sqrt(vhat) + config.eps);
  }
}

}  // namespace meco

#include "meco/objectives.hpp"

#include <cmath>
#include <string>

#include "meco/errors.hpp"
#include "meco/numerics.hpp"

namespace meco {

double TauGrad::norm() const {
  double s = alpha * alpha;
  for (double v : theta.flat()) s += v * v;
  return std::sqrt(s);
}

namespace {

DenseArray concat_rows(const DenseArray& a, const DenseArray& b) {
  DenseArray out({a.rows() + b.rows(), a.cols()});
  std::copy(a.flat().begin(), a.flat().end(), out.flat().begin());
  std::copy(b.flat().begin(), b.flat().end(), out.flat().begin() + a.size());
  return out;
}

std::vector<double> noise_log_densities(const NoiseDistribution& q, const DenseArray& noise) {
  std::vector<double> log_q(noise.rows());
  for (std::size_t j = 0; j < noise.rows(); ++j) {
    log_q[j] = q.log_density(noise.row(j));
    if (!std::isfinite(log_q[j]))
      throw input_error("non-finite noise log-density at point " + std::to_string(j));
  }
  return log_q;
}

}  // namespace

ClassifierLossGrad nce_loss_and_grad(const UnnormalizedModel& model, const NceParams& tau,
                                     const NoiseDistribution& q, const DenseArray& data,
                                     const DenseArray& noise) {
  require(data.rows() > 0 && noise.rows() > 0, "nce_loss_and_grad: batches must be non-empty");
  const std::size_t n = data.rows(), m = noise.rows();
  const auto log_q = noise_log_densities(q, noise);

  DenseArray all = concat_rows(data, noise);
  auto eval = model.make_batch_eval(n + m);
  auto logp = eval->forward(all, tau.theta);

  ClassifierLossGrad out;
  out.grad.theta = ParamVector(model.layout());
  std::vector<double> w(n + m);
  double loss = 0.0, galpha = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    // u = log p0 - log q(x_i) - alpha on the data side
    double u = logp[i] - q.log_density(data.row(i)) - tau.alpha;
    if (!std::isfinite(u))
      throw input_error("non-finite noise log-density at data point " + std::to_string(i));
    loss += -log_sigmoid(u) / static_cast<double>(n);
    double one_minus_h = sigmoid(-u);
    w[i] = -one_minus_h / static_cast<double>(n);
    galpha += one_minus_h / static_cast<double>(n);
  }
  for (std::size_t j = 0; j < m; ++j) {
    double u = logp[n + j] - log_q[j] - tau.alpha;
    loss += -log_sigmoid(-u) / static_cast<double>(m);  // log(1-h) = log sigmoid(-u)
    double h = sigmoid(u);
    w[n + j] = h / static_cast<double>(m);
    galpha -= h / static_cast<double>(m);
  }
  eval->weighted_grad_theta(w, out.grad.theta);
  out.grad.alpha = galpha;
  out.loss = loss;
  return out;
}

ClassifierLossGrad ence_loss_and_grad(const UnnormalizedModel& model, const NceParams& tau,
                                      const NoiseDistribution& q, const DenseArray& data,
                                      const DenseArray& noise) {
  require(data.rows() > 0 && noise.rows() > 0, "ence_loss_and_grad: batches must be non-empty");
  const std::size_t n = data.rows(), m = noise.rows();
  const auto log_q = noise_log_densities(q, noise);

  DenseArray all = concat_rows(data, noise);
  auto eval = model.make_batch_eval(n + m);
  auto logp = eval->forward(all, tau.theta);

  ClassifierLossGrad out;
  out.grad.theta = ParamVector(model.layout());
  std::vector<double> w(n + m);
  double loss = 0.0, galpha = 0.0;
  constexpr double kClip = 60.0;
  auto guarded_exp = [&](double half_u) {
    if (half_u > kClip || half_u < -kClip) {
      ++out.clip_events;
      half_u = std::clamp(half_u, -kClip, kClip);
      return std::pair{std::exp(half_u), 0.0};  // clipped region: flat in u
    }
    double e = std::exp(half_u);
    return std::pair{e, e};
  };
  for (std::size_t i = 0; i < n; ++i) {
    double u = logp[i] - q.log_density(data.row(i)) - tau.alpha;
    if (!std::isfinite(u))
      throw input_error("non-finite noise log-density at data point " + std::to_string(i));
    auto [e, de] = guarded_exp(-0.5 * u);
    loss += e / static_cast<double>(n);
    w[i] = -0.5 * de / static_cast<double>(n);
    galpha += 0.5 * de / static_cast<double>(n);
  }
  for (std::size_t j = 0; j < m; ++j) {
    double u = logp[n + j] - log_q[j] - tau.alpha;
    auto [e, de] = guarded_exp(0.5 * u);
    loss += e / static_cast<double>(m);
    w[n + j] = 0.5 * de / static_cast<double>(m);
    galpha -= 0.5 * de / static_cast<double>(m);
  }
  eval->weighted_grad_theta(w, out.grad.theta);
  out.grad.alpha = galpha;
  out.loss = loss;
  return out;
}

ScoreMatchingResult score_matching_loss_and_grad(const UnnormalizedModel& model,
                                                 const ParamVector& theta,
                                                 const DenseArray& data) {
  require(data.rows() > 0, "score_matching_loss_and_grad: batch must be non-empty");
  if (model.dim() > 4)
    throw unsupported_dimension_error(
        "score matching supports input dimension <= 4, model has dim " +
        std::to_string(model.dim()));
  ScoreMatchingResult out;
  out.grad = ParamVector(model.layout());
  const double wpt = 1.0 / static_cast<double>(data.rows());
  for (std::size_t i = 0; i < data.rows(); ++i)
    out.loss += wpt * model.score_matching_point(data.row(i), theta, &out.grad, wpt);
  return out;
}

namespace {

// grad = -mean_data grad log p0 + mean_chains grad log p0, plus the
// out-of-range chain reset rule shared by CD and MCMC-MLE. The two terms are
// reduced separately with identical summation order so CD-0 cancels exactly.
CdResult two_term_grad(const UnnormalizedModel& model, const ParamVector& theta,
                       const DenseArray& data, DenseArray& chains, const DenseArray& resets) {
  CdResult out;
  out.grad = ParamVector(model.layout());
  const std::size_t n = data.rows(), c = chains.rows(), d = data.cols();
  for (std::size_t i = 0; i < c; ++i) {
    auto row = chains.row(i);
    double norm2 = 0.0;
    bool finite = true;
    for (double v : row) {
      norm2 += v * v;
      finite = finite && std::isfinite(v);
    }
    if (!finite || norm2 > 1e12) {  // ||x|| > 1e6
      auto src = resets.row(i % resets.rows());
      for (std::size_t j = 0; j < d; ++j) row[j] = src[j];
      ++out.reinit_count;
    }
  }
  {
    auto eval = model.make_batch_eval(n);
    eval->forward(data, theta);
    std::vector<double> w(n, -1.0 / static_cast<double>(n));
    eval->weighted_grad_theta(w, out.grad);
  }
  {
    auto eval = model.make_batch_eval(c);
    eval->forward(chains, theta);
    std::vector<double> w(c, 1.0 / static_cast<double>(c));
    eval->weighted_grad_theta(w, out.grad);
  }
  return out;
}

}  // namespace

CdResult cd_grad(const UnnormalizedModel& model, const ParamVector& theta, const DenseArray& data,
                 long langevin_steps, double step_size, RngStream& rng) {
  require(langevin_steps >= 0, "cd_grad: langevin_steps must be >= 0");
  LangevinConfig cfg;
  cfg.steps = langevin_steps;
  cfg.step_size = step_size;
  DenseArray chains = langevin_chain(model, theta, data, cfg, rng);
  return two_term_grad(model, theta, data, chains, data);
}

PersistentPool PersistentPool::broad_init(std::size_t pool_size, std::size_t dim, double sigma,
                                          RngStream& rng) {
  PersistentPool pool;
  pool.init_sigma = sigma;
  pool.states = DenseArray({pool_size, dim});
  for (auto& v : pool.states.flat()) v = sigma * rng.normal();
  return pool;
}

CdResult mcmc_mle_grad(const UnnormalizedModel& model, const ParamVector& theta,
                       const DenseArray& data, const LangevinConfig& config, PersistentPool* pool,
                       const NoiseDistribution* init_dist, RngStream& rng) {
  const std::size_t n = data.rows(), d = data.cols();
  DenseArray x0({n, d});
  std::vector<std::size_t> picks;
  if (pool) {
    require(pool->states.rows() > 0, "mcmc_mle_grad: persistent pool is empty");
    // refresh a fraction from the broad Gaussian, then draw chain starts
    for (std::size_t i = 0; i < pool->states.rows(); ++i) {
      if (rng.uniform() < pool->refresh_fraction)
        for (std::size_t j = 0; j < d; ++j) pool->states.at(i, j) = pool->init_sigma * rng.normal();
    }
    picks.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      picks[i] = rng.uniform_index(pool->states.rows());
      auto src = pool->states.row(picks[i]);
      std::copy(src.begin(), src.end(), x0.row(i).begin());
    }
  } else {
    require(init_dist != nullptr, "mcmc_mle_grad: need init_dist when persistence is off");
    init_dist->sample(rng, x0);
  }
  DenseArray chains = langevin_chain(model, theta, x0, config, rng);
  CdResult out = two_term_grad(model, theta, data, chains, x0);
  if (pool) {
    for (std::size_t i = 0; i < n; ++i) {
      auto src = chains.row(i);
      std::copy(src.begin(), src.end(), pool->states.row(picks[i]).begin());
    }
  }
  return out;
}

}  // namespace meco

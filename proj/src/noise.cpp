#include "meco/noise.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "meco/errors.hpp"
#include "meco/numerics.hpp"

namespace meco {

void NoiseDistribution::sample_with_log_density(RngStream& rng, DenseArray& out,
                                                std::span<double> log_q) const {
  sample(rng, out);
  for (std::size_t i = 0; i < out.rows(); ++i) log_q[i] = log_density(out.row(i));
}

void NoiseDistribution::grad_log_density_theta(std::span<const double>, ParamVector&) const {
  throw contract_error("noise distribution has no theta coupling");
}

// ---------------------------------------------------------------------------
// FittedGaussian
// ---------------------------------------------------------------------------

namespace {
// Plain lower Cholesky; jitter upstream keeps the matrix positive-definite.
DenseArray cholesky(const DenseArray& a) {
  const std::size_t d = a.rows();
  DenseArray l({d, d});
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = a.at(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l.at(i, k) * l.at(j, k);
      if (i == j) {
        if (s <= 0.0) throw input_error("covariance is not positive definite");
        l.at(i, i) = std::sqrt(s);
      } else {
        l.at(i, j) = s / l.at(j, j);
      }
    }
  }
  return l;
}
}  // namespace

FittedGaussian::FittedGaussian(std::vector<double> mean, DenseArray cov)
    : mean_(std::move(mean)), cov_(std::move(cov)) {
  const std::size_t d = mean_.size();
  require(cov_.rows() == d && cov_.cols() == d, "FittedGaussian: covariance shape mismatch");
  chol_ = cholesky(cov_);
  double log_det = 0.0;
  for (std::size_t i = 0; i < d; ++i) log_det += std::log(chol_.at(i, i));
  log_norm_ = -static_cast<double>(d) * kLogSqrt2Pi - log_det;
}

void FittedGaussian::sample(RngStream& rng, DenseArray& out) const {
  const std::size_t d = mean_.size();
  std::vector<double> z(d);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (auto& v : z) v = rng.normal();
    auto row = out.row(r);
    for (std::size_t i = 0; i < d; ++i) {
      double s = mean_[i];
      for (std::size_t k = 0; k <= i; ++k) s += chol_.at(i, k) * z[k];
      row[i] = s;
    }
  }
}

double FittedGaussian::log_density(std::span<const double> x) const {
  const std::size_t d = mean_.size();
  // forward-solve L y = x - mean, then quadratic form is ||y||^2
  std::vector<double> y(d);
  for (std::size_t i = 0; i < d; ++i) {
    double s = x[i] - mean_[i];
    for (std::size_t k = 0; k < i; ++k) s -= chol_.at(i, k) * y[k];
    y[i] = s / chol_.at(i, i);
  }
  double q = 0.0;
  for (double v : y) q += v * v;
  return log_norm_ - 0.5 * q;
}

FittedGaussian fit_gaussian(const DenseArray& data, double jitter) {
  const std::size_t n = data.rows(), d = data.cols();
  if (n < d + 1)
    throw input_error("fit_gaussian: degenerate data, need at least d+1 points, got " +
                      std::to_string(n));
  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = data.row(i);
    for (std::size_t j = 0; j < d; ++j) mean[j] += row[j];
  }
  for (auto& m : mean) m /= static_cast<double>(n);
  DenseArray cov({d, d});
  for (std::size_t i = 0; i < n; ++i) {
    auto row = data.row(i);
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b)
        cov.at(a, b) += (row[a] - mean[a]) * (row[b] - mean[b]);
  }
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < d; ++b) cov.at(a, b) /= static_cast<double>(n - 1);
  for (std::size_t a = 0; a < d; ++a) cov.at(a, a) += jitter;
  return FittedGaussian(std::move(mean), std::move(cov));
}

// ---------------------------------------------------------------------------
// EmpiricalConvolution
// ---------------------------------------------------------------------------

EmpiricalConvolution::EmpiricalConvolution(std::shared_ptr<const DenseArray> anchors,
                                           double kernel_std, std::size_t batch_size,
                                           bool minibatch_density)
    : anchors_(std::move(anchors)),
      kernel_std_(kernel_std),
      batch_size_(batch_size),
      minibatch_density_(minibatch_density) {
  require(anchors_ && anchors_->rows() > 0, "EmpiricalConvolution: empty anchor set");
  require(kernel_std_ > 0.0, "EmpiricalConvolution: kernel_std must be positive");
}

void EmpiricalConvolution::sample(RngStream& rng, DenseArray& out) const {
  const std::size_t d = dim();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto anchor = anchors_->row(rng.uniform_index(anchors_->rows()));
    auto row = out.row(r);
    for (std::size_t j = 0; j < d; ++j) row[j] = anchor[j] + kernel_std_ * rng.normal();
  }
}

double EmpiricalConvolution::log_density_over(std::span<const double> x,
                                              std::span<const std::size_t> ids) const {
  const std::size_t d = dim();
  const double inv2s2 = 1.0 / (2.0 * kernel_std_ * kernel_std_);
  const double log_norm = -static_cast<double>(d) * (kLogSqrt2Pi + std::log(kernel_std_));
  double hi = -std::numeric_limits<double>::infinity();
  std::vector<double> terms(ids.size());
  for (std::size_t t = 0; t < ids.size(); ++t) {
    auto a = anchors_->row(ids[t]);
    double d2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) d2 += sq(x[j] - a[j]);
    terms[t] = log_norm - d2 * inv2s2;
    hi = std::max(hi, terms[t]);
  }
  double s = 0.0;
  for (double t : terms) s += std::exp(t - hi);
  return hi + std::log(s) - std::log(static_cast<double>(ids.size()));
}

double EmpiricalConvolution::log_density(std::span<const double> x) const {
  std::vector<std::size_t> all(anchors_->rows());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return log_density_over(x, all);
}

void EmpiricalConvolution::sample_with_log_density(RngStream& rng, DenseArray& out,
                                                   std::span<double> log_q) const {
  const std::size_t d = dim();
  std::vector<std::size_t> ids(out.rows());
  for (std::size_t r = 0; r < out.rows(); ++r) {
    ids[r] = rng.uniform_index(anchors_->rows());
    auto anchor = anchors_->row(ids[r]);
    auto row = out.row(r);
    for (std::size_t j = 0; j < d; ++j) row[j] = anchor[j] + kernel_std_ * rng.normal();
  }
  if (!minibatch_density_) {
    for (std::size_t r = 0; r < out.rows(); ++r) log_q[r] = log_density(out.row(r));
    return;
  }
  // batch anchors plus batch_size-1 fresh uniform anchors
  for (std::size_t e = 1; e < batch_size_; ++e) ids.push_back(rng.uniform_index(anchors_->rows()));
  for (std::size_t r = 0; r < out.rows(); ++r) log_q[r] = log_density_over(out.row(r), ids);
}

double EmpiricalConvolution::minibatch_density_gap(RngStream& rng, std::size_t count) const {
  DenseArray pts({count, dim()});
  std::vector<double> approx(count);
  EmpiricalConvolution mb(anchors_, kernel_std_, batch_size_, true);
  mb.sample_with_log_density(rng, pts, approx);
  double gap = 0.0;
  for (std::size_t i = 0; i < count; ++i) gap += std::abs(approx[i] - log_density(pts.row(i)));
  return gap / static_cast<double>(count);
}

// ---------------------------------------------------------------------------
// MixtureNoise
// ---------------------------------------------------------------------------

MixtureNoise::MixtureNoise(std::shared_ptr<const NoiseDistribution> a,
                           std::shared_ptr<const NoiseDistribution> b, double weight_a)
    : a_(std::move(a)), b_(std::move(b)), weight_a_(weight_a) {
  require(a_ && b_ && a_->dim() == b_->dim(), "MixtureNoise: component dimension mismatch");
  require(weight_a_ > 0.0 && weight_a_ < 1.0, "MixtureNoise: weight must be in (0,1)");
}

void MixtureNoise::sample(RngStream& rng, DenseArray& out) const {
  DenseArray one({1, dim()});
  for (std::size_t r = 0; r < out.rows(); ++r) {
    const NoiseDistribution& comp = rng.uniform() < weight_a_ ? *a_ : *b_;
    comp.sample(rng, one);
    std::copy(one.flat().begin(), one.flat().end(), out.row(r).begin());
  }
}

double MixtureNoise::log_density(std::span<const double> x) const {
  return logaddexp(std::log(weight_a_) + a_->log_density(x),
                   std::log1p(-weight_a_) + b_->log_density(x));
}

// ---------------------------------------------------------------------------
// TrackedGaussianNoise
// ---------------------------------------------------------------------------

void TrackedGaussianNoise::sample(RngStream& rng, DenseArray& out) const {
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = theta_ + delta_ + rng.normal();
}

double TrackedGaussianNoise::log_density(std::span<const double> x) const {
  return -0.5 * sq(x[0] - theta_ - delta_) - kLogSqrt2Pi;
}

void TrackedGaussianNoise::grad_log_density_theta(std::span<const double> x,
                                                  ParamVector& out) const {
  out[0] = x[0] - theta_ - delta_;
}

// ---------------------------------------------------------------------------
// variance diagnostics
// ---------------------------------------------------------------------------

VarianceReport variance_diagnostic(const UnnormalizedModel& model, const ParamVector& theta,
                                   const NoiseDistribution& q, std::size_t n_mc, RngStream& rng,
                                   const DenseArray* data) {
  require(n_mc >= 2, "variance_diagnostic: n_mc must be at least 2");
  VarianceReport rep;
  const std::size_t d = model.dim();
  const std::size_t p = theta.size();

  // Three replays of the same draw sequence: find the log-ratio shift, take
  // means, then accumulate squared deviations. Replaying keeps the
  // constant-ratio case at exactly zero instead of cancellation noise.
  DenseArray z({1, d});
  ParamVector gp(model.layout()), gq(model.layout());

  RngStream pass = rng;
  double max_logr = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n_mc; ++i) {
    q.sample(pass, z);
    double logr = model.log_unnorm(z.row(0), theta) - q.log_density(z.row(0));
    max_logr = std::max(max_logr, logr);
  }

  double mean_rs = 0.0;                // mean of exp(logr - max_logr)
  std::vector<double> mean_g(p, 0.0);  // mean of shifted grad ratio
  pass = rng;
  for (std::size_t i = 0; i < n_mc; ++i) {
    q.sample(pass, z);
    double logr = model.log_unnorm(z.row(0), theta) - q.log_density(z.row(0));
    double rs = std::exp(logr - max_logr);
    mean_rs += rs;
    model.grad_theta(z.row(0), theta, gp);
    if (q.theta_coupled()) {
      q.grad_log_density_theta(z.row(0), gq);
      gp.axpy(-1.0, gq);
    }
    for (std::size_t j = 0; j < p; ++j) mean_g[j] += rs * gp[j];
  }
  mean_rs /= static_cast<double>(n_mc);
  for (auto& v : mean_g) v /= static_cast<double>(n_mc);

  double ss_r = 0.0, ss_g = 0.0;
  pass = rng;
  for (std::size_t i = 0; i < n_mc; ++i) {
    q.sample(pass, z);
    double logr = model.log_unnorm(z.row(0), theta) - q.log_density(z.row(0));
    double rs = std::exp(logr - max_logr);
    ss_r += sq(rs - mean_rs);
    model.grad_theta(z.row(0), theta, gp);
    if (q.theta_coupled()) {
      q.grad_log_density_theta(z.row(0), gq);
      gp.axpy(-1.0, gq);
    }
    for (std::size_t j = 0; j < p; ++j) ss_g += sq(rs * gp[j] - mean_g[j]);
  }
  rng = pass;  // caller's stream advances by one pass worth of draws

  const double denom = static_cast<double>(n_mc - 1);
  const double log_scale = 2.0 * max_logr;
  double log_sigma = log_scale + std::log(ss_r / denom);
  double log_zeta = log_scale + std::log(ss_g / denom);
  if (log_sigma > 700.0 || log_zeta > 700.0) {
    rep.overflow_events++;
    rep.sigma_g_sq = std::numeric_limits<double>::infinity();
    rep.zeta_g_sq = std::numeric_limits<double>::infinity();
  } else {
    rep.sigma_g_sq = ss_r <= 0.0 ? 0.0 : std::exp(log_sigma);
    rep.zeta_g_sq = ss_g <= 0.0 ? 0.0 : std::exp(log_zeta);
  }

  if (data && data->rows() >= 2) {
    std::vector<double> gh_mean(p, 0.0);
    for (std::size_t i = 0; i < data->rows(); ++i) {
      model.grad_theta(data->row(i), theta, gp);
      for (std::size_t j = 0; j < p; ++j) gh_mean[j] += gp[j];
    }
    for (auto& v : gh_mean) v /= static_cast<double>(data->rows());
    double ss = 0.0;
    for (std::size_t i = 0; i < data->rows(); ++i) {
      model.grad_theta(data->row(i), theta, gp);
      for (std::size_t j = 0; j < p; ++j) ss += sq(gp[j] - gh_mean[j]);
    }
    rep.zeta_h_sq = ss / static_cast<double>(data->rows() - 1);
  } else {
    rep.zeta_h_sq = std::numeric_limits<double>::quiet_NaN();
  }
  return rep;
}

}  // namespace meco

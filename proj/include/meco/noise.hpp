#pragma once

#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "meco/dense_array.hpp"
#include "meco/models.hpp"
#include "meco/param_vector.hpp"
#include "meco/rng.hpp"

namespace meco {

// Noise distribution q(x): seeded sampling plus exact log-density. q must be
// positive wherever the model's p0 is, so every concrete noise here has full
// support. Immutable after construction; sampling wants an exclusive
// RngStream, density evaluation is thread-safe.
class NoiseDistribution {
 public:
  virtual ~NoiseDistribution() = default;
  virtual std::size_t dim() const = 0;
  virtual void sample(RngStream& rng, DenseArray& out) const = 0;
  virtual double log_density(std::span<const double> x) const = 0;

  // Draw a batch and report log q per point. The default evaluates the exact
  // density; EmpiricalConvolution overrides with its mini-batch approximation.
  virtual void sample_with_log_density(RngStream& rng, DenseArray& out,
                                       std::span<double> log_q) const;

  // Noises tied to the current model parameter (q = normalized p_theta and
  // offsets of it) report d log q / d theta so the variance diagnostics can
  // charge the coupling; plain noises have no theta direction.
  virtual bool theta_coupled() const { return false; }
  virtual void grad_log_density_theta(std::span<const double> x, ParamVector& out) const;
};

// Multivariate Gaussian with cached Cholesky factor.
class FittedGaussian : public NoiseDistribution {
 public:
  FittedGaussian(std::vector<double> mean, DenseArray cov);
  std::size_t dim() const override { return mean_.size(); }
  void sample(RngStream& rng, DenseArray& out) const override;
  double log_density(std::span<const double> x) const override;
  const std::vector<double>& mean() const { return mean_; }
  const DenseArray& cov() const { return cov_; }

 private:
  std::vector<double> mean_;
  DenseArray cov_;
  DenseArray chol_;        // lower-triangular factor
  double log_norm_ = 0.0;  // -d/2 log(2pi) - 1/2 log det
};

// mean = sample mean, cov = unbiased sample covariance + jitter*I.
// Needs at least d+1 points.
FittedGaussian fit_gaussian(const DenseArray& data, double jitter);

// q(z) = (1/n) sum_i kappa(z - x_i) with isotropic Gaussian kernel of std s:
// samples are a uniformly drawn anchor plus kernel noise. log_density sums
// over all anchors (exact); the mini-batch approximation of
// sample_with_log_density averages over the anchors that generated the batch
// plus batch_size-1 extra uniform anchors, which biases log q slightly high at
// the sampled points.
class EmpiricalConvolution : public NoiseDistribution {
 public:
  EmpiricalConvolution(std::shared_ptr<const DenseArray> anchors, double kernel_std,
                       std::size_t batch_size, bool minibatch_density = false);
  std::size_t dim() const override { return anchors_->cols(); }
  void sample(RngStream& rng, DenseArray& out) const override;
  double log_density(std::span<const double> x) const override;
  void sample_with_log_density(RngStream& rng, DenseArray& out,
                               std::span<double> log_q) const override;

  // Mean |exact - minibatch| log-density gap over a probe batch.
  double minibatch_density_gap(RngStream& rng, std::size_t count) const;

 private:
  double log_density_over(std::span<const double> x, std::span<const std::size_t> ids) const;
  std::shared_ptr<const DenseArray> anchors_;
  double kernel_std_;
  std::size_t batch_size_;
  bool minibatch_density_;
};

// Two-component mixture, sampled by a Bernoulli pick; the density is the
// weighted sum of the component densities.
class MixtureNoise : public NoiseDistribution {
 public:
  MixtureNoise(std::shared_ptr<const NoiseDistribution> a,
               std::shared_ptr<const NoiseDistribution> b, double weight_a = 0.5);
  std::size_t dim() const override { return a_->dim(); }
  void sample(RngStream& rng, DenseArray& out) const override;
  double log_density(std::span<const double> x) const override;

 private:
  std::shared_ptr<const NoiseDistribution> a_, b_;
  double weight_a_;
};

// N(theta + delta, 1) for the 1-D Gaussian mean family, carrying its
// theta-sensitivity. With delta = 0 this is exactly the normalized model
// density p(.; theta).
class TrackedGaussianNoise : public NoiseDistribution {
 public:
  TrackedGaussianNoise(double theta, double delta) : theta_(theta), delta_(delta) {}
  std::size_t dim() const override { return 1; }
  void sample(RngStream& rng, DenseArray& out) const override;
  double log_density(std::span<const double> x) const override;
  bool theta_coupled() const override { return true; }
  void grad_log_density_theta(std::span<const double> x, ParamVector& out) const override;

 private:
  double theta_, delta_;
};

// Monte-Carlo estimates of the Assumption-2 variance quantities. All second
// moments are computed in a max-shifted scale so constant ratios report zero
// instead of cancellation noise; exponent overflow is flagged, not thrown.
struct VarianceReport {
  double sigma_g_sq = 0.0;  // Var_q[p0/q]
  double zeta_g_sq = 0.0;   // E_q ||grad_theta(p0/q) - mean||^2
  double zeta_h_sq = 0.0;   // E_data ||grad_theta(-log p0) - mean||^2 (NaN without data)
  long overflow_events = 0;
};

VarianceReport variance_diagnostic(const UnnormalizedModel& model, const ParamVector& theta,
                                   const NoiseDistribution& q, std::size_t n_mc, RngStream& rng,
                                   const DenseArray* data = nullptr);

}  // namespace meco

#pragma once

#include <memory>
#include <span>
#include <vector>

#include "meco/dense_array.hpp"
#include "meco/param_vector.hpp"
#include "meco/rng.hpp"

namespace meco {

inline constexpr double kLogSqrt2Pi = 0.9189385332046727;  // log sqrt(2*pi)

// Reusable batch evaluation context for one model. forward() must be called
// before the gradient methods; gradients refer to the points of the last
// forward. Single-owner, cheap to create per training step.
class BatchEval {
 public:
  virtual ~BatchEval() = default;
  // log p0(x_i; theta) for every row of X.
  virtual std::span<const double> forward(const DenseArray& x, const ParamVector& theta) = 0;
  // out += sum_i w_i * grad_theta log p0(x_i; theta)
  virtual void weighted_grad_theta(std::span<const double> w, ParamVector& out) = 0;
  // Per-example input gradients: out row i = grad_x log p0(x_i; theta).
  virtual void grad_x(DenseArray& out) = 0;
};

// Unnormalized model p0(x; theta), exposed through log p0 and its gradients.
// Models are immutable after construction; all evaluation is side-effect-free.
class UnnormalizedModel {
 public:
  virtual ~UnnormalizedModel() = default;

  virtual std::size_t dim() const = 0;
  virtual const ParamLayout& layout() const = 0;

  virtual double log_unnorm(std::span<const double> x, const ParamVector& theta) const = 0;
  virtual void grad_theta(std::span<const double> x, const ParamVector& theta,
                          ParamVector& out) const = 0;
  virtual void grad_x(std::span<const double> x, const ParamVector& theta,
                      std::span<double> out) const = 0;

  virtual std::unique_ptr<BatchEval> make_batch_eval(std::size_t batch) const;

  // Per-point Hyvarinen terms: returns 0.5*||grad_x log p0||^2 + tr(hess_x log p0)
  // and accumulates weight * d(that)/d(theta) into grad_accum when non-null.
  // Only meaningful for dim <= 4; models without second-order support throw.
  virtual double score_matching_point(std::span<const double> x, const ParamVector& theta,
                                      ParamVector* grad_accum, double weight) const;
};

// 1-D Gaussian mean family: log p0(x; theta) = theta*x - x^2/2. The normalized
// member is N(theta, 1) and the log-partition is available in closed form.
class GaussianMeanModel : public UnnormalizedModel {
 public:
  GaussianMeanModel();
  std::size_t dim() const override { return 1; }
  const ParamLayout& layout() const override { return layout_; }
  double log_unnorm(std::span<const double> x, const ParamVector& theta) const override;
  void grad_theta(std::span<const double> x, const ParamVector& theta,
                  ParamVector& out) const override;
  void grad_x(std::span<const double> x, const ParamVector& theta,
              std::span<double> out) const override;
  std::unique_ptr<BatchEval> make_batch_eval(std::size_t batch) const override;
  double score_matching_point(std::span<const double> x, const ParamVector& theta,
                              ParamVector* grad_accum, double weight) const override;

 private:
  ParamLayout layout_;
};

// log Z(theta) = log sqrt(2*pi) + theta^2/2 for the Gaussian mean family.
double log_partition_gaussian(double theta);

// L(theta) - L(theta_star) assembled from the closed-form pieces of the
// population MLE objective; algebraically equal to (theta - theta_star)^2 / 2.
double mle_gap_gaussian(double theta, double theta_star);

enum class Activation { Tanh, Softplus, Swish };

// MLP energy f0(x; theta); p0 = exp(f0). Smooth activations only, so the score
// and its derivatives exist everywhere (score matching differentiates twice).
class MlpEnergyModel : public UnnormalizedModel {
 public:
  MlpEnergyModel(std::size_t dim, std::vector<std::size_t> hidden,
                 Activation act = Activation::Swish);
  static MlpEnergyModel default_2d() { return MlpEnergyModel(2, {300, 300, 300}); }

  std::size_t dim() const override { return dim_; }
  const ParamLayout& layout() const override { return layout_; }
  Activation activation() const { return act_; }
  const std::vector<std::size_t>& hidden() const { return hidden_; }

  // Seeded uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)); zero biases.
  ParamVector init_params(RngStream& rng) const;

  double log_unnorm(std::span<const double> x, const ParamVector& theta) const override;
  void grad_theta(std::span<const double> x, const ParamVector& theta,
                  ParamVector& out) const override;
  void grad_x(std::span<const double> x, const ParamVector& theta,
              std::span<double> out) const override;
  std::unique_ptr<BatchEval> make_batch_eval(std::size_t batch) const override;
  double score_matching_point(std::span<const double> x, const ParamVector& theta,
                              ParamVector* grad_accum, double weight) const override;

 private:
  std::size_t dim_;
  std::vector<std::size_t> hidden_;
  Activation act_;
  ParamLayout layout_;
};

}  // namespace meco

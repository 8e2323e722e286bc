#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "meco/models.hpp"
#include "meco/param_vector.hpp"

namespace meco::testing {

// Central finite differences with the documented oracle step h = 1e-5.
inline constexpr double kFdStep = 1e-5;

inline std::vector<double> fd_gradient(const std::function<double(std::span<const double>)>& f,
                                       std::span<const double> x, double h = kFdStep) {
  std::vector<double> point(x.begin(), x.end());
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double orig = point[i];
    point[i] = orig + h;
    double fp = f(point);
    point[i] = orig - h;
    double fm = f(point);
    point[i] = orig;
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

// Relative error with an absolute floor so near-zero entries compare on an
// absolute scale.
inline double rel_err(double got, double want, double floor_scale = 1e-2) {
  return std::abs(got - want) / std::max({std::abs(got), std::abs(want), floor_scale});
}

inline double max_grad_rel_err(std::span<const double> got, std::span<const double> want) {
  double worst = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) worst = std::max(worst, rel_err(got[i], want[i]));
  return worst;
}

// Isotropic quadratic energy f0(x) = -0.5 ||x||^2 in any dimension, with
// closed-form gradients and score-matching terms. No free parameters; theta is
// a dummy scalar so the interface stays uniform.
class QuadraticModel : public UnnormalizedModel {
 public:
  explicit QuadraticModel(std::size_t dim, double sign = -1.0) : dim_(dim), sign_(sign) {
    layout_.add("theta", 1);
  }
  std::size_t dim() const override { return dim_; }
  const ParamLayout& layout() const override { return layout_; }
  double log_unnorm(std::span<const double> x, const ParamVector&) const override {
    double s = 0.0;
    for (double v : x) s += v * v;
    return 0.5 * sign_ * s;
  }
  void grad_theta(std::span<const double>, const ParamVector&, ParamVector& out) const override {
    out[0] = 0.0;
  }
  void grad_x(std::span<const double> x, const ParamVector&,
              std::span<double> out) const override {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = sign_ * x[i];
  }
  double score_matching_point(std::span<const double> x, const ParamVector&, ParamVector*,
                              double) const override {
    double s = 0.0;
    for (double v : x) s += v * v;
    return 0.5 * s + sign_ * static_cast<double>(dim_);
  }

 private:
  std::size_t dim_;
  double sign_;
  ParamLayout layout_;
};

// Constant energy; zero score everywhere.
class ConstEnergyModel : public UnnormalizedModel {
 public:
  explicit ConstEnergyModel(std::size_t dim, double value = 0.7) : dim_(dim), value_(value) {
    layout_.add("theta", 1);
  }
  std::size_t dim() const override { return dim_; }
  const ParamLayout& layout() const override { return layout_; }
  double log_unnorm(std::span<const double>, const ParamVector&) const override { return value_; }
  void grad_theta(std::span<const double>, const ParamVector&, ParamVector& out) const override {
    out[0] = 0.0;
  }
  void grad_x(std::span<const double> x, const ParamVector&,
              std::span<double> out) const override {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = 0.0;
  }
  double score_matching_point(std::span<const double>, const ParamVector&, ParamVector*,
                              double) const override {
    return 0.0;
  }

 private:
  std::size_t dim_;
  double value_;
  ParamLayout layout_;
};

}  // namespace meco::testing

#pragma once

#include <vector>

#include "meco/dense_array.hpp"

namespace meco {

// Gaussian RBF kernel two-sample statistic. bandwidth <= 0 selects the median
// heuristic: the exact lower median of all pairwise distances on the pooled
// set (deterministic selection, no subsampling).
struct MmdConfig {
  double bandwidth = -1.0;
  bool unbiased = false;
};

double median_heuristic_bandwidth(const DenseArray& x, const DenseArray& y);

// Biased: mean k(x,x') + mean k(y,y') - 2 mean k(x,y); unbiased excludes the
// within-set diagonals (needs >= 2 points per batch). Fixed summation order so
// results are bit-reproducible.
double mmd2(const DenseArray& x, const DenseArray& y, const MmdConfig& config = {});

// Moments of a fitted Gaussian, the 2-D stand-in for feature statistics.
struct GaussianSummary {
  std::vector<double> mean;
  DenseArray cov;
};

GaussianSummary fit_summary(const DenseArray& x);

// ||mu_a - mu_b||^2 + tr(Sa + Sb - 2 (Sa Sb)^{1/2}), with the matrix square
// root taken through an eigendecomposition of the symmetrized product.
// Eigenvalues below -1e-10 raise input_error; small negatives clip to zero.
double frechet2(const GaussianSummary& a, const GaussianSummary& b);

// Squared Euclidean distance between parameter vectors.
double mse_theta(std::span<const double> theta, std::span<const double> theta_star);

}  // namespace meco

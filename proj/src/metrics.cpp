#include "meco/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "meco/errors.hpp"
#include "meco/numerics.hpp"

namespace meco {

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += sq(a[j] - b[j]);
  return s;
}

// Cyclic Jacobi eigensolver for small symmetric matrices. Returns eigenvalues;
// vectors (columns of V) only if requested.
std::vector<double> sym_eig(const DenseArray& m, DenseArray* vectors) {
  const std::size_t d = m.rows();
  DenseArray a = m;
  DenseArray v({d, d});
  for (std::size_t i = 0; i < d; ++i) v.at(i, i) = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < d; ++p)
      for (std::size_t q = p + 1; q < d; ++q) off += sq(a.at(p, q));
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < d; ++p) {
      for (std::size_t q = p + 1; q < d; ++q) {
        if (std::abs(a.at(p, q)) < 1e-300) continue;
        double phi = 0.5 * std::atan2(2.0 * a.at(p, q), a.at(q, q) - a.at(p, p));
        double c = std::cos(phi), s = std::sin(phi);
        for (std::size_t k = 0; k < d; ++k) {
          double akp = a.at(k, p), akq = a.at(k, q);
          a.at(k, p) = c * akp - s * akq;
          a.at(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < d; ++k) {
          double apk = a.at(p, k), aqk = a.at(q, k);
          a.at(p, k) = c * apk - s * aqk;
          a.at(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < d; ++k) {
          double vkp = v.at(k, p), vkq = v.at(k, q);
          v.at(k, p) = c * vkp - s * vkq;
          v.at(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<double> eig(d);
  for (std::size_t i = 0; i < d; ++i) eig[i] = a.at(i, i);
  if (vectors) *vectors = std::move(v);
  return eig;
}

// Validate the PSD contract: reject eigenvalues below -1e-10, clip the rest.
std::vector<double> psd_eigenvalues(const DenseArray& cov, const char* which) {
  auto eig = sym_eig(cov, nullptr);
  for (auto& e : eig) {
    if (e < -1e-10)
      throw input_error(std::string("frechet2: covariance ") + which +
                        " has negative eigenvalue " + std::to_string(e));
    e = std::max(e, 0.0);
  }
  return eig;
}

}  // namespace

double median_heuristic_bandwidth(const DenseArray& x, const DenseArray& y) {
  const std::size_t n = x.rows(), m = y.rows(), total = n + m;
  require(total >= 2, "median_heuristic_bandwidth: need at least two pooled points");
  auto point = [&](std::size_t i) { return i < n ? x.row(i) : y.row(i - n); };
  std::vector<double> d2;
  d2.reserve(total * (total - 1) / 2);
  for (std::size_t i = 0; i < total; ++i)
    for (std::size_t j = i + 1; j < total; ++j) d2.push_back(sq_dist(point(i), point(j)));
  // lower median; sqrt after selection (monotone)
  auto mid = d2.begin() + static_cast<std::ptrdiff_t>((d2.size() - 1) / 2);
  std::nth_element(d2.begin(), mid, d2.end());
  return std::max(std::sqrt(*mid), 1e-12);
}

double mmd2(const DenseArray& x, const DenseArray& y, const MmdConfig& config) {
  require(x.rows() > 0 && y.rows() > 0, "mmd2: batches must be non-empty");
  require(x.cols() == y.cols(), "mmd2: dimension mismatch");
  const std::size_t n = x.rows(), m = y.rows();
  if (config.unbiased)
    require(n >= 2 && m >= 2, "mmd2: unbiased estimator needs at least 2 points per batch");

  const double sigma =
      config.bandwidth > 0.0 ? config.bandwidth : median_heuristic_bandwidth(x, y);
  const double scale = -1.0 / (2.0 * sigma * sigma);

  double kxx = 0.0, kyy = 0.0, kxy = 0.0;
  if (config.unbiased) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) kxx += std::exp(scale * sq_dist(x.row(i), x.row(j)));
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j)
        if (i != j) kyy += std::exp(scale * sq_dist(y.row(i), y.row(j)));
    kxx /= static_cast<double>(n) * static_cast<double>(n - 1);
    kyy /= static_cast<double>(m) * static_cast<double>(m - 1);
  } else {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) kxx += std::exp(scale * sq_dist(x.row(i), x.row(j)));
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) kyy += std::exp(scale * sq_dist(y.row(i), y.row(j)));
    kxx /= static_cast<double>(n) * static_cast<double>(n);
    kyy /= static_cast<double>(m) * static_cast<double>(m);
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) kxy += std::exp(scale * sq_dist(x.row(i), y.row(j)));
  kxy /= static_cast<double>(n) * static_cast<double>(m);
  return kxx + kyy - 2.0 * kxy;
}

GaussianSummary fit_summary(const DenseArray& x) {
  const std::size_t n = x.rows(), d = x.cols();
  require(n >= 2, "fit_summary: need at least two points");
  GaussianSummary s;
  s.mean.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = x.row(i);
    for (std::size_t j = 0; j < d; ++j) s.mean[j] += row[j];
  }
  for (auto& v : s.mean) v /= static_cast<double>(n);
  s.cov = DenseArray({d, d});
  for (std::size_t i = 0; i < n; ++i) {
    auto row = x.row(i);
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b)
        s.cov.at(a, b) += (row[a] - s.mean[a]) * (row[b] - s.mean[b]);
  }
  for (auto& v : s.cov.flat()) v /= static_cast<double>(n - 1);
  return s;
}

double frechet2(const GaussianSummary& a, const GaussianSummary& b) {
  const std::size_t d = a.mean.size();
  require(b.mean.size() == d, "frechet2: dimension mismatch");
  psd_eigenvalues(a.cov, "a");
  psd_eigenvalues(b.cov, "b");

  // sqrt(A) via eigendecomposition, then eigenvalues of sym(sqrt(A) B sqrt(A))
  DenseArray va({d, d});
  auto ea = sym_eig(a.cov, &va);
  for (auto& e : ea) e = std::sqrt(std::max(e, 0.0));
  DenseArray sqrt_a({d, d});
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += va.at(i, k) * ea[k] * va.at(j, k);
      sqrt_a.at(i, j) = s;
    }
  DenseArray tmp({d, d}), prod({d, d});
  gemm(sqrt_a.data(), d, d, b.cov.data(), d, tmp.data(), false);
  gemm(tmp.data(), d, d, sqrt_a.data(), d, prod.data(), false);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i + 1; j < d; ++j) {
      double s = 0.5 * (prod.at(i, j) + prod.at(j, i));
      prod.at(i, j) = prod.at(j, i) = s;
    }
  auto ep = sym_eig(prod, nullptr);
  double tr_sqrt = 0.0;
  for (double e : ep) {
    if (e < -1e-10) throw input_error("frechet2: product matrix has negative eigenvalue");
    tr_sqrt += std::sqrt(std::max(e, 0.0));
  }
  double dist = 0.0;
  for (std::size_t j = 0; j < d; ++j) dist += sq(a.mean[j] - b.mean[j]);
  for (std::size_t j = 0; j < d; ++j) dist += a.cov.at(j, j) + b.cov.at(j, j);
  return dist - 2.0 * tr_sqrt;
}

double mse_theta(std::span<const double> theta, std::span<const double> theta_star) {
  require(theta.size() == theta_star.size(), "mse_theta: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) s += sq(theta[i] - theta_star[i]);
  return s;
}

}  // namespace meco

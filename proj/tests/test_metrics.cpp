#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "meco/metrics.hpp"
#include "meco/numerics.hpp"
#include "meco/rng.hpp"
#include "support.hpp"

using namespace meco;

namespace {

DenseArray random_batch(std::size_t n, std::size_t d, RngStream& rng, double scale = 1.0) {
  DenseArray out({n, d});
  for (auto& v : out.flat()) v = scale * rng.normal();
  return out;
}

// independent double-loop oracle
double mmd2_bruteforce(const DenseArray& x, const DenseArray& y, double sigma, bool unbiased) {
  auto k = [&](std::span<const double> a, std::span<const double> b) {
    double d2 = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) d2 += sq(a[j] - b[j]);
    return std::exp(-d2 / (2.0 * sigma * sigma));
  };
  const auto n = static_cast<double>(x.rows()), m = static_cast<double>(y.rows());
  double kxx = 0, kyy = 0, kxy = 0;
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.rows(); ++j)
      if (!unbiased || i != j) kxx += k(x.row(i), x.row(j));
  for (std::size_t i = 0; i < y.rows(); ++i)
    for (std::size_t j = 0; j < y.rows(); ++j)
      if (!unbiased || i != j) kyy += k(y.row(i), y.row(j));
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < y.rows(); ++j) kxy += k(x.row(i), y.row(j));
  kxx /= unbiased ? n * (n - 1) : n * n;
  kyy /= unbiased ? m * (m - 1) : m * m;
  return kxx + kyy - 2.0 * kxy / (n * m);
}

// closed form for 2x2 SPD pairs: tr sqrt(AB) = sqrt(tr(AB) + 2 sqrt(det A det B))
double frechet2_closed_form_2x2(const GaussianSummary& a, const GaussianSummary& b) {
  double dmu = sq(a.mean[0] - b.mean[0]) + sq(a.mean[1] - b.mean[1]);
  double tr_ab = 0.0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) tr_ab += a.cov.at(i, j) * b.cov.at(j, i);
  double det_a = a.cov.at(0, 0) * a.cov.at(1, 1) - a.cov.at(0, 1) * a.cov.at(1, 0);
  double det_b = b.cov.at(0, 0) * b.cov.at(1, 1) - b.cov.at(0, 1) * b.cov.at(1, 0);
  double tr_sqrt = std::sqrt(std::max(0.0, tr_ab + 2.0 * std::sqrt(std::max(0.0, det_a * det_b))));
  return dmu + a.cov.at(0, 0) + a.cov.at(1, 1) + b.cov.at(0, 0) + b.cov.at(1, 1) - 2.0 * tr_sqrt;
}

GaussianSummary summary(std::vector<double> mean, std::vector<double> cov) {
  GaussianSummary s;
  s.mean = std::move(mean);
  s.cov = DenseArray({2, 2}, std::move(cov));
  return s;
}

}  // namespace

TEST_CASE("mmd2: identical multisets give exactly zero (biased)") {
  RngStream rng(5);
  DenseArray x = random_batch(17, 2, rng);
  MmdConfig cfg;
  cfg.bandwidth = 0.7;
  CHECK(mmd2(x, x, cfg) == 0.0);
}

TEST_CASE("mmd2: two singletons, unit bandwidth") {
  DenseArray x({1, 1}, {0.0}), y({1, 1}, {1.0});
  MmdConfig cfg;
  cfg.bandwidth = 1.0;
  CHECK(mmd2(x, y, cfg) == doctest::Approx(2.0 - 2.0 * std::exp(-0.5)).epsilon(1e-9));
  CHECK(mmd2(x, y, cfg) == doctest::Approx(0.7869387).epsilon(1e-6));
}

TEST_CASE("mmd2: matches the brute-force oracle on 50 random instances") {
  RngStream rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    DenseArray x = random_batch(20, 2, rng);
    DenseArray y = random_batch(20, 2, rng, 1.3);
    double sigma = 0.5 + rng.uniform();
    MmdConfig cfg;
    cfg.bandwidth = sigma;
    CHECK(std::abs(mmd2(x, y, cfg) - mmd2_bruteforce(x, y, sigma, false)) < 1e-12);
    cfg.unbiased = true;
    CHECK(std::abs(mmd2(x, y, cfg) - mmd2_bruteforce(x, y, sigma, true)) < 1e-12);
  }
}

TEST_CASE("mmd2: unbiased estimator needs two points per batch") {
  DenseArray x({1, 1}, {0.0}), y({3, 1}, {1.0, 2.0, 3.0});
  MmdConfig cfg;
  cfg.unbiased = true;
  CHECK_THROWS_AS(mmd2(x, y, cfg), contract_error);
}

TEST_CASE("mmd2: biased estimator is non-negative and permutation invariant") {
  RngStream rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    DenseArray x = random_batch(15, 2, rng);
    DenseArray y = random_batch(12, 2, rng, 0.8);
    MmdConfig cfg;
    cfg.bandwidth = 1.0;
    double base = mmd2(x, y, cfg);
    CHECK(base >= 0.0);
    // reverse the rows of x
    DenseArray xr({15, 2});
    for (std::size_t i = 0; i < 15; ++i)
      std::copy(x.row(14 - i).begin(), x.row(14 - i).end(), xr.row(i).begin());
    CHECK(std::abs(mmd2(xr, y, cfg) - base) < 1e-12);
  }
}

TEST_CASE("median heuristic: deterministic, exact selection") {
  RngStream rng(9);
  DenseArray x = random_batch(40, 2, rng);
  DenseArray y = random_batch(30, 2, rng);
  double b1 = median_heuristic_bandwidth(x, y);
  double b2 = median_heuristic_bandwidth(x, y);
  CHECK(b1 == b2);
  // sort-based oracle: lower median of all pooled pairwise distances
  std::vector<double> dists;
  auto point = [&](std::size_t i) { return i < 40 ? x.row(i) : y.row(i - 40); };
  for (std::size_t i = 0; i < 70; ++i)
    for (std::size_t j = i + 1; j < 70; ++j) {
      double d2 = 0.0;
      for (std::size_t c = 0; c < 2; ++c) d2 += sq(point(i)[c] - point(j)[c]);
      dists.push_back(std::sqrt(d2));
    }
  std::sort(dists.begin(), dists.end());
  CHECK(b1 == doctest::Approx(dists[(dists.size() - 1) / 2]).epsilon(1e-14));
}

TEST_CASE("frechet2: identity and mean-shift cases") {
  auto a = summary({0.0, 0.0}, {1.0, 0.2, 0.2, 2.0});
  CHECK(frechet2(a, a) == doctest::Approx(0.0).epsilon(1e-10));
  auto b = summary({3.0, -4.0}, {1.0, 0.2, 0.2, 2.0});
  CHECK(frechet2(a, b) == doctest::Approx(25.0).epsilon(1e-10));
}

TEST_CASE("frechet2: commuting diagonal closed form") {
  auto a = summary({0.0, 0.0}, {1.0, 0.0, 0.0, 1.0});
  auto b = summary({0.0, 0.0}, {4.0, 0.0, 0.0, 4.0});
  CHECK(frechet2(a, b) == doctest::Approx(2.0).epsilon(1e-10));
  RngStream rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    double a1 = 0.2 + rng.uniform(), a2 = 0.2 + rng.uniform();
    double b1 = 0.2 + rng.uniform(), b2 = 0.2 + rng.uniform();
    auto sa = summary({0.0, 0.0}, {a1, 0.0, 0.0, a2});
    auto sb = summary({0.0, 0.0}, {b1, 0.0, 0.0, b2});
    double want = sq(std::sqrt(a1) - std::sqrt(b1)) + sq(std::sqrt(a2) - std::sqrt(b2));
    CHECK(frechet2(sa, sb) == doctest::Approx(want).epsilon(1e-10));
  }
}

TEST_CASE("frechet2: matches the 2x2 closed form on random SPD pairs") {
  RngStream rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    auto rand_spd = [&]() {
      double l11 = 0.3 + rng.uniform(), l21 = rng.normal() * 0.4, l22 = 0.3 + rng.uniform();
      return std::vector<double>{l11 * l11, l11 * l21, l11 * l21, l21 * l21 + l22 * l22};
    };
    auto a = summary({rng.normal(), rng.normal()}, rand_spd());
    auto b = summary({rng.normal(), rng.normal()}, rand_spd());
    double got = frechet2(a, b);
    double want = frechet2_closed_form_2x2(a, b);
    CHECK(std::abs(got - want) < 1e-10);
    // symmetry in the arguments
    CHECK(std::abs(frechet2(b, a) - got) < 1e-10);
    if (trial > 0) CHECK(got > 0.0);
  }
}

TEST_CASE("frechet2: negative eigenvalue beyond tolerance is an input error") {
  auto a = summary({0.0, 0.0}, {1.0, 0.0, 0.0, -0.5});
  auto b = summary({0.0, 0.0}, {1.0, 0.0, 0.0, 1.0});
  CHECK_THROWS_AS(frechet2(a, b), input_error);
  // tiny negatives clip to zero
  auto c = summary({0.0, 0.0}, {1.0, 0.0, 0.0, -1e-12});
  CHECK(std::isfinite(frechet2(c, b)));
}

TEST_CASE("fit_summary: moments of a known cloud") {
  DenseArray pts({4, 2}, {0, 0, 2, 0, 0, 2, 2, 2});
  auto s = fit_summary(pts);
  CHECK(s.mean[0] == doctest::Approx(1.0));
  CHECK(s.mean[1] == doctest::Approx(1.0));
  CHECK(s.cov.at(0, 0) == doctest::Approx(4.0 / 3.0));
  CHECK(s.cov.at(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("mse_theta: examples and symmetry") {
  double a[1] = {0.0}, b[1] = {16.0};
  CHECK(mse_theta(a, a) == 0.0);
  CHECK(mse_theta(a, b) == doctest::Approx(256.0));
  CHECK(mse_theta(a, b) == mse_theta(b, a));
  double u[2] = {1.0, 2.0}, v[2] = {4.0, 6.0};
  CHECK(mse_theta(u, v) == doctest::Approx(25.0));
  double w[3] = {0, 0, 0};
  CHECK_THROWS_AS(mse_theta(u, w), contract_error);
}

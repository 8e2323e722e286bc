#include "meco/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "meco/errors.hpp"
#include "meco/rng.hpp"

namespace meco {

namespace {

constexpr double kPi = std::numbers::pi;

// All 2-D generators land in [-4, 4]^2; points are clamped to that box so the
// documented bound is exact and density grids always cover the data.
void clamp_box(DenseArray& x) {
  for (auto& v : x.flat()) v = std::clamp(v, -4.0, 4.0);
}

// Two interleaved arms: t = 3*pi*sqrt(u), arm = +-(-t cos t, t sin t)/3 with
// uniform radial smear and N(0, 0.1^2) jitter.
DenseArray two_spirals(long n, double noise, RngStream& rng) {
  DenseArray out({static_cast<std::size_t>(n), 2});
  for (long i = 0; i < n; ++i) {
    double t = 3.0 * kPi * std::sqrt(rng.uniform());
    double x = -std::cos(t) * t + rng.uniform() * 0.5;
    double y = std::sin(t) * t + rng.uniform() * 0.5;
    double sign = (i % 2 == 0) ? 1.0 : -1.0;
    out.at(i, 0) = sign * x / 3.0 + noise * rng.normal();
    out.at(i, 1) = sign * y / 3.0 + noise * rng.normal();
  }
  return out;
}

// Eight modes on the radius-2 octagon, isotropic std `noise` around each.
DenseArray eight_gaussians(long n, double noise, RngStream& rng) {
  DenseArray out({static_cast<std::size_t>(n), 2});
  for (long i = 0; i < n; ++i) {
    auto k = static_cast<double>(rng.uniform_index(8));
    double cx = 2.0 * std::cos(k * kPi / 4.0);
    double cy = 2.0 * std::sin(k * kPi / 4.0);
    out.at(i, 0) = cx + noise * rng.normal();
    out.at(i, 1) = cy + noise * rng.normal();
  }
  return out;
}

// Stratified uniform draws over the 8 dark cells of a 4x4 board on [-4, 4]^2.
DenseArray checkerboard(long n, RngStream& rng) {
  int cells[8][2];
  int c = 0;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      if ((i + j) % 2 == 0) {
        cells[c][0] = i;
        cells[c][1] = j;
        ++c;
      }
  DenseArray out({static_cast<std::size_t>(n), 2});
  for (long i = 0; i < n; ++i) {
    const auto& cell = cells[i % 8];
    out.at(i, 0) = -4.0 + 2.0 * cell[0] + 2.0 * rng.uniform();
    out.at(i, 1) = -4.0 + 2.0 * cell[1] + 2.0 * rng.uniform();
  }
  return out;
}

// Concentric circles, radii 3 and 1.5, gaussian jitter.
DenseArray circles(long n, double noise, RngStream& rng) {
  DenseArray out({static_cast<std::size_t>(n), 2});
  const long outer = (n + 1) / 2;
  for (long i = 0; i < n; ++i) {
    double r = i < outer ? 3.0 : 1.5;
    double t = 2.0 * kPi * rng.uniform();
    out.at(i, 0) = r * std::cos(t) + noise * rng.normal();
    out.at(i, 1) = r * std::sin(t) + noise * rng.normal();
  }
  return out;
}

// Interleaved half-moons, centered then doubled.
DenseArray moons(long n, double noise, RngStream& rng) {
  DenseArray out({static_cast<std::size_t>(n), 2});
  const long outer = (n + 1) / 2;
  for (long i = 0; i < n; ++i) {
    double t = kPi * rng.uniform();
    double x, y;
    if (i < outer) {
      x = std::cos(t);
      y = std::sin(t);
    } else {
      x = 1.0 - std::cos(t);
      y = 0.5 - std::sin(t);
    }
    out.at(i, 0) = 2.0 * (x - 0.5 + noise * rng.normal());
    out.at(i, 1) = 2.0 * (y - 0.25 + noise * rng.normal());
  }
  return out;
}

// 2-D projection of the swiss roll: t = 1.5*pi*(1 + 2u), (t cos t, t sin t)
// plus jitter, divided by 5.
DenseArray swissroll(long n, double noise, RngStream& rng) {
  DenseArray out({static_cast<std::size_t>(n), 2});
  for (long i = 0; i < n; ++i) {
    double t = 1.5 * kPi * (1.0 + 2.0 * rng.uniform());
    out.at(i, 0) = (t * std::cos(t) + noise * rng.normal()) / 5.0;
    out.at(i, 1) = (t * std::sin(t) + noise * rng.normal()) / 5.0;
  }
  return out;
}

}  // namespace

DenseArray generate(const DatasetSpec& spec) {
  require(spec.n > 0, "generate: n must be positive");
  RngStream rng(spec.seed, 0x5D47A1);
  DenseArray out;
  double noise = spec.noise;
  if (spec.name == "2spirals") {
    out = two_spirals(spec.n, noise < 0 ? 0.1 : noise, rng);
  } else if (spec.name == "8gaussians") {
    out = eight_gaussians(spec.n, noise < 0 ? 0.25 : noise, rng);
  } else if (spec.name == "checkerboard") {
    out = checkerboard(spec.n, rng);
  } else if (spec.name == "circles") {
    out = circles(spec.n, noise < 0 ? 0.24 : noise, rng);
  } else if (spec.name == "moons") {
    out = moons(spec.n, noise < 0 ? 0.1 : noise, rng);
  } else if (spec.name == "swissroll") {
    out = swissroll(spec.n, noise < 0 ? 1.0 : noise, rng);
  } else if (spec.name == "gaussian1d") {
    out = DenseArray({static_cast<std::size_t>(spec.n), 1});
    for (long i = 0; i < spec.n; ++i) out[i] = spec.theta_star + rng.normal();
  } else {
    throw config_error("unknown dataset: " + spec.name);
  }
  if (spec.scale != 1.0)
    for (auto& v : out.flat()) v *= spec.scale;
  if (spec.name != "gaussian1d") clamp_box(out);
  return out;
}

void write_points_csv(const std::string& path, const DenseArray& points,
                      const std::string& hash_comment) {
  std::ofstream f(path);
  if (!f) throw input_error("cannot open for writing: " + path);
  if (!hash_comment.empty()) f << "# " << hash_comment << "\n";
  f << (points.cols() == 1 ? "x" : "x,y") << "\n";
  char buf[64];
  for (std::size_t i = 0; i < points.rows(); ++i) {
    auto row = points.row(i);
    for (std::size_t j = 0; j < points.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", row[j]);
      f << (j ? "," : "") << buf;
    }
    f << "\n";
  }
}

}  // namespace meco

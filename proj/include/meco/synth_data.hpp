#pragma once

#include <cstdint>
#include <string>

#include "meco/dense_array.hpp"

namespace meco {

// Seeded generator specs for the 2-D toy distributions and the 1-D Gaussian.
// Recognized names: 2spirals, 8gaussians, checkerboard, circles, moons,
// swissroll, gaussian1d. The 2-D parametrizations follow the common EBM
// toy-data conventions and land roughly inside [-4, 4]^2; exact formulas are
// documented next to each generator.
struct DatasetSpec {
  std::string name;
  long n = 0;
  std::uint64_t seed = 0;
  double scale = 1.0;        // global multiplier on the documented parametrization
  double noise = -1.0;       // per-dataset jitter; < 0 means the documented default
  double theta_star = 16.0;  // gaussian1d mean
};

DenseArray generate(const DatasetSpec& spec);

// CSV export with header row (x,y or x).
void write_points_csv(const std::string& path, const DenseArray& points,
                      const std::string& hash_comment = "");

}  // namespace meco

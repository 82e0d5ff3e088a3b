#pragma once

#include <cmath>

#include "semisup/data/dataset.hpp"

namespace semisup::data {

// Two interleaved half circles with gaussian jitter, n/2 points each,
// classes alternating along the row index. Class 0 sits on the unit upper
// half circle around (0,0); class 1 on the lower half circle around (1,0.5).
inline Dataset make_two_moons(std::size_t n, double noise_sigma, std::uint64_t seed) {
  if (n < 2 || n % 2 != 0)
    throw ValueError("make_two_moons: n must be even and >= 2, got " + std::to_string(n));
  if (noise_sigma < 0.0) throw ValueError("make_two_moons: noise_sigma must be >= 0");
  RandomSource root(seed);
  auto angles = root.substream("two_moons.angles");
  auto jitter = root.substream("two_moons.jitter");

  std::vector<double> xy(n * 2);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int cls = static_cast<int>(i % 2);
    const double t = 3.14159265358979323846 * angles.uniform01();
    double x, y;
    if (cls == 0) {
      x = std::cos(t);
      y = std::sin(t);
    } else {
      x = 1.0 - std::cos(t);
      y = 0.5 - std::sin(t);
    }
    double jx = 0.0, jy = 0.0;
    if (noise_sigma > 0.0) jitter.gaussian_pair(noise_sigma, jx, jy);
    xy[i * 2] = x + jx;
    xy[i * 2 + 1] = y + jy;
    labels[i] = cls;
  }
  Dataset ds;
  ds.examples = Tensor<double>::from_vec(Shape{n, 2}, std::move(xy));
  ds.labels = std::move(labels);
  ds.class_count = 2;
  return ds;
}

}  // namespace semisup::data

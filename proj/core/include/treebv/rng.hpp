#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <random>

namespace treebv {

inline std::mt19937_64 make_engine(std::uint64_t seed) { return std::mt19937_64{seed}; }

/// Standard Gaussian vector.
inline Eigen::VectorXd gaussian_vector(std::mt19937_64& rng, int dim) {
  std::normal_distribution<double> normal;
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v[i] = normal(rng);
  return v;
}

/// Uniform point on the unit sphere of R^dim.
inline Eigen::VectorXd unit_vector(std::mt19937_64& rng, int dim) {
  Eigen::VectorXd v;
  double n = 0.0;
  do {
    v = gaussian_vector(rng, dim);
    n = v.norm();
  } while (n < 1e-12);
  return v / n;
}

}  // namespace treebv

#pragma once

#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "spheat/analytic.hpp"
#include "spheat/fem.hpp"
#include "spheat/grid.hpp"

namespace testing {

using spheat::Vector;

// h = 1/4, tau = 1/8 on (0,1) x (0,3/2).
inline spheat::SpaceTimeGrid coarse_grid() {
  return spheat::build_grid(0, 1, 1.5, 3, spheat::equidistant_times(1.5, 12));
}

inline spheat::ControlRegion coarse_region() { return {0.25, 0.75, 0.25, 1.25}; }

inline spheat::DiscreteSystem coarse_system(spheat::Scheme s) {
  return spheat::assemble_system(s, coarse_grid(), coarse_region());
}

inline Vector coarse_desired(const spheat::SpaceTimeGrid& g) {
  return spheat::sample_fourier_state(g, spheat::PointSource{}).values;
}

inline Vector random_vector(std::mt19937& rng, Eigen::Index n, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = u(rng);
  return v;
}

inline Eigen::MatrixXd dense(const spheat::SparseMatrix& m) { return Eigen::MatrixXd(m); }

inline double rel(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace testing

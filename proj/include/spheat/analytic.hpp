#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <utility>

#include "spheat/fem.hpp"

namespace spheat {

/// Weighted space-time Dirac source weight * delta_{(x0, t0)}.
struct PointSource {
  double x0 = 0.5;
  double t0 = 0.5;
  double weight = 1.0;
};

/// Desired state coefficients on the dual time grid, stored in state layout
/// (value for node j on interval I_k at index (k-1)*Nh + j).
struct DesiredState {
  std::size_t num_nodes = 0;
  std::size_t num_steps = 0;
  Vector values;

  double at(std::size_t j, std::size_t k) const { return values[(k - 1) * num_nodes + j]; }
};

class NonFiniteSampleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

constexpr std::size_t kDefaultFourierTerms = 200;
constexpr double kFourierTailTol = 1e-14;

/// Upper bound of sum_{n>N} 2 exp(-n^2 pi^2 dt).
double fourier_tail_bound(std::size_t N, double dt);
/// Smallest N whose tail bound drops below tol.
std::size_t fourier_terms_needed(double dt, double tol = kFourierTailTol);

/// Heat solution on (0,1) with homogeneous Dirichlet data for the source
/// weight * delta_{(x0,t0)}, truncated at n_terms or once the tail bound
/// falls below 1e-14.
double fourier_heat_dirac(const PointSource& src, double x, double t,
                          std::size_t n_terms = kDefaultFourierTerms);

/// y_d[j][k] = field(x_j, (t_{k-1}+t_k)/2).
DesiredState sample_desired_state(const SpaceTimeGrid& grid,
                                  const std::function<double(double, double)>& field);

/// Separable sampler of fourier_heat_dirac at the dual-grid midpoints. The
/// term cap is raised to what the tail bound needs at the smallest sampled
/// time offset when n_terms is too small.
DesiredState sample_fourier_state(const SpaceTimeGrid& grid, const PointSource& src,
                                  std::size_t n_terms = kDefaultFourierTerms);

/// Term cap actually used by sample_fourier_state.
std::size_t effective_fourier_terms(const SpaceTimeGrid& grid, const PointSource& src,
                                    std::size_t n_terms);

/// Returns (w, L w) with L w = -w_t - w_xx for
/// w = -abar ((t-1/2)^2-1)^2 ((2x-1)^2-1)^2.
std::pair<double, double> manufactured_adjoint(double abar, double x, double t);

/// y_true - |Lw|^{p-2} Lw sampled at the dual-grid midpoints.
DesiredState manufactured_desired_state(const SpaceTimeGrid& grid, double abar,
                                        const PointSource& src, double p,
                                        std::size_t n_terms = kDefaultFourierTerms);

}  // namespace spheat

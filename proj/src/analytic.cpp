#include "spheat/analytic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace spheat {

namespace {

constexpr double kPi = std::numbers::pi;

void require_unit_interval(const SpaceTimeGrid& grid) {
  if (grid.a() != 0.0 || grid.b() != 1.0) {
    throw std::invalid_argument("the Fourier heat solution is only available on (0,1)");
  }
}

}  // namespace

double fourier_tail_bound(std::size_t N, double dt) {
  const double n1 = static_cast<double>(N + 1);
  const double ratio = std::exp(-(2.0 * n1 + 1.0) * kPi * kPi * dt);
  return 2.0 * std::exp(-n1 * n1 * kPi * kPi * dt) / (1.0 - ratio);
}

std::size_t fourier_terms_needed(double dt, double tol) {
  if (!(dt > 0)) throw std::invalid_argument("time offset must be positive");
  std::size_t n = 1;
  while (fourier_tail_bound(n, dt) >= tol) ++n;
  return n;
}

double fourier_heat_dirac(const PointSource& src, double x, double t, std::size_t n_terms) {
  if (n_terms == 0) throw std::invalid_argument("n_terms must be at least 1");
  if (!(t > src.t0)) return 0.0;
  const double dt = t - src.t0;
  double sum = 0;
  for (std::size_t n = 1; n <= n_terms; ++n) {
    const double nn = static_cast<double>(n);
    sum += 2.0 * std::sin(nn * kPi * src.x0) * std::sin(nn * kPi * x) *
           std::exp(-nn * nn * kPi * kPi * dt);
    if (fourier_tail_bound(n, dt) < kFourierTailTol) break;
  }
  return src.weight * sum;
}

DesiredState sample_desired_state(const SpaceTimeGrid& grid,
                                  const std::function<double(double, double)>& field) {
  const std::size_t nh = grid.num_nodes();
  DesiredState yd{nh, grid.num_steps(), Vector(static_cast<Eigen::Index>(grid.num_spacetime()))};
  for (std::size_t k = 1; k <= grid.num_steps(); ++k) {
    const double tm = grid.midpoint(k);
    for (std::size_t j = 0; j < nh; ++j) {
      const double v = field(grid.node(j), tm);
      if (!std::isfinite(v)) {
        std::ostringstream os;
        os << "non-finite desired-state sample at (j,k) = (" << j + 1 << "," << k << ")";
        throw NonFiniteSampleError(os.str());
      }
      yd.values[(k - 1) * nh + j] = v;
    }
  }
  return yd;
}

std::size_t effective_fourier_terms(const SpaceTimeGrid& grid, const PointSource& src,
                                    std::size_t n_terms) {
  double dt_min = 0;
  for (std::size_t k = 1; k <= grid.num_steps(); ++k) {
    const double dt = grid.midpoint(k) - src.t0;
    if (dt > 0) {
      dt_min = dt;
      break;
    }
  }
  if (dt_min == 0) return n_terms;
  return std::max(n_terms, fourier_terms_needed(dt_min));
}

DesiredState sample_fourier_state(const SpaceTimeGrid& grid, const PointSource& src,
                                  std::size_t n_terms) {
  require_unit_interval(grid);
  if (n_terms == 0) throw std::invalid_argument("n_terms must be at least 1");
  const std::size_t cap = effective_fourier_terms(grid, src, n_terms);
  const std::size_t nh = grid.num_nodes();

  // S(j, n-1) = 2 sin(n pi x0) sin(n pi x_j)
  Eigen::MatrixXd S(static_cast<Eigen::Index>(nh), static_cast<Eigen::Index>(cap));
  for (std::size_t n = 1; n <= cap; ++n) {
    const double s0 = 2.0 * std::sin(static_cast<double>(n) * kPi * src.x0);
    for (std::size_t j = 0; j < nh; ++j) {
      S(j, n - 1) = s0 * std::sin(static_cast<double>(n) * kPi * grid.node(j));
    }
  }

  DesiredState yd{nh, grid.num_steps(),
                  Vector::Zero(static_cast<Eigen::Index>(grid.num_spacetime()))};
  Vector e(static_cast<Eigen::Index>(cap));
  for (std::size_t k = 1; k <= grid.num_steps(); ++k) {
    const double dt = grid.midpoint(k) - src.t0;
    if (!(dt > 0)) continue;
    std::size_t nmax = 0;
    for (std::size_t n = 1; n <= cap; ++n) {
      const double nn = static_cast<double>(n);
      e[n - 1] = std::exp(-nn * nn * kPi * kPi * dt);
      nmax = n;
      if (fourier_tail_bound(n, dt) < kFourierTailTol) break;
    }
    const auto m = static_cast<Eigen::Index>(nmax);
    yd.values.segment(static_cast<Eigen::Index>((k - 1) * nh), static_cast<Eigen::Index>(nh)) =
        src.weight * (S.leftCols(m) * e.head(m));
  }
  return yd;
}

std::pair<double, double> manufactured_adjoint(double abar, double x, double t) {
  if (!(abar > 0)) throw std::invalid_argument("abar must be positive");
  const double s = t - 0.5;
  const double r = 2.0 * x - 1.0;
  const double ps = s * s - 1.0;
  const double pr = r * r - 1.0;
  const double w = -abar * ps * ps * pr * pr;
  const double lw = abar * (4.0 * s * ps * pr * pr + 16.0 * ps * ps * (3.0 * r * r - 1.0));
  return {w, lw};
}

DesiredState manufactured_desired_state(const SpaceTimeGrid& grid, double abar,
                                        const PointSource& src, double p, std::size_t n_terms) {
  DesiredState yd = sample_fourier_state(grid, src, n_terms);
  const std::size_t nh = grid.num_nodes();
  for (std::size_t k = 1; k <= grid.num_steps(); ++k) {
    const double tm = grid.midpoint(k);
    for (std::size_t j = 0; j < nh; ++j) {
      const double lw = manufactured_adjoint(abar, grid.node(j), tm).second;
      yd.values[(k - 1) * nh + j] -= std::pow(std::abs(lw), p - 2.0) * lw;
    }
  }
  return yd;
}

}  // namespace spheat

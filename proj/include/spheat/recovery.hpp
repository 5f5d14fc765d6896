#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "spheat/fem.hpp"
#include "spheat/newton.hpp"

namespace spheat {

/// One reported atom. VD: weight * delta_{x} (x) delta_{t}. DG: a spatial Dirac
/// times a density on I_k = (t_begin, t]; `weight` is the integrated mass
/// tau_k * density, which is also the coefficient of the Dirac view placed at
/// the right endpoint t.
struct Atom {
  std::size_t node = 0;
  std::size_t time = 0;  // VD: time point index; DG: interval index k
  double x = 0;
  double t = 0;
  double t_begin = 0;
  double weight = 0;
  double density = 0;  // DG only; equals weight for VD
};

struct InitialAtom {
  std::size_t node = 0;
  double x = 0;
  double weight = 0;
};

struct MeasureControl {
  Scheme scheme = Scheme::kVariational;
  /// Coefficients read off at every sigma site (integrated masses for DG).
  Vector coefficients;
  /// Coefficients at the initial sites; empty when u_0 is fixed to zero.
  Vector initial_coefficients;
  /// Nonzero atoms (|weight| above the drop tolerance).
  std::vector<Atom> atoms;
  std::vector<InitialAtom> initial_atoms;
  /// max |r| over unconstrained positions of the recovery vector.
  double off_index_residual = 0;
};

class RecoveryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RecoveryOptions {
  /// Off-index entries of r must satisfy |r| <= residual_tol * (1 + max|r|).
  double residual_tol = 1e-8;
  bool check_residual = true;
  /// Atoms with |weight| <= drop_tol * (1 + max|r|) are not listed.
  double drop_tol = 1e-8;
  bool with_initial = false;
};

/// Reads the control off r = L^T(|z|^{p-2} z + y_d).
MeasureControl recover_control(const DiscreteSystem& sys, const Vector& yd, const Vector& w,
                               const RecoveryOptions& options = {});

/// The alpha = 0 solution: w = 0, u = restriction of L^T y_d. The off-index
/// residual is recorded but never checked.
MeasureControl closed_form_zero_alpha(const DiscreteSystem& sys, const Vector& yd,
                                      bool with_initial = false);

/// Sum of |coefficients| (integrated masses for DG) plus the initial part.
double measure_norm(const MeasureControl& control);

struct StateSolution {
  Vector y;   // state layout, block k-1 for interval I_k
  Vector y0;  // DG initial value M^{-1} u_0 (empty for VD)
};

StateSolution solve_state(const DiscreteSystem& sys, const MeasureControl& control);

/// Lumped (sum |y - y_d|^q omega_j tau_k)^{1/q}.
double tracking_error(const DiscreteSystem& sys, const Vector& y, const Vector& yd, double q);

/// L^q(Q) distance between the discrete state (piecewise linear in space,
/// piecewise constant in time) and a field, by tensor Gauss-Legendre
/// quadrature with `points` nodes per element and interval.
double tracking_error_quadrature(const DiscreteSystem& sys, const Vector& y,
                                 const std::function<double(double, double)>& field, double q,
                                 int points = 4);

struct SupportSets {
  std::vector<std::size_t> positive;  // sigma-site indices with w = -alpha
  std::vector<std::size_t> negative;  // w = +alpha
  std::vector<std::size_t> initial_positive;
  std::vector<std::size_t> initial_negative;
};

/// Sites where |w| >= bound - tol; tol defaults to 1e-6 * bound.
SupportSets support_from_adjoint(const DiscreteSystem& sys, const Vector& w, const Bounds& bounds,
                                 std::optional<double> tol = std::nullopt);

/// J = (1/q)||y - y_d||_q^q + alpha ||u|| + beta ||u_0|| (lumped).
double primal_objective(const DiscreteSystem& sys, const Vector& yd, const MeasureControl& control,
                        const Bounds& bounds);

/// Sum over sites of w u + alpha |u| (and the beta analogue).
double optimality_pairing(const DiscreteSystem& sys, const Vector& w,
                          const MeasureControl& control, const Bounds& bounds);

struct RunReport {
  Scheme scheme = Scheme::kVariational;
  double alpha = 0;
  std::optional<double> beta;
  double measure_norm = 0;
  double tracking_error = 0;
  double primal = 0;
  double predual = 0;
  double duality_gap = 0;
  std::size_t iterations = 0;
  double residual = 0;
  double off_index_residual = 0;
  KktDiagnostics kkt;
  bool closed_form = false;
  MeasureControl control;
};

/// Recovers the control and fills every scalar of the report.
RunReport make_report(const DiscreteSystem& sys, const Vector& yd, const Bounds& bounds,
                      const SolveResult& solve, const RecoveryOptions& options = {});
RunReport make_zero_alpha_report(const DiscreteSystem& sys, const Vector& yd, bool with_initial);

}  // namespace spheat

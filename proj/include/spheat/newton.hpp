#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "spheat/fem.hpp"

namespace spheat {

/// Adjoint coefficients and box multipliers. lambda1/lambda2 are indexed by
/// the sigma sites, lambda3/lambda4 by the initial sites (empty when the
/// initial-time constraint is disabled).
struct PredualIterate {
  Vector w;
  Vector lambda1;
  Vector lambda2;
  Vector lambda3;
  Vector lambda4;

  static PredualIterate zero(const DiscreteSystem& sys, bool with_initial);
  bool has_initial() const { return lambda3.size() > 0 || lambda4.size() > 0; }
};

/// Bound parameters of the predual box constraints. beta unset disables the
/// initial-time constraint (u_0 fixed to zero).
struct Bounds {
  double alpha = 0;
  std::optional<double> beta;
};

struct IterationRecord {
  std::size_t iter = 0;
  double residual = 0;
  double step = 1;
  double update = 0;  // max |dw|
  std::size_t active_upper = 0;
  std::size_t active_lower = 0;
  std::size_t active_initial_upper = 0;
  std::size_t active_initial_lower = 0;
  bool line_search_failed = false;
  std::size_t deferred = 0;  // violated sites left out of this step
};

struct SolverConfig {
  double kappa = 1.0;
  double newton_tol = 1e-10;
  /// Iteration also requires max |dw| <= step_tol * (1 + max |w|).
  double step_tol = 1e-11;
  double feas_tol = 1e-9;
  std::size_t max_iter = 200;
  /// Curvature regularization c * ||F|| / (1 + ||L^T y_d||) in the density variable.
  double reg_coeff = 1.0;
  bool globalize = true;
  double min_step = 0x1p-30;
  /// The condensed sparse factorization replaces the active-set
  /// capacitance solve when n <= direct_max_unknowns and the active set
  /// exceeds capacitance_max_active.
  std::size_t direct_max_unknowns = 150000;
  std::size_t capacitance_max_active = 32;
  /// At most this many sites with a zero multiplier join the active set per
  /// step, largest violation first. 0 admits all of them.
  std::size_t max_new_active = 0;
  /// Called after every iteration record is complete (progress reporting).
  std::function<void(const IterationRecord&)> on_iteration;

  void validate() const;
};

struct KktResidual {
  Vector grad_w;
  Vector n1;
  Vector n2;
  Vector n3;
  Vector n4;
  double norm = 0;
};


struct SolveResult {
  PredualIterate iterate;
  std::vector<IterationRecord> log;
  std::size_t iterations = 0;
  double residual = 0;
  double residual_scale = 1;  // 1 + ||L^T y_d||
};

class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, SolveResult best)
      : std::runtime_error(what), best_(std::move(best)) {}
  const SolveResult& best() const { return best_; }

 private:
  SolveResult best_;
};

/// z = M_sigma^{-1} L w (lumped).
Vector adjoint_density(const DiscreteSystem& sys, const Vector& w);

/// Predual objective: sum ((1/p)|z|^p + z y_d) omega_j tau_k.
double objective(const DiscreteSystem& sys, const Vector& yd, const Vector& w);

/// L^T(|z|^{p-2} z + y_d): gradient of the objective, also the recovery vector.
Vector objective_gradient(const DiscreteSystem& sys, const Vector& yd, const Vector& w);

KktResidual kkt_residual(const DiscreteSystem& sys, const Vector& yd, const PredualIterate& it,
                         const Bounds& bounds, double kappa);

/// Assembled generalized Jacobian in the unknown order
/// (w, lambda1, lambda2[, lambda3, lambda4]). reg adds reg * M_sigma to the
/// curvature in the adjoint-density variable.
SparseMatrix generalized_jacobian(const DiscreteSystem& sys, const Vector& yd,
                                  const PredualIterate& it, const Bounds& bounds, double kappa,
                                  double reg = 0.0);

/// Stacks the residual blocks in the Jacobian's unknown order.
Vector stack(const KktResidual& r);
Vector stack(const PredualIterate& it);

/// Minimizer of the unconstrained objective.
Vector unconstrained_minimizer(const DiscreteSystem& sys, const Vector& yd);

/// Threshold bounds above which the optimal control vanishes: max |w| of the
/// unconstrained minimizer over the sigma sites (first) and initial sites.
std::pair<double, double> zero_control_thresholds(const DiscreteSystem& sys, const Vector& yd);

SolveResult newton_solve(const DiscreteSystem& sys, const Vector& yd, const Bounds& bounds,
                         const SolverConfig& config,
                         const std::optional<PredualIterate>& warm_start = std::nullopt);

/// One full generalized Newton update (unit step, no line search): active
/// rows land on their bounds, inactive multipliers become zero. reg is the
/// curvature regularization added in the density variable.
PredualIterate newton_update(const DiscreteSystem& sys, const Vector& yd, const PredualIterate& it,
                             const Bounds& bounds, const SolverConfig& config, double reg = 0.0);

struct KktDiagnostics {
  double max_violation = 0;       // max(|w| - bound) over constrained sites
  double min_multiplier = 0;
  double max_complementarity = 0;  // max lambda * (|w| - bound) magnitude
};

KktDiagnostics kkt_diagnostics(const DiscreteSystem& sys, const PredualIterate& it,
                               const Bounds& bounds);

}  // namespace spheat

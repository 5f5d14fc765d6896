#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <cstddef>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "spheat/grid.hpp"

namespace spheat {

using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;

/// Symmetric tridiagonal matrix: diag has n entries, off has n-1.
struct SymTridiag {
  Vector diag;
  Vector off;

  Eigen::Index size() const { return diag.size(); }
  /// out = this * in
  void apply(const double* in, double* out) const;
  /// out += s * this * in
  void apply_add(double s, const double* in, double* out) const;
  SparseMatrix to_sparse() const;
};

/// alpha * A + beta * B, entrywise.
SymTridiag combine(double alpha, const SymTridiag& A, double beta, const SymTridiag& B);

/// Cholesky factor of an SPD tridiagonal matrix (bidiagonal L with L L^T = T).
class TridiagCholesky {
 public:
  explicit TridiagCholesky(const SymTridiag& T);
  /// In-place solve T x = b.
  void solve_in_place(double* x) const;

 private:
  Vector d_;    // diagonal of L
  Vector l_;    // sub-diagonal of L
};

/// Consistent mass matrix of the interior hat functions.
SymTridiag mass_tridiag(const SpaceTimeGrid& grid);
/// Stiffness matrix int e_j' e_k' dx.
SymTridiag stiffness_tridiag(const SpaceTimeGrid& grid);

SparseMatrix assemble_mass(const SpaceTimeGrid& grid);
SparseMatrix assemble_stiffness(const SpaceTimeGrid& grid);

/// omega_j = int e_j dx.
Vector lumped_weights(const SpaceTimeGrid& grid);

/// Lower block-bidiagonal state operator with tridiagonal blocks:
///   diagonal block r:   M + diag_coef[r] * A
///   sub-diagonal row r: sub_mass[r] * M + sub_stiff[r] * A   (r >= 1)
/// Vectors are time-major with block size n = dim(M). apply() is the state
/// operator; apply_adjoint() its transpose. Factorizations of the diagonal
/// blocks are cached per distinct coefficient.
class BlockBidiagonal {
 public:
  BlockBidiagonal(SymTridiag mass, SymTridiag stiffness, std::vector<double> diag_coef,
                  std::vector<double> sub_mass, std::vector<double> sub_stiff);

  std::size_t num_blocks() const { return diag_coef_.size(); }
  std::size_t block_size() const { return static_cast<std::size_t>(mass_.size()); }
  std::size_t size() const { return num_blocks() * block_size(); }

  Vector apply(const Vector& y) const;
  Vector apply_adjoint(const Vector& w) const;
  /// Forward block substitution for apply(y) = b.
  Vector solve(const Vector& b) const;
  /// Backward block substitution for apply_adjoint(w) = b.
  Vector solve_adjoint(const Vector& b) const;
  /// Backward substitution stopped after block `last_block`; blocks below it
  /// are left zero.
  Vector solve_adjoint_until(const Vector& b, std::size_t last_block) const;
  /// Forward substitution for a right-hand side that vanishes before block
  /// `first_block`; earlier blocks of the result are exactly zero.
  Vector solve_from(const Vector& b, std::size_t first_block) const;

  /// One forward-substitution step on `cols` columns of length block_size()
  /// stored contiguously: x holds the block-r right-hand sides on entry and
  /// the solution on exit; prev is the block r-1 solution, null meaning zero.
  void forward_step(std::size_t r, const double* prev, double* x, std::size_t cols) const;

  SymTridiag diagonal_block(std::size_t r) const;
  SymTridiag sub_block(std::size_t r) const;
  SparseMatrix to_sparse() const;

 private:
  const TridiagCholesky& factor(std::size_t r) const;

  SymTridiag mass_;
  SymTridiag stiffness_;
  std::vector<double> diag_coef_;
  std::vector<double> sub_mass_;
  std::vector<double> sub_stiff_;
  std::vector<std::size_t> factor_index_;
  std::vector<std::shared_ptr<const TridiagCholesky>> factors_;
};

enum class Scheme { kVariational, kDiscontinuousGalerkin };

std::string to_string(Scheme s);
Scheme parse_scheme(const std::string& s);

/// Conjugate exponents of the tracking term (q) and the predual (p).
struct Exponents {
  double q = 4.0 / 3.0;
  double p = 4.0;

  /// Validates q in (1, min(2, 1 + 2/d)] for d = 1 and sets p = q/(q-1).
  static Exponents from_q(double q);
};

/// A constrained coefficient: position in the adjoint vector plus the grid
/// location it stands for.
struct ConstraintSite {
  std::size_t position;  // index into the adjoint/state vectors
  std::size_t node;      // 0-based spatial node
  std::size_t time;      // VD: time point index k; DG: interval index k (I_k)
};

/// Assembled discretization of the state equation plus everything the predual
/// solver needs.
///
/// The solver-facing operator always has N_sigma unknowns. For the VD scheme
/// the adjoint block r belongs to the time point t_r (r = 0..Ntau-1); for the
/// DG scheme the initial-value row/column is eliminated (u_0 enters the first
/// retained row, since M_h y_0 = u_0) and adjoint block r belongs to interval
/// I_{r+1}. In both schemes state block r belongs to interval I_{r+1}.
struct DiscreteSystem {
  Scheme scheme = Scheme::kVariational;
  SpaceTimeGrid grid;
  ControlRegion region;
  IndexSets index_sets;
  Exponents exponents;
  SymTridiag mass;
  SymTridiag stiffness;
  Vector omega;            // lumped spatial weights
  Vector weights;          // lumped space-time mass omega_j * tau_k, state layout
  BlockBidiagonal op;      // L^T (reduced for DG)
  std::vector<ConstraintSite> sigma_sites;    // R_sigma
  std::vector<ConstraintSite> initial_sites;  // R_h

  std::size_t num_unknowns() const { return op.size(); }
  std::size_t block_size() const { return grid.num_nodes(); }

  /// Full state matrix: N_sigma x N_sigma for VD, (N_sigma+N_h)^2 for DG.
  SparseMatrix state_matrix() const;

  Vector restrict_sigma(const Vector& w) const;
  Vector restrict_initial(const Vector& w) const;
  /// out += R_sigma^T values (and R_h^T for the initial variant).
  void scatter_sigma_add(const Vector& values, Vector& out) const;
  void scatter_initial_add(const Vector& values, Vector& out) const;

  /// Time coordinate represented by adjoint block r (t_r for VD, the right
  /// endpoint of I_{r+1} for DG).
  double adjoint_time(std::size_t r) const;
};

DiscreteSystem assemble_vd_system(const SpaceTimeGrid& grid, const ControlRegion& region,
                                  Exponents exponents = {});
/// Throws GridTooCoarseError if no time interval fits in the control interval.
DiscreteSystem assemble_dg_system(const SpaceTimeGrid& grid, const ControlRegion& region,
                                  Exponents exponents = {});
DiscreteSystem assemble_system(Scheme scheme, const SpaceTimeGrid& grid,
                               const ControlRegion& region, Exponents exponents = {});

/// MatrixMarket coordinate (real general) writer.
void write_matrix_market(std::ostream& os, const SparseMatrix& m);

}  // namespace spheat

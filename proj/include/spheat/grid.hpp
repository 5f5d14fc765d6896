#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace spheat {

/// Raised when a grid cannot resolve the control region (empty index sets).
class GridTooCoarseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor-product space-time mesh on (a,b) x (0,T) with homogeneous Dirichlet
/// boundary nodes removed.
///
/// Interior nodes are x[0..Nh-1] (node j=1..Nh in 1-based notation). Time points
/// are t[0..Ntau] with t[0]=0 and t[Ntau]=T. Interval I_k = (t[k-1], t[k]] for
/// k < Ntau and I_Ntau = (t[Ntau-1], T), so the intervals partition (0,T).
class SpaceTimeGrid {
 public:
  SpaceTimeGrid(double a, double b, std::vector<double> interior_nodes,
                std::vector<double> time_points);

  double a() const { return a_; }
  double b() const { return b_; }
  double final_time() const { return t_.back(); }

  std::size_t num_nodes() const { return x_.size(); }
  std::size_t num_steps() const { return t_.size() - 1; }
  /// Nh * Ntau
  std::size_t num_spacetime() const { return num_nodes() * num_steps(); }

  std::span<const double> nodes() const { return x_; }
  std::span<const double> time_points() const { return t_; }

  /// Coordinate of interior node j (0-based).
  double node(std::size_t j) const { return x_[j]; }
  double time(std::size_t k) const { return t_[k]; }
  /// tau_k = t_k - t_{k-1} for k = 1..Ntau.
  double step(std::size_t k) const { return t_[k] - t_[k - 1]; }
  double midpoint(std::size_t k) const { return 0.5 * (t_[k - 1] + t_[k]); }

  /// Element lengths including the two boundary-adjacent elements (Nh+1 entries).
  std::vector<double> element_lengths() const;
  double mesh_size() const;  // h
  double max_step() const;   // tau

  /// Interval I_k containing t, k in 1..Ntau. t must lie in (0,T).
  std::size_t interval_of(double t) const;

  /// Whether every coordinate is an exactly representable dyadic rational of
  /// modest denominator; membership tests then use zero tolerance.
  bool is_dyadic() const;

 private:
  double a_;
  double b_;
  std::vector<double> x_;
  std::vector<double> t_;
};

/// Equidistant interior nodes x_j = a + j (b-a)/(Nh+1), j=1..Nh.
SpaceTimeGrid build_grid(double a, double b, double T, std::size_t num_nodes,
                         std::vector<double> time_points);

std::vector<double> equidistant_times(double T, std::size_t num_steps);

enum class Coupling { kTauHalfH, kTauHalfHSquared, kExplicit };

Coupling parse_coupling(const std::string& s);
std::string to_string(Coupling c);

/// Equidistant grid whose time step is tied to h by the coupling rule.
/// Throws if T is not an integer multiple of the coupled step.
SpaceTimeGrid build_coupled_grid(double a, double b, double T, std::size_t num_nodes,
                                 Coupling coupling);

/// Closed space-time control region [x_lo,x_hi] x [t_lo,t_hi].
struct ControlRegion {
  double x_lo = 0;
  double x_hi = 0;
  double t_lo = 0;
  double t_hi = 0;

  /// Requires a < x_lo < x_hi < b and 0 < t_lo < t_hi < T.
  void validate(const SpaceTimeGrid& grid) const;
};

/// Control index sets. Node indices are 0-based; time indices refer to time
/// points (sigma) or intervals (tau, 1-based as I_k).
struct IndexSets {
  std::vector<std::size_t> nodes;  // I_h: j with x_j in [x_lo, x_hi]
  struct Point {
    std::size_t j;
    std::size_t k;  // time point index into t
    bool operator==(const Point&) const = default;
  };
  std::vector<Point> points;          // I_sigma, time-major order
  std::vector<std::size_t> intervals;  // I_tau: k with I_k inside [t_lo, t_hi]
  double space_tol = 0;
  double time_tol = 0;
};

/// Membership by closed-region containment; throws GridTooCoarseError if
/// I_sigma or I_h is empty. I_tau may be empty (checked by the DG assembly).
IndexSets control_index_sets(const SpaceTimeGrid& grid, const ControlRegion& region);

}  // namespace spheat

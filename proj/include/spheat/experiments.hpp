#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "spheat/analytic.hpp"
#include "spheat/fem.hpp"
#include "spheat/grid.hpp"
#include "spheat/newton.hpp"
#include "spheat/recovery.hpp"

namespace spheat {

/// Bad or inconsistent run configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GridSpec {
  double a = 0.0;
  double b = 1.0;
  double T = 1.5;
  std::size_t num_nodes = 3;
  /// Used with Coupling::kExplicit when no time points are listed.
  std::size_t num_steps = 12;
  Coupling coupling = Coupling::kExplicit;
  std::vector<double> time_points;  // optional explicit partition of [0,T]
};

enum class DataKind { kFourierDirac, kManufactured, kFile };

struct DataSpec {
  DataKind kind = DataKind::kFourierDirac;
  PointSource source;
  double abar = 0.25;  // manufactured only
  std::size_t n_terms = kDefaultFourierTerms;
  std::filesystem::path path;  // file only: CSV rows j,k,value (1-based)
};

struct SweepSpec {
  std::size_t count = 40;
  double alpha_min = 1e-3;
  std::optional<double> alpha_max;  // default: largest zero-control threshold
};

struct ConvergenceSpec {
  /// Values of 1/h; level n has n-1 interior nodes.
  std::vector<std::size_t> ladder{8, 16, 32, 64, 128};
  std::vector<Coupling> couplings{Coupling::kTauHalfH, Coupling::kTauHalfHSquared};
  bool warm_start = true;
};

struct RunConfig {
  GridSpec grid;
  ControlRegion region{0.25, 0.75, 0.25, 1.25};
  std::vector<Scheme> schemes{Scheme::kVariational, Scheme::kDiscontinuousGalerkin};
  /// One value for solve; a descending list turns sweep-alpha into an explicit sweep.
  std::vector<double> alphas{0.456};
  std::optional<double> beta;  // unset = u_0 fixed to zero
  double q = 4.0 / 3.0;
  DataSpec data;
  SolverConfig solver;
  SweepSpec sweep;
  ConvergenceSpec convergence;
  std::filesystem::path out_dir = "out";
};

RunConfig parse_run_config(std::string_view json_text);
RunConfig load_run_config(const std::filesystem::path& path);
void validate(const RunConfig& config);

SpaceTimeGrid make_grid(const GridSpec& s);
/// Desired state in state layout for the configured data source.
Vector make_desired_state(const RunConfig& config, const SpaceTimeGrid& grid);

/// Newton solve plus recovery; alpha = 0 takes the closed-form path.
struct SolveOutcome {
  RunReport report;
  std::optional<SolveResult> solve;
};

SolveOutcome run_point(const DiscreteSystem& sys, const Vector& yd, const Bounds& bounds,
                       const SolverConfig& solver,
                       const std::optional<PredualIterate>& warm_start = std::nullopt);

/// Bilinear interpolation of a coarse adjoint onto a finer system, clipped
/// to the box. Multipliers start at zero.
PredualIterate prolong_iterate(const DiscreteSystem& coarse, const PredualIterate& it,
                               const DiscreteSystem& fine, const Bounds& bounds);

struct OutputOptions {
  bool dump_matrices = false;
  bool log = false;
  bool dump_ydensity = false;
};

// -- solve ------------------------------------------------------------------

/// Writes report_<scheme>.json, atoms_<scheme>.csv and iterations_<scheme>.csv.
std::vector<RunReport> cmd_solve(const RunConfig& config, const OutputOptions& options = {});

// -- alpha sweep --------------------------------------------------------------

struct SweepRow {
  Scheme scheme = Scheme::kVariational;
  double alpha = 0;
  double measure_norm = 0;
  double tracking_error = 0;
  double duality_gap = 0;
  std::size_t iterations = 0;
  std::size_t num_atoms = 0;
  bool closed_form = false;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  /// Zero-control threshold per scheme, in config.schemes order.
  std::vector<std::pair<Scheme, double>> thresholds;
};

/// 40 log-spaced alphas from alpha_max down to alpha_min unless the config
/// lists several alphas. thresholds are the per-scheme zero-control bounds.
std::vector<double> sweep_alphas(const RunConfig& config, double alpha_max);

/// Writes sweep.csv (rows appended as they finish, so a failure leaves the
/// completed part) and sweep_summary.json. Each scheme ends with an alpha = 0
/// closed-form row.
SweepResult cmd_alpha_sweep(const RunConfig& config, const OutputOptions& options = {});

// -- convergence ----------------------------------------------------------------

struct ConvergenceRow {
  Coupling coupling = Coupling::kTauHalfH;
  Scheme scheme = Scheme::kVariational;
  double h = 0;
  double tau = 0;
  std::size_t num_nodes = 0;
  std::size_t num_steps = 0;
  double measure_norm = 0;
  double norm_error = 0;   // | ||u_i|| - ||u_true|| |
  double state_error = 0;  // lumped L^q distance to the sampled y_true
  std::size_t iterations = 0;
  std::string status = "ok";
};

struct SlopeRow {
  Coupling coupling = Coupling::kTauHalfH;
  Scheme scheme = Scheme::kVariational;
  std::string quantity;  // "norm_error" or "state_error"
  double slope = 0;
  std::size_t levels = 0;
};

struct ConvergenceResult {
  std::vector<ConvergenceRow> rows;
  std::vector<SlopeRow> slopes;
  bool all_ok() const;
};

/// Least-squares slope of log(err) against log(h). NaN with fewer than two
/// usable (positive) points.
double loglog_slope(const std::vector<double>& h, const std::vector<double>& err);

/// Runs the ladder for one coupling and writes convergence_<tag>.csv, where
/// tag is "tau_h" or "tau_h2". Level failures are recorded in the status
/// column and the ladder continues.
ConvergenceResult cmd_convergence(const RunConfig& config, Coupling coupling,
                                  const OutputOptions& options = {});

std::string coupling_tag(Coupling c);

// -- writers ----------------------------------------------------------------------

/// %.17g
std::string format_double(double v);

void write_atoms_csv(std::ostream& os, const RunReport& report);
void write_iterations_csv(std::ostream& os, const std::vector<IterationRecord>& log);
void write_report_json(std::ostream& os, const RunReport& report, const DiscreteSystem& sys,
                       double threshold);
void write_ydensity_csv(std::ostream& os, const SpaceTimeGrid& grid, const Vector& yd);

}  // namespace spheat

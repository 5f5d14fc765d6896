// Command-line driver: solve, sweep-alpha, convergence.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spheat/experiments.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitSolver = 3;

struct Common {
  std::string config;
  std::string scheme;
  std::string out;
  std::optional<double> alpha;
  spheat::OutputOptions output;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON run file")->required();
  cmd->add_option("--scheme", c.scheme, "vd, dg or both (overrides the config)")
      ->check(CLI::IsMember({"vd", "dg", "both"}));
  cmd->add_option("--out", c.out, "output directory (overrides the config)");
  cmd->add_option("--alpha", c.alpha, "single alpha (overrides the config)");
  cmd->add_flag("--dump-matrices", c.output.dump_matrices, "write MatrixMarket files");
  cmd->add_flag("--log", c.output.log, "write Newton iteration logs");
  cmd->add_flag("--dump-ydensity", c.output.dump_ydensity, "write the sampled desired state");
}

spheat::RunConfig load(const Common& c) {
  spheat::RunConfig cfg = spheat::load_run_config(c.config);
  if (!c.scheme.empty()) {
    cfg.schemes.clear();
    if (c.scheme == "both" || c.scheme == "vd") cfg.schemes.push_back(spheat::Scheme::kVariational);
    if (c.scheme == "both" || c.scheme == "dg") {
      cfg.schemes.push_back(spheat::Scheme::kDiscontinuousGalerkin);
    }
  }
  if (!c.out.empty()) cfg.out_dir = c.out;
  if (c.alpha) cfg.alphas = {*c.alpha};
  spheat::validate(cfg);
  return cfg;
}

int run_solve(const Common& c) {
  const spheat::RunConfig cfg = load(c);
  for (const auto& r : spheat::cmd_solve(cfg, c.output)) {
    std::printf("%s alpha=%.6g norm=%.10g tracking=%.10g gap=%.3e iters=%zu atoms=%zu\n",
                spheat::to_string(r.scheme).c_str(), r.alpha, r.measure_norm, r.tracking_error,
                r.duality_gap, r.iterations, r.control.atoms.size());
  }
  return 0;
}

int run_sweep(const Common& c) {
  const spheat::RunConfig cfg = load(c);
  const spheat::SweepResult res = spheat::cmd_alpha_sweep(cfg, c.output);
  for (const auto& [s, t] : res.thresholds) {
    std::printf("%s alpha_bar=%.10g\n", spheat::to_string(s).c_str(), t);
  }
  std::printf("%zu sweep rows written to %s\n", res.rows.size(),
              (cfg.out_dir / "sweep.csv").string().c_str());
  return 0;
}

int run_convergence(const Common& c, const std::string& coupling) {
  const spheat::RunConfig cfg = load(c);
  std::vector<spheat::Coupling> couplings = cfg.convergence.couplings;
  if (coupling != "config") {
    couplings.clear();
    if (coupling == "both" || coupling == "tau=h/2") couplings.push_back(spheat::Coupling::kTauHalfH);
    if (coupling == "both" || coupling == "tau=h^2/2") {
      couplings.push_back(spheat::Coupling::kTauHalfHSquared);
    }
  }
  bool ok = true;
  for (spheat::Coupling cp : couplings) {
    const spheat::ConvergenceResult res = spheat::cmd_convergence(cfg, cp, c.output);
    for (const auto& r : res.rows) {
      std::printf("%s %s h=%.6g tau=%.6g norm_err=%.4e state_err=%.4e iters=%zu %s\n",
                  spheat::to_string(cp).c_str(), spheat::to_string(r.scheme).c_str(), r.h, r.tau,
                  r.norm_error, r.state_error, r.iterations, r.status.c_str());
    }
    for (const auto& s : res.slopes) {
      std::printf("%s %s slope(%s)=%.4f\n", spheat::to_string(cp).c_str(),
                  spheat::to_string(s.scheme).c_str(), s.quantity.c_str(), s.slope);
    }
    ok = ok && res.all_ok();
  }
  return ok ? 0 : kExitSolver;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse measure-valued control of the 1D heat equation"};
  app.require_subcommand(1);

  Common solve_opts;
  Common sweep_opts;
  Common conv_opts;
  std::string coupling = "config";

  auto* solve = app.add_subcommand("solve", "solve for the configured alpha");
  add_common(solve, solve_opts);
  auto* sweep = app.add_subcommand("sweep-alpha", "descending alpha sweep with warm starts");
  add_common(sweep, sweep_opts);
  auto* conv = app.add_subcommand("convergence", "manufactured-solution ladder");
  add_common(conv, conv_opts);
  conv->add_option("--coupling", coupling, "tau=h/2, tau=h^2/2, both or config")
      ->check(CLI::IsMember({"tau=h/2", "tau=h^2/2", "both", "config"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*solve) return run_solve(solve_opts);
    if (*sweep) return run_sweep(sweep_opts);
    return run_convergence(conv_opts, coupling);
  } catch (const spheat::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const spheat::SolverError& e) {
    std::cerr << "solver failure: " << e.what() << '\n';
    return kExitSolver;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitSolver;
  }
}

#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "helpers.hpp"
#include "spheat/experiments.hpp"

using namespace spheat;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("spheat_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kCoarse = R"({
  "grid": {"a": 0, "b": 1, "T": 1.5, "Nh": 3, "Ntau": 12, "coupling": "explicit"},
  "control_region": {"x_lo": 0.25, "x_hi": 0.75, "t_lo": 0.25, "t_hi": 1.25},
  "scheme": "both", "alpha": 0.05, "beta": "disabled",
  "data": {"kind": "fourier-dirac"}
})";

}  // namespace

TEST_SUITE("experiments") {

TEST_CASE("config parsing") {
  const RunConfig c = parse_run_config(kCoarse);
  CHECK(c.grid.num_nodes == 3);
  CHECK(c.grid.num_steps == 12);
  CHECK(c.schemes.size() == 2);
  CHECK(c.alphas == std::vector<double>{0.05});
  CHECK_FALSE(c.beta.has_value());
  CHECK(c.q == doctest::Approx(4.0 / 3.0));
  const SpaceTimeGrid g = make_grid(c.grid);
  CHECK(g.num_spacetime() == 36);
}

TEST_CASE("bad configs raise ConfigError") {
  CHECK_THROWS_AS(parse_run_config("{not json"), ConfigError);
  auto with = [](const std::string& key, const nlohmann::json& v) {
    nlohmann::json j = nlohmann::json::parse(kCoarse);
    j[key] = v;
    return j.dump();
  };
  CHECK_THROWS_AS(parse_run_config(with("scheme", "cg")), ConfigError);
  CHECK_THROWS_AS(parse_run_config(with("alpha", -1.0)), ConfigError);
  CHECK_THROWS_AS(parse_run_config(with("q", 3.0)), ConfigError);
  CHECK_THROWS_AS(parse_run_config(with("control_region", {{"x_lo", 0.0}, {"x_hi", 0.5}, {"t_lo", 0.25}, {"t_hi", 1.0}})),
                  ConfigError);
  nlohmann::json j = nlohmann::json::parse(kCoarse);
  j["solver"] = {{"kappa", -1.0}};
  CHECK_THROWS_AS(parse_run_config(j.dump()), ConfigError);
  j["solver"] = {{"max_new_active", 2}};
  CHECK(parse_run_config(j.dump()).solver.max_new_active == 2);
  CHECK_THROWS_AS(load_run_config("/nonexistent/run.json"), ConfigError);
}

TEST_CASE("log-log slope") {
  std::vector<double> h{0.5, 0.25, 0.125, 0.0625}, e;
  for (double v : h) e.push_back(3.0 * v * v);
  CHECK(loglog_slope(h, e) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(std::isnan(loglog_slope({0.5}, {1.0})));
  CHECK(std::isnan(loglog_slope({0.5, 0.25}, {0.0, 1.0})));
}

TEST_CASE("alpha sweep grid") {
  RunConfig c = parse_run_config(kCoarse);
  const std::vector<double> a = sweep_alphas(c, 0.8);
  REQUIRE(a.size() == 40);
  CHECK(a.front() == doctest::Approx(0.8));
  CHECK(a.back() == doctest::Approx(1e-3));
  for (std::size_t i = 1; i < a.size(); ++i) CHECK(a[i] < a[i - 1]);
  c.alphas = {0.3, 0.2, 0.1};
  CHECK(sweep_alphas(c, 0.8) == c.alphas);
}

TEST_CASE("solve writes deterministic outputs") {
  RunConfig c = parse_run_config(kCoarse);
  c.out_dir = scratch("solve_a");
  const auto reps = cmd_solve(c);
  REQUIRE(reps.size() == 2);
  for (const auto& r : reps) CHECK(std::abs(r.duality_gap) <= 1e-6 * (1 + std::abs(r.primal)));
  const fs::path first = c.out_dir;
  c.out_dir = scratch("solve_b");
  cmd_solve(c);
  for (const char* f : {"atoms_vd.csv", "atoms_dg.csv", "report_vd.json", "iterations_vd.csv"}) {
    REQUIRE(fs::exists(first / f));
    CHECK(slurp(first / f) == slurp(c.out_dir / f));
  }
  const auto rep = nlohmann::json::parse(slurp(first / "report_vd.json"));
  CHECK(rep.contains("measure_norm"));
}

TEST_CASE("alpha sweep is monotone") {
  RunConfig c = parse_run_config(kCoarse);
  c.schemes = {Scheme::kVariational};
  c.out_dir = scratch("sweep");
  const SweepResult res = cmd_alpha_sweep(c);
  REQUIRE(res.rows.size() == 41);
  for (std::size_t i = 1; i < res.rows.size(); ++i) {
    CHECK(res.rows[i].measure_norm >= res.rows[i - 1].measure_norm - 1e-9);
    CHECK(res.rows[i].tracking_error <= res.rows[i - 1].tracking_error + 1e-9);
  }
  // alpha = alpha_bar exactly: zero up to round-off
  CHECK(res.rows.front().measure_norm <= 1e-12);
  CHECK(res.rows.back().closed_form);
  CHECK(fs::exists(c.out_dir / "sweep.csv"));
}

TEST_CASE("small alpha approaches the closed form") {
  RunConfig c = parse_run_config(kCoarse);
  const SpaceTimeGrid g = make_grid(c.grid);
  for (Scheme sc : c.schemes) {
    const DiscreteSystem s = assemble_system(sc, g, c.region);
    const Vector yd = make_desired_state(c, g);
    const SolveOutcome small = run_point(s, yd, {1e-3, std::nullopt}, c.solver);
    const SolveOutcome zero = run_point(s, yd, {0.0, std::nullopt}, c.solver);
    CHECK(zero.report.closed_form);
    CHECK_FALSE(zero.solve.has_value());
    // L^T y_d does not vanish off the control sites here, so the limit is
    // only approached up to that mismatch
    const double off = zero.report.off_index_residual;
    CHECK(std::abs(small.report.measure_norm - zero.report.measure_norm) <= 1e-3 + off);
    CHECK(small.report.measure_norm <= zero.report.measure_norm + 1e-12);
  }
}

TEST_CASE("prolongation keeps the box") {
  const DiscreteSystem coarse = testing::coarse_system(Scheme::kVariational);
  const DiscreteSystem fine = assemble_vd_system(build_grid(0, 1, 1.5, 7, equidistant_times(1.5, 24)),
                                                 testing::coarse_region());
  const Vector yd = testing::coarse_desired(coarse.grid);
  const Bounds b{0.05, std::nullopt};
  const SolveResult r = newton_solve(coarse, yd, b, SolverConfig{});
  const PredualIterate p = prolong_iterate(coarse, r.iterate, fine, b);
  CHECK(p.w.size() == static_cast<Eigen::Index>(fine.num_unknowns()));
  for (const auto& s : fine.sigma_sites) CHECK(std::abs(p.w[s.position]) <= b.alpha);
  CHECK(p.lambda1.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("command line") {
  const char* cli = std::getenv("SPHEAT_CLI");
  if (cli == nullptr) {
    MESSAGE("SPHEAT_CLI not set, skipping");
    return;
  }
  const fs::path dir = scratch("cli");
  {
    std::ofstream(dir / "run.json") << kCoarse;
    std::ofstream(dir / "bad.json") << "{\"scheme\": 3}";
  }
  const std::string base = std::string(cli) + " solve --config ";
  CHECK(std::system((base + (dir / "run.json").string() + " --out " + (dir / "o").string() + " > /dev/null").c_str()) == 0);
  CHECK(fs::exists(dir / "o" / "atoms_dg.csv"));
  const int rc = std::system((base + (dir / "bad.json").string() + " 2> /dev/null").c_str());
  CHECK(WEXITSTATUS(rc) == 2);
  const int rc2 = std::system((std::string(cli) + " frobnicate 2> /dev/null > /dev/null").c_str());
  CHECK(WEXITSTATUS(rc2) == 2);
}

}

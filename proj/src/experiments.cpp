#include "spheat/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace spheat {

namespace {

using nlohmann::json;

// Keys starting with '_' are comments.
void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : obj.items()) {
    if (!key.empty() && key[0] == '_') continue;
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <class T>
T get(const json& obj, const char* key, T fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

std::size_t get_count(const json& obj, const char* key, std::size_t fallback,
                      const std::string& where) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError(where + "." + key + ": expected a nonnegative integer");
  }
  return v.get<std::size_t>();
}

Scheme scheme_from(const std::string& s) {
  try {
    return parse_scheme(s);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

Coupling coupling_from(const std::string& s) {
  try {
    return parse_coupling(s);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

std::vector<Scheme> schemes_from(const std::string& s) {
  if (s == "both") return {Scheme::kVariational, Scheme::kDiscontinuousGalerkin};
  return {scheme_from(s)};
}

GridSpec parse_grid(const json& g) {
  const std::string where = "grid";
  check_keys(g, {"a", "b", "T", "Nh", "Ntau", "h", "coupling", "time_points"}, where);
  GridSpec s;
  s.a = get(g, "a", s.a, where);
  s.b = get(g, "b", s.b, where);
  s.T = get(g, "T", s.T, where);
  s.coupling = coupling_from(get<std::string>(g, "coupling", "explicit", where));
  if (g.contains("h")) {
    if (g.contains("Nh")) throw ConfigError("grid: give either Nh or h, not both");
    const double h = get(g, "h", 0.0, where);
    if (!(h > 0)) throw ConfigError("grid.h must be positive");
    const double n = (s.b - s.a) / h;
    if (std::abs(n - std::round(n)) > 1e-9 * n) {
      throw ConfigError("grid.h does not divide b - a");
    }
    s.num_nodes = static_cast<std::size_t>(std::llround(n)) - 1;
  } else {
    s.num_nodes = get_count(g, "Nh", s.num_nodes, where);
  }
  s.num_steps = get_count(g, "Ntau", s.num_steps, where);
  if (g.contains("time_points")) {
    s.time_points = get<std::vector<double>>(g, "time_points", {}, where);
    if (s.coupling != Coupling::kExplicit) {
      throw ConfigError("grid.time_points requires coupling \"explicit\"");
    }
  }
  return s;
}

ControlRegion parse_region(const json& r) {
  const std::string where = "control_region";
  check_keys(r, {"x_lo", "x_hi", "t_lo", "t_hi"}, where);
  ControlRegion c;
  c.x_lo = get(r, "x_lo", c.x_lo, where);
  c.x_hi = get(r, "x_hi", c.x_hi, where);
  c.t_lo = get(r, "t_lo", c.t_lo, where);
  c.t_hi = get(r, "t_hi", c.t_hi, where);
  return c;
}

DataSpec parse_data(const json& d) {
  const std::string where = "data";
  check_keys(d, {"kind", "x0", "t0", "weight", "abar", "n_terms", "path"}, where);
  DataSpec s;
  const std::string kind = get<std::string>(d, "kind", "fourier-dirac", where);
  if (kind == "fourier-dirac") {
    s.kind = DataKind::kFourierDirac;
  } else if (kind == "manufactured") {
    s.kind = DataKind::kManufactured;
  } else if (kind == "file") {
    s.kind = DataKind::kFile;
  } else {
    throw ConfigError("data.kind must be fourier-dirac, manufactured or file");
  }
  s.source.x0 = get(d, "x0", s.source.x0, where);
  s.source.t0 = get(d, "t0", s.source.t0, where);
  s.source.weight = get(d, "weight", s.source.weight, where);
  s.abar = get(d, "abar", s.abar, where);
  s.n_terms = get_count(d, "n_terms", s.n_terms, where);
  s.path = get<std::string>(d, "path", "", where);
  if (s.kind == DataKind::kFile && s.path.empty()) throw ConfigError("data.path is required");
  return s;
}

SolverConfig parse_solver(const json& j) {
  const std::string where = "solver";
  check_keys(j,
             {"kappa", "newton_tol", "step_tol", "feas_tol", "max_iter", "reg_coeff", "globalize",
              "min_step", "direct_max_unknowns", "capacitance_max_active", "max_new_active"},
             where);
  SolverConfig c;
  c.kappa = get(j, "kappa", c.kappa, where);
  c.newton_tol = get(j, "newton_tol", c.newton_tol, where);
  c.step_tol = get(j, "step_tol", c.step_tol, where);
  c.feas_tol = get(j, "feas_tol", c.feas_tol, where);
  c.max_iter = get_count(j, "max_iter", c.max_iter, where);
  c.reg_coeff = get(j, "reg_coeff", c.reg_coeff, where);
  c.globalize = get(j, "globalize", c.globalize, where);
  c.min_step = get(j, "min_step", c.min_step, where);
  c.direct_max_unknowns = get_count(j, "direct_max_unknowns", c.direct_max_unknowns, where);
  c.capacitance_max_active =
      get_count(j, "capacitance_max_active", c.capacitance_max_active, where);
  c.max_new_active = get_count(j, "max_new_active", c.max_new_active, where);
  return c;
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream os(p);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  return os;
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
}

Exponents exponents_of(const RunConfig& c) {
  try {
    return Exponents::from_q(c.q);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

Bounds bounds_of(const RunConfig& c, double alpha) {
  Bounds b;
  b.alpha = alpha;
  b.beta = c.beta;
  return b;
}

std::size_t count_atoms(const RunReport& r) {
  return r.control.atoms.size() + r.control.initial_atoms.size();
}

// Values of the adjoint on a coarse system as a function of (x, t).
class AdjointField {
 public:
  AdjointField(const DiscreteSystem& sys, const Vector& w) : nh_(sys.block_size()) {
    const auto nodes = sys.grid.nodes();
    xs_.push_back(sys.grid.a());
    xs_.insert(xs_.end(), nodes.begin(), nodes.end());
    xs_.push_back(sys.grid.b());
    const std::size_t nb = sys.num_unknowns() / nh_;
    for (std::size_t r = 0; r < nb; ++r) ts_.push_back(sys.adjoint_time(r));
    vals_.assign(w.data(), w.data() + w.size());
    // w(T) = 0 is part of the VD test space
    if (sys.scheme == Scheme::kVariational) {
      ts_.push_back(sys.grid.final_time());
      vals_.resize(vals_.size() + nh_, 0.0);
    }
  }

  double operator()(double x, double t) const {
    const auto [i, sx] = locate(xs_, x);
    const auto [r, st] = locate(ts_, t);
    auto at = [&](std::size_t xi, std::size_t ti) {
      if (xi == 0 || xi == xs_.size() - 1) return 0.0;
      return vals_[ti * nh_ + (xi - 1)];
    };
    const std::size_t i1 = std::min(i + 1, xs_.size() - 1);
    const std::size_t r1 = std::min(r + 1, ts_.size() - 1);
    const double lo = (1 - sx) * at(i, r) + sx * at(i1, r);
    const double hi = (1 - sx) * at(i, r1) + sx * at(i1, r1);
    return (1 - st) * lo + st * hi;
  }

 private:
  // Cell index and local coordinate; clamps outside the node range.
  static std::pair<std::size_t, double> locate(const std::vector<double>& v, double s) {
    if (v.size() == 1 || s <= v.front()) return {0, 0.0};
    if (s >= v.back()) return {v.size() - 2, 1.0};
    const std::size_t i =
        static_cast<std::size_t>(std::upper_bound(v.begin(), v.end(), s) - v.begin()) - 1;
    return {i, (s - v[i]) / (v[i + 1] - v[i])};
  }

  std::size_t nh_;
  std::vector<double> xs_;
  std::vector<double> ts_;
  std::vector<double> vals_;
};

std::vector<double> read_desired_file(const std::filesystem::path& path, const SpaceTimeGrid& grid) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read " + path.string());
  const std::size_t nh = grid.num_nodes();
  const std::size_t nt = grid.num_steps();
  std::vector<double> v(nh * nt, std::numeric_limits<double>::quiet_NaN());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#' || line.rfind("j,", 0) == 0) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    long long j = 0;
    long long k = 0;
    double val = 0;
    if (!(ls >> j >> k >> val)) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected j,k,value");
    }
    if (j < 1 || k < 1 || static_cast<std::size_t>(j) > nh || static_cast<std::size_t>(k) > nt) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": index out of range");
    }
    v[static_cast<std::size_t>(k - 1) * nh + static_cast<std::size_t>(j - 1)] = val;
  }
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      throw ConfigError(path.string() + ": missing or non-finite value at (j,k)=(" +
                        std::to_string(i % nh + 1) + "," + std::to_string(i / nh + 1) + ")");
    }
  }
  return v;
}

SpaceTimeGrid ladder_grid(const RunConfig& config, std::size_t n, Coupling coupling) {
  GridSpec g = config.grid;
  g.num_nodes = n - 1;
  g.coupling = coupling;
  g.time_points.clear();
  return make_grid(g);
}

}  // namespace

// -- config -------------------------------------------------------------------------------

RunConfig parse_run_config(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  const std::string where = "config";
  check_keys(j,
             {"grid", "control_region", "scheme", "alpha", "beta", "q", "data", "solver", "sweep",
              "convergence", "output"},
             where);
  RunConfig c;
  if (j.contains("grid")) c.grid = parse_grid(j.at("grid"));
  if (j.contains("control_region")) c.region = parse_region(j.at("control_region"));
  if (j.contains("scheme")) c.schemes = schemes_from(get<std::string>(j, "scheme", "both", where));
  if (j.contains("alpha")) {
    const json& a = j.at("alpha");
    if (a.is_number()) {
      c.alphas = {a.get<double>()};
    } else if (a.is_array()) {
      c.alphas = get<std::vector<double>>(j, "alpha", {}, where);
    } else {
      throw ConfigError("alpha must be a number or a list");
    }
  }
  if (j.contains("beta")) {
    const json& b = j.at("beta");
    if (b.is_string() && b.get<std::string>() == "disabled") {
      c.beta.reset();
    } else if (b.is_number()) {
      c.beta = b.get<double>();
    } else {
      throw ConfigError("beta must be a number or \"disabled\"");
    }
  }
  c.q = get(j, "q", c.q, where);
  if (j.contains("data")) c.data = parse_data(j.at("data"));
  if (j.contains("solver")) c.solver = parse_solver(j.at("solver"));
  if (j.contains("sweep")) {
    const json& s = j.at("sweep");
    check_keys(s, {"count", "alpha_min", "alpha_max"}, "sweep");
    c.sweep.count = get_count(s, "count", c.sweep.count, "sweep");
    c.sweep.alpha_min = get(s, "alpha_min", c.sweep.alpha_min, "sweep");
    if (s.contains("alpha_max")) c.sweep.alpha_max = get(s, "alpha_max", 0.0, "sweep");
  }
  if (j.contains("convergence")) {
    const json& s = j.at("convergence");
    check_keys(s, {"ladder", "couplings", "warm_start"}, "convergence");
    if (s.contains("ladder")) {
      c.convergence.ladder = get<std::vector<std::size_t>>(s, "ladder", {}, "convergence");
    }
    if (s.contains("couplings")) {
      c.convergence.couplings.clear();
      for (const auto& name : get<std::vector<std::string>>(s, "couplings", {}, "convergence")) {
        c.convergence.couplings.push_back(coupling_from(name));
      }
    }
    c.convergence.warm_start = get(s, "warm_start", c.convergence.warm_start, "convergence");
  }
  c.out_dir = get<std::string>(j, "output", c.out_dir.string(), where);
  validate(c);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_run_config(ss.str());
}

void validate(const RunConfig& c) {
  if (!(c.grid.b > c.grid.a)) throw ConfigError("grid: need a < b");
  if (!(c.grid.T > 0)) throw ConfigError("grid: need T > 0");
  if (c.grid.num_nodes == 0) throw ConfigError("grid: need at least one interior node");
  if (c.grid.coupling == Coupling::kExplicit && c.grid.time_points.empty() &&
      c.grid.num_steps == 0) {
    throw ConfigError("grid: need Ntau > 0");
  }
  if (c.schemes.empty()) throw ConfigError("scheme: none selected");
  if (c.alphas.empty()) throw ConfigError("alpha: empty list");
  for (double a : c.alphas) {
    if (!(a >= 0) || !std::isfinite(a)) throw ConfigError("alpha must be finite and >= 0");
  }
  if (c.beta && !(*c.beta >= 0)) throw ConfigError("beta must be >= 0");
  exponents_of(c);
  if (c.data.kind == DataKind::kManufactured && !(c.data.abar > 0)) {
    throw ConfigError("data.abar must be positive");
  }
  if (c.data.n_terms == 0) throw ConfigError("data.n_terms must be positive");
  if (c.sweep.count == 0) throw ConfigError("sweep.count must be positive");
  if (!(c.sweep.alpha_min > 0)) throw ConfigError("sweep.alpha_min must be positive");
  for (std::size_t n : c.convergence.ladder) {
    if (n < 2) throw ConfigError("convergence.ladder entries are 1/h and must be >= 2");
  }
  for (Coupling cp : c.convergence.couplings) {
    if (cp == Coupling::kExplicit) throw ConfigError("convergence.couplings: explicit not allowed");
  }
  try {
    c.solver.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("solver: ") + e.what());
  }
  try {
    const SpaceTimeGrid g = make_grid(c.grid);
    c.region.validate(g);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

SpaceTimeGrid make_grid(const GridSpec& s) {
  try {
    if (s.coupling != Coupling::kExplicit) {
      return build_coupled_grid(s.a, s.b, s.T, s.num_nodes, s.coupling);
    }
    std::vector<double> t = s.time_points.empty() ? equidistant_times(s.T, s.num_steps)
                                                  : s.time_points;
    if (!s.time_points.empty() && (t.front() != 0.0 || t.back() != s.T)) {
      throw ConfigError("grid.time_points must start at 0 and end at T");
    }
    return build_grid(s.a, s.b, s.T, s.num_nodes, std::move(t));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("grid: ") + e.what());
  }
}

Vector make_desired_state(const RunConfig& config, const SpaceTimeGrid& grid) {
  const DataSpec& d = config.data;
  switch (d.kind) {
    case DataKind::kFourierDirac:
      return sample_fourier_state(grid, d.source, d.n_terms).values;
    case DataKind::kManufactured:
      return manufactured_desired_state(grid, d.abar, d.source, exponents_of(config).p, d.n_terms)
          .values;
    case DataKind::kFile: {
      const std::vector<double> v = read_desired_file(d.path, grid);
      return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
    }
  }
  throw ConfigError("unknown data kind");
}

// -- solving ------------------------------------------------------------------------------

SolveOutcome run_point(const DiscreteSystem& sys, const Vector& yd, const Bounds& bounds,
                       const SolverConfig& solver, const std::optional<PredualIterate>& warm_start) {
  SolveOutcome out;
  if (bounds.alpha == 0.0) {
    out.report = make_zero_alpha_report(sys, yd, bounds.beta.has_value());
    return out;
  }
  out.solve = newton_solve(sys, yd, bounds, solver, warm_start);
  out.report = make_report(sys, yd, bounds, *out.solve);
  return out;
}

PredualIterate prolong_iterate(const DiscreteSystem& coarse, const PredualIterate& it,
                               const DiscreteSystem& fine, const Bounds& bounds) {
  const AdjointField field(coarse, it.w);
  PredualIterate out = PredualIterate::zero(fine, bounds.beta.has_value());
  const std::size_t nh = fine.block_size();
  const std::size_t nb = fine.num_unknowns() / nh;
  for (std::size_t r = 0; r < nb; ++r) {
    const double t = fine.adjoint_time(r);
    for (std::size_t j = 0; j < nh; ++j) {
      out.w[static_cast<Eigen::Index>(r * nh + j)] = field(fine.grid.node(j), t);
    }
  }
  auto clip = [&](const std::vector<ConstraintSite>& sites, double bound) {
    for (const auto& s : sites) {
      double& v = out.w[static_cast<Eigen::Index>(s.position)];
      v = std::clamp(v, -bound, bound);
    }
  };
  clip(fine.sigma_sites, bounds.alpha);
  if (bounds.beta) clip(fine.initial_sites, *bounds.beta);
  return out;
}

// -- writers ------------------------------------------------------------------------------

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_atoms_csv(std::ostream& os, const RunReport& r) {
  const std::string scheme = to_string(r.scheme);
  os << "# schema=atoms/1 x,t dimensionless; coefficient is the atom mass (integrated over I_k for dg)\n";
  os << "x,t,coefficient,scheme,t_begin,density\n";
  for (const Atom& a : r.control.atoms) {
    os << format_double(a.x) << ',' << format_double(a.t) << ',' << format_double(a.weight) << ','
       << scheme << ',' << format_double(a.t_begin) << ',' << format_double(a.density) << '\n';
  }
  // initial-time atoms carry t = 0 and an empty interval
  for (const InitialAtom& a : r.control.initial_atoms) {
    os << format_double(a.x) << ",0," << format_double(a.weight) << ',' << scheme << ",0,"
       << format_double(a.weight) << '\n';
  }
}

void write_iterations_csv(std::ostream& os, const std::vector<IterationRecord>& log) {
  os << "# schema=iterations/1\n";
  os << "iter,residual,step,update,active_upper,active_lower,active_initial_upper,"
        "active_initial_lower,line_search_failed\n";
  for (const IterationRecord& r : log) {
    os << r.iter << ',' << format_double(r.residual) << ',' << format_double(r.step) << ','
       << format_double(r.update) << ',' << r.active_upper << ',' << r.active_lower << ','
       << r.active_initial_upper << ',' << r.active_initial_lower << ','
       << (r.line_search_failed ? 1 : 0) << '\n';
  }
}

void write_report_json(std::ostream& os, const RunReport& r, const DiscreteSystem& sys,
                       double threshold) {
  json j;
  j["schema"] = "report/1";
  j["scheme"] = to_string(r.scheme);
  j["alpha"] = r.alpha;
  j["beta"] = r.beta ? json(*r.beta) : json("disabled");
  j["alpha_bar"] = threshold;
  j["grid"] = {{"Nh", sys.grid.num_nodes()},
               {"Ntau", sys.grid.num_steps()},
               {"h", sys.grid.mesh_size()},
               {"tau", sys.grid.max_step()},
               {"q", sys.exponents.q}};
  j["measure_norm"] = r.measure_norm;
  j["tracking_error"] = r.tracking_error;
  j["primal_objective"] = r.primal;
  j["predual_objective"] = r.predual;
  j["duality_gap"] = r.duality_gap;
  j["iterations"] = r.iterations;
  j["residual"] = r.residual;
  j["off_index_residual"] = r.off_index_residual;
  j["closed_form"] = r.closed_form;
  j["num_atoms"] = count_atoms(r);
  j["kkt"] = {{"max_violation", r.kkt.max_violation},
              {"min_multiplier", r.kkt.min_multiplier},
              {"max_complementarity", r.kkt.max_complementarity}};
  os << j.dump(2) << '\n';
}

void write_ydensity_csv(std::ostream& os, const SpaceTimeGrid& grid, const Vector& yd) {
  os << "# schema=ydensity/1 value is y_d on node x over (t_begin, t_end]\n";
  os << "x,t_begin,t_end,t_mid,value\n";
  const std::size_t nh = grid.num_nodes();
  for (std::size_t k = 1; k <= grid.num_steps(); ++k) {
    for (std::size_t j = 0; j < nh; ++j) {
      os << format_double(grid.node(j)) << ',' << format_double(grid.time(k - 1)) << ','
         << format_double(grid.time(k)) << ',' << format_double(grid.midpoint(k)) << ','
         << format_double(yd[static_cast<Eigen::Index>((k - 1) * nh + j)]) << '\n';
    }
  }
}

// -- commands -----------------------------------------------------------------------------

std::vector<RunReport> cmd_solve(const RunConfig& config, const OutputOptions& options) {
  if (config.alphas.size() != 1) throw ConfigError("solve takes a single alpha");
  const SpaceTimeGrid grid = make_grid(config.grid);
  const Vector yd = make_desired_state(config, grid);
  const Exponents ex = exponents_of(config);
  ensure_dir(config.out_dir);
  if (options.dump_ydensity) {
    auto os = open_out(config.out_dir / "ydensity.csv");
    write_ydensity_csv(os, grid, yd);
  }
  std::vector<RunReport> reports;
  for (Scheme s : config.schemes) {
    const DiscreteSystem sys = assemble_system(s, grid, config.region, ex);
    const std::string tag = to_string(s);
    if (options.dump_matrices) {
      auto os = open_out(config.out_dir / ("state_" + tag + ".mtx"));
      write_matrix_market(os, sys.state_matrix());
      auto om = open_out(config.out_dir / "mass.mtx");
      write_matrix_market(om, assemble_mass(grid));
      auto ok = open_out(config.out_dir / "stiffness.mtx");
      write_matrix_market(ok, assemble_stiffness(grid));
    }
    const Bounds bounds = bounds_of(config, config.alphas.front());
    SolveOutcome out;
    try {
      out = run_point(sys, yd, bounds, config.solver);
    } catch (const SolverError& e) {
      auto os = open_out(config.out_dir / ("iterations_" + tag + ".csv"));
      write_iterations_csv(os, e.best().log);
      throw;
    }
    const double threshold = zero_control_thresholds(sys, yd).first;
    {
      auto os = open_out(config.out_dir / ("report_" + tag + ".json"));
      write_report_json(os, out.report, sys, threshold);
    }
    {
      auto os = open_out(config.out_dir / ("atoms_" + tag + ".csv"));
      write_atoms_csv(os, out.report);
    }
    {
      auto os = open_out(config.out_dir / ("iterations_" + tag + ".csv"));
      write_iterations_csv(os, out.solve ? out.solve->log : std::vector<IterationRecord>{});
    }
    reports.push_back(std::move(out.report));
  }
  return reports;
}

std::vector<double> sweep_alphas(const RunConfig& config, double alpha_max) {
  if (config.alphas.size() > 1) {
    for (std::size_t i = 1; i < config.alphas.size(); ++i) {
      if (!(config.alphas[i] < config.alphas[i - 1])) {
        throw ConfigError("sweep alphas must be strictly descending");
      }
    }
    return config.alphas;
  }
  const double hi = config.sweep.alpha_max.value_or(alpha_max);
  const double lo = config.sweep.alpha_min;
  const std::size_t n = config.sweep.count;
  if (n == 1) return {hi};
  if (!(hi > lo)) throw ConfigError("sweep: alpha_max must exceed alpha_min");
  std::vector<double> a(n);
  const double l0 = std::log(hi);
  const double l1 = std::log(lo);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = std::exp(l0 + (l1 - l0) * static_cast<double>(i) / static_cast<double>(n - 1));
  }
  a.front() = hi;
  a.back() = lo;
  return a;
}

SweepResult cmd_alpha_sweep(const RunConfig& config, const OutputOptions& options) {
  const SpaceTimeGrid grid = make_grid(config.grid);
  const Vector yd = make_desired_state(config, grid);
  const Exponents ex = exponents_of(config);
  ensure_dir(config.out_dir);
  if (options.dump_ydensity) {
    auto os = open_out(config.out_dir / "ydensity.csv");
    write_ydensity_csv(os, grid, yd);
  }

  std::vector<DiscreteSystem> systems;
  SweepResult result;
  double top = 0;
  for (Scheme s : config.schemes) {
    systems.push_back(assemble_system(s, grid, config.region, ex));
    const double t = zero_control_thresholds(systems.back(), yd).first;
    result.thresholds.emplace_back(s, t);
    top = std::max(top, t);
  }
  {
    json j;
    j["schema"] = "sweep_summary/1";
    for (const auto& [s, t] : result.thresholds) j["alpha_bar"][to_string(s)] = t;
    auto os = open_out(config.out_dir / "sweep_summary.json");
    os << j.dump(2) << '\n';
  }
  if (!(top > 0)) throw ConfigError("sweep: zero-control threshold is 0 (y_d vanishes on the control region)");
  const std::vector<double> alphas = sweep_alphas(config, top);

  auto os = open_out(config.out_dir / "sweep.csv");
  os << "# schema=sweep/1 alpha,measure_norm,tracking_error dimensionless; path newton|closed_form\n";
  os << "scheme,alpha,measure_norm,tracking_error,duality_gap,iterations,num_atoms,path\n";
  std::ofstream log;
  if (options.log) {
    log = open_out(config.out_dir / "sweep_iterations.csv");
    log << "# schema=sweep_iterations/1\n";
    log << "scheme,alpha,iter,residual,step,update,active_upper,active_lower\n";
  }
  auto emit = [&](const SweepRow& row) {
    os << to_string(row.scheme) << ',' << format_double(row.alpha) << ','
       << format_double(row.measure_norm) << ',' << format_double(row.tracking_error) << ','
       << format_double(row.duality_gap) << ',' << row.iterations << ',' << row.num_atoms << ','
       << (row.closed_form ? "closed_form" : "newton") << '\n';
    os.flush();
    result.rows.push_back(row);
  };

  for (const DiscreteSystem& sys : systems) {
    std::optional<PredualIterate> warm;
    std::vector<double> list = alphas;
    if (list.back() != 0.0) list.push_back(0.0);
    for (double a : list) {
      const SolveOutcome out = run_point(sys, yd, bounds_of(config, a), config.solver, warm);
      if (out.solve) {
        warm = out.solve->iterate;
        if (options.log) {
          for (const IterationRecord& r : out.solve->log) {
            log << to_string(sys.scheme) << ',' << format_double(a) << ',' << r.iter << ','
                << format_double(r.residual) << ',' << format_double(r.step) << ','
                << format_double(r.update) << ',' << r.active_upper << ',' << r.active_lower
                << '\n';
          }
        }
      }
      SweepRow row;
      row.scheme = sys.scheme;
      row.alpha = a;
      row.measure_norm = out.report.measure_norm;
      row.tracking_error = out.report.tracking_error;
      row.duality_gap = out.report.duality_gap;
      row.iterations = out.report.iterations;
      row.num_atoms = count_atoms(out.report);
      row.closed_form = out.report.closed_form;
      emit(row);
    }
  }
  return result;
}

// -- convergence ---------------------------------------------------------------------------

std::string coupling_tag(Coupling c) {
  switch (c) {
    case Coupling::kTauHalfH:
      return "tau_h";
    case Coupling::kTauHalfHSquared:
      return "tau_h2";
    case Coupling::kExplicit:
      return "explicit";
  }
  return "explicit";
}

bool ConvergenceResult::all_ok() const {
  return std::all_of(rows.begin(), rows.end(), [](const ConvergenceRow& r) { return r.status == "ok"; });
}

double loglog_slope(const std::vector<double>& h, const std::vector<double>& err) {
  std::vector<double> lx;
  std::vector<double> ly;
  for (std::size_t i = 0; i < std::min(h.size(), err.size()); ++i) {
    if (h[i] > 0 && err[i] > 0 && std::isfinite(err[i])) {
      lx.push_back(std::log(h[i]));
      ly.push_back(std::log(err[i]));
    }
  }
  const std::size_t n = lx.size();
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  double mx = 0;
  double my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0;
  double sxx = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  return sxx > 0 ? sxy / sxx : std::numeric_limits<double>::quiet_NaN();
}

ConvergenceResult cmd_convergence(const RunConfig& config, Coupling coupling,
                                  const OutputOptions& options) {
  if (coupling == Coupling::kExplicit) throw ConfigError("convergence needs tau=h/2 or tau=h^2/2");
  if (config.data.kind != DataKind::kManufactured) {
    throw ConfigError("convergence needs data.kind = manufactured");
  }
  if (config.convergence.ladder.empty()) throw ConfigError("convergence.ladder is empty");
  const Exponents ex = exponents_of(config);
  const double alpha = config.data.abar;
  const double true_norm = std::abs(config.data.source.weight);
  Bounds bounds = bounds_of(config, alpha);
  ensure_dir(config.out_dir);
  const std::string tag = coupling_tag(coupling);

  std::ofstream log;
  if (options.log) {
    log = open_out(config.out_dir / ("convergence_iterations_" + tag + ".csv"));
    log << "# schema=convergence_iterations/1\n";
    log << "scheme,h,iter,residual,step,update,active_upper,active_lower\n";
  }

  ConvergenceResult result;
  for (Scheme s : config.schemes) {
    std::optional<DiscreteSystem> prev;
    std::optional<PredualIterate> prev_it;
    for (std::size_t n : config.convergence.ladder) {
      ConvergenceRow row;
      row.coupling = coupling;
      row.scheme = s;
      row.h = (config.grid.b - config.grid.a) / static_cast<double>(n);
      try {
        const SpaceTimeGrid grid = ladder_grid(config, n, coupling);
        row.h = grid.mesh_size();
        row.tau = grid.max_step();
        row.num_nodes = grid.num_nodes();
        row.num_steps = grid.num_steps();
        DiscreteSystem sys = assemble_system(s, grid, config.region, ex);
        const Vector yd = make_desired_state(config, grid);
        std::optional<PredualIterate> warm;
        if (config.convergence.warm_start && prev && prev_it) {
          warm = prolong_iterate(*prev, *prev_it, sys, bounds);
        }
        const SolveOutcome out = run_point(sys, yd, bounds, config.solver, warm);
        const StateSolution st = solve_state(sys, out.report.control);
        const Vector ytrue = sample_fourier_state(grid, config.data.source, config.data.n_terms).values;
        row.measure_norm = out.report.measure_norm;
        row.norm_error = std::abs(row.measure_norm - true_norm);
        row.state_error = tracking_error(sys, st.y, ytrue, ex.q);
        row.iterations = out.report.iterations;
        if (out.solve) {
          if (options.log) {
            for (const IterationRecord& r : out.solve->log) {
              log << to_string(s) << ',' << format_double(row.h) << ',' << r.iter << ','
                  << format_double(r.residual) << ',' << format_double(r.step) << ','
                  << format_double(r.update) << ',' << r.active_upper << ',' << r.active_lower
                  << '\n';
            }
          }
          prev_it = out.solve->iterate;
          prev.emplace(std::move(sys));
        }
      } catch (const ConfigError&) {
        throw;
      } catch (const std::exception& e) {
        row.status = std::string("failed: ") + e.what();
        std::replace(row.status.begin(), row.status.end(), ',', ';');
        std::replace(row.status.begin(), row.status.end(), '\n', ' ');
      }
      result.rows.push_back(std::move(row));
    }
    std::vector<double> hs;
    std::vector<double> en;
    std::vector<double> es;
    for (const ConvergenceRow& r : result.rows) {
      if (r.scheme != s || r.status != "ok") continue;
      hs.push_back(r.h);
      en.push_back(r.norm_error);
      es.push_back(r.state_error);
    }
    result.slopes.push_back({coupling, s, "norm_error", loglog_slope(hs, en), hs.size()});
    result.slopes.push_back({coupling, s, "state_error", loglog_slope(hs, es), hs.size()});
  }

  auto os = open_out(config.out_dir / ("convergence_" + tag + ".csv"));
  os << "# schema=convergence/1 h,tau dimensionless; norm_error=| ||u|| - ||u_true|| |; "
        "state_error=lumped L^q distance to y_true; slope rows fit log(err) against log(h)\n";
  os << "kind,coupling,scheme,h,tau,n_h,n_tau,measure_norm,norm_error,state_error,iterations,"
        "status,quantity,slope,levels\n";
  for (const ConvergenceRow& r : result.rows) {
    os << "level," << to_string(r.coupling) << ',' << to_string(r.scheme) << ','
       << format_double(r.h) << ',' << format_double(r.tau) << ',' << r.num_nodes << ','
       << r.num_steps << ',' << format_double(r.measure_norm) << ',' << format_double(r.norm_error)
       << ',' << format_double(r.state_error) << ',' << r.iterations << ',' << r.status
       << ",,,\n";
  }
  for (const SlopeRow& r : result.slopes) {
    os << "slope," << to_string(r.coupling) << ',' << to_string(r.scheme) << ",,,,,,,,,,"
       << r.quantity << ',' << format_double(r.slope) << ',' << r.levels << '\n';
  }
  return result;
}

}  // namespace spheat

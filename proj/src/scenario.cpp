#include "msym/scenario.hpp"

#include <Eigen/LU>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"
#include "msym/conservation.hpp"
#include "msym/dynamics.hpp"
#include "msym/errors.hpp"
#include "msym/geometry.hpp"

namespace msym {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <class T>
T get(const json& j, const std::string& key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("bad value for '" + key + "' in " + where);
  }
}

template <class T>
void read_opt(const json& j, const std::string& key, T& out, const std::string& where) {
  if (j.contains(key)) out = get<T>(j, key, where);
}

MetricSpec parse_metric(const json& j, const std::string& where) {
  MetricSpec m;
  if (j.is_string()) {
    m.kind = j.get<std::string>();
  } else {
    reject_unknown(j, {"kind", "c", "path"}, where);
    m.kind = get<std::string>(j, "kind", where);
    read_opt(j, "c", m.c, where);
    read_opt(j, "path", m.path, where);
  }
  static const std::set<std::string> kinds{"euclidean", "polar", "conformal_constant", "table"};
  if (!kinds.count(m.kind)) throw ConfigError("unknown metric kind '" + m.kind + "' in " + where);
  if (m.kind == "conformal_constant" && !(m.c > 0.0)) throw ConfigError(where + ": conformal factor must be positive");
  if (m.kind == "table" && m.path.empty()) throw ConfigError(where + ": table metric needs a path");
  return m;
}

void apply_defaults(ScenarioConfig& c) {
  const double two_pi = 2.0 * M_PI;
  if (c.scenario == "elastic_bar_1d") {
    c.energy.kind = "stvenant";
    c.nodes = {17};
    c.lo = {0.0};
    c.hi = {1.0};
    c.boundary = {BoundaryKind::fixed};
    c.dt = 0.03;
    c.profile = "sine";
    c.amplitude = 0.02;
  } else if (c.scenario == "barotropic_gas_2d") {
    c.energy.kind = "barotropic_quadratic";
    c.nodes = {32, 32};
    c.lo = {0.0, 0.0};
    c.hi = {two_pi, two_pi};
    c.boundary = {BoundaryKind::periodic, BoundaryKind::periodic};
    c.dt = 0.025;
    c.profile = "perturbed";
    c.amplitude = 0.05;
    c.velocity = 0.1;
  } else if (c.scenario == "incompressible_2d") {
    c.energy.kind = "constant";
    c.incompressible = true;
    c.constrained = true;
    c.nodes = {32, 32};
    c.lo = {0.0, 0.0};
    c.hi = {two_pi, two_pi};
    c.boundary = {BoundaryKind::periodic, BoundaryKind::periodic};
    c.dt = 0.004;
    c.profile = "taylor_green";
    c.velocity = 1.0;
  } else if (c.scenario == "metric_check_polar") {
    c.energy.kind = "barotropic_quadratic";
    c.metric_G.kind = "polar";
    c.metric_g.kind = "polar";
    c.nodes = {9, 16};
    c.lo = {1.0, 0.0};
    c.hi = {2.0, two_pi};
    c.boundary = {BoundaryKind::fixed, BoundaryKind::periodic};
    c.dt = 0.02;
    c.profile = "sine";
    c.amplitude = 0.02;
  }
}

BoundaryKind parse_boundary(const std::string& s) {
  if (s == "periodic") return BoundaryKind::periodic;
  if (s == "fixed") return BoundaryKind::fixed;
  throw ConfigError("boundary must be 'periodic' or 'fixed', got '" + s + "'");
}

std::string boundary_name(BoundaryKind b) { return b == BoundaryKind::periodic ? "periodic" : "fixed"; }

json metric_json(const MetricSpec& m) {
  json j{{"kind", m.kind}};
  if (m.kind == "conformal_constant") j["c"] = m.c;
  if (m.kind == "table") j["path"] = m.path;
  return j;
}

json config_json(const ScenarioConfig& c) {
  json boundary = json::array();
  for (auto b : c.boundary) boundary.push_back(boundary_name(b));
  return json{
      {"scenario", c.scenario},
      {"material",
       {{"rho", c.rho},
        {"energy",
         {{"kind", c.energy.kind},
          {"value", c.energy.value},
          {"k", c.energy.k},
          {"lambda", c.energy.lame_lambda},
          {"mu", c.energy.lame_mu}}},
        {"metric", {{"G", metric_json(c.metric_G)}, {"g", metric_json(c.metric_g)}}},
        {"incompressible", c.incompressible}}},
      {"grid", {{"nodes", c.nodes}, {"lo", c.lo}, {"hi", c.hi}, {"boundary", boundary}, {"dt", c.dt}}},
      {"initial", {{"profile", c.profile}, {"amplitude", c.amplitude}, {"velocity", c.velocity}}},
      {"solver",
       {{"newton_tol", c.solver.newton_tol},
        {"max_iter", c.solver.max_iter},
        {"linear_solver", c.solver.linear_solver == LinearSolver::direct_lu ? "direct_lu" : "conjugate_gradient"},
        {"krylov_tol", c.solver.krylov_tol}}},
      {"integration",
       {{"n_steps", c.n_steps},
        {"constrained", c.constrained},
        {"diagnostics_cadence", c.diagnostics_cadence},
        {"snapshot_cadence", c.snapshot_cadence}}},
      {"verify", {{"samples", c.samples}}},
      {"seed", c.seed},
      {"output_dir", c.output_dir},
  };
}

void validate(const ScenarioConfig& c) {
  static const std::set<std::string> energies{"constant", "barotropic_quadratic", "barotropic_log", "stvenant",
                                              "neohookean"};
  static const std::set<std::string> profiles{"rest", "sine", "perturbed", "taylor_green", "uniform_flow"};
  if (!energies.count(c.energy.kind)) throw ConfigError("unknown energy kind '" + c.energy.kind + "'");
  if (!profiles.count(c.profile)) throw ConfigError("unknown initial profile '" + c.profile + "'");
  if (!(c.rho > 0.0)) throw ConfigError("rho must be positive");
  const std::size_t n = c.nodes.size();
  if (n < 1 || n > 2) throw ConfigError("grid must have 1 or 2 spatial axes");
  if (c.lo.size() != n || c.hi.size() != n || c.boundary.size() != n)
    throw ConfigError("grid nodes, lo, hi and boundary must have equal length");
  SpaceTimeGrid g;
  g.n_space = static_cast<int>(n);
  g.nodes = c.nodes;
  g.lo = c.lo;
  g.hi = c.hi;
  g.boundary = c.boundary;
  g.dt = c.dt;
  g.validate();
  c.solver.validate();
  if (c.n_steps < 0) throw ConfigError("n_steps must be non-negative");
  if (c.diagnostics_cadence < 0 || c.snapshot_cadence < 0) throw ConfigError("cadences must be non-negative");
  if (c.samples < 1) throw ConfigError("verify.samples must be at least 1");
  if (c.constrained && !c.incompressible) throw ConfigError("constrained integration needs an incompressible material");
  if (c.incompressible && n != 2 && c.scenario != "custom")
    throw ConfigError("incompressible scenarios are two dimensional");
  for (const MetricSpec* m : {&c.metric_G, &c.metric_g}) {
    if (m->kind == "polar" && n != 2) throw ConfigError("the polar metric needs a 2D grid");
  }
  if ((c.metric_G.kind == "polar") && c.lo[0] <= 0.0) throw ConfigError("polar charts need r > 0");
  if ((c.energy.kind == "stvenant" || c.energy.kind == "neohookean") && !(c.energy.lame_mu > 0.0))
    throw ConfigError("elastic energies need mu > 0");
  if (c.energy.kind.rfind("barotropic", 0) == 0 && !(c.energy.k > 0.0))
    throw ConfigError("barotropic stiffness k must be positive");
}

MetricField make_metric(const MetricSpec& m, int dim) {
  if (m.kind == "euclidean") return MetricField::euclidean(dim);
  if (m.kind == "polar") return MetricField::polar();
  if (m.kind == "conformal_constant") return MetricField::conformal_constant(dim, m.c);
  return MetricField::from_table(read_metric_table(m.path));
}

StoredEnergy make_energy(const EnergySpec& e) {
  if (e.kind == "constant") return StoredEnergy::constant(e.value);
  if (e.kind == "barotropic_quadratic") return StoredEnergy::barotropic_quadratic(e.k);
  if (e.kind == "barotropic_log") return StoredEnergy::barotropic_log(e.k);
  if (e.kind == "stvenant") return StoredEnergy::stvenant(e.lame_lambda, e.lame_mu);
  return StoredEnergy::neohookean(e.lame_mu, e.lame_lambda);
}

}  // namespace

ScenarioConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("configuration is not valid JSON: ") + e.what());
  }
  reject_unknown(j, {"scenario", "material", "grid", "initial", "solver", "integration", "verify", "seed", "output_dir"},
                 "top level");
  ScenarioConfig c;
  c.scenario = get<std::string>(j, "scenario", "top level");
  static const std::set<std::string> scenarios{"elastic_bar_1d", "barotropic_gas_2d", "incompressible_2d",
                                               "metric_check_polar", "custom"};
  if (!scenarios.count(c.scenario)) throw ConfigError("unknown scenario '" + c.scenario + "'");
  apply_defaults(c);

  if (j.contains("material")) {
    const json& m = j["material"];
    reject_unknown(m, {"rho", "energy", "metric", "incompressible"}, "material");
    read_opt(m, "rho", c.rho, "material");
    read_opt(m, "incompressible", c.incompressible, "material");
    if (m.contains("energy")) {
      const json& e = m["energy"];
      reject_unknown(e, {"kind", "value", "k", "lambda", "mu"}, "material.energy");
      read_opt(e, "kind", c.energy.kind, "material.energy");
      read_opt(e, "value", c.energy.value, "material.energy");
      read_opt(e, "k", c.energy.k, "material.energy");
      read_opt(e, "lambda", c.energy.lame_lambda, "material.energy");
      read_opt(e, "mu", c.energy.lame_mu, "material.energy");
    }
    if (m.contains("metric")) {
      const json& mm = m["metric"];
      reject_unknown(mm, {"G", "g"}, "material.metric");
      if (mm.contains("G")) c.metric_G = parse_metric(mm["G"], "material.metric.G");
      if (mm.contains("g")) c.metric_g = parse_metric(mm["g"], "material.metric.g");
    }
  }
  if (j.contains("grid")) {
    const json& g = j["grid"];
    reject_unknown(g, {"nodes", "lo", "hi", "boundary", "dt"}, "grid");
    read_opt(g, "nodes", c.nodes, "grid");
    read_opt(g, "lo", c.lo, "grid");
    read_opt(g, "hi", c.hi, "grid");
    read_opt(g, "dt", c.dt, "grid");
    if (g.contains("boundary")) {
      c.boundary.clear();
      for (const auto& b : get<std::vector<std::string>>(g, "boundary", "grid")) c.boundary.push_back(parse_boundary(b));
    }
  }
  if (j.contains("initial")) {
    const json& i = j["initial"];
    reject_unknown(i, {"profile", "amplitude", "velocity"}, "initial");
    read_opt(i, "profile", c.profile, "initial");
    read_opt(i, "amplitude", c.amplitude, "initial");
    read_opt(i, "velocity", c.velocity, "initial");
  }
  if (j.contains("solver")) {
    const json& s = j["solver"];
    reject_unknown(s, {"newton_tol", "max_iter", "linear_solver", "krylov_tol"}, "solver");
    read_opt(s, "newton_tol", c.solver.newton_tol, "solver");
    read_opt(s, "max_iter", c.solver.max_iter, "solver");
    read_opt(s, "krylov_tol", c.solver.krylov_tol, "solver");
    if (s.contains("linear_solver")) {
      const auto ls = get<std::string>(s, "linear_solver", "solver");
      if (ls == "direct_lu") c.solver.linear_solver = LinearSolver::direct_lu;
      else if (ls == "conjugate_gradient") c.solver.linear_solver = LinearSolver::conjugate_gradient;
      else throw ConfigError("linear_solver must be 'direct_lu' or 'conjugate_gradient'");
    }
  }
  if (j.contains("integration")) {
    const json& it = j["integration"];
    reject_unknown(it, {"n_steps", "constrained", "diagnostics_cadence", "snapshot_cadence"}, "integration");
    read_opt(it, "n_steps", c.n_steps, "integration");
    read_opt(it, "constrained", c.constrained, "integration");
    read_opt(it, "diagnostics_cadence", c.diagnostics_cadence, "integration");
    read_opt(it, "snapshot_cadence", c.snapshot_cadence, "integration");
  }
  if (j.contains("verify")) {
    reject_unknown(j["verify"], {"samples"}, "verify");
    read_opt(j["verify"], "samples", c.samples, "verify");
  }
  read_opt(j, "seed", c.seed, "top level");
  read_opt(j, "output_dir", c.output_dir, "top level");
  validate(c);
  return c;
}

ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open configuration " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

ScenarioConfig refined(const ScenarioConfig& cfg, int k) {
  if (k < 1) throw ConfigError("refinement factor must be at least 1");
  ScenarioConfig c = cfg;
  for (std::size_t a = 0; a < c.nodes.size(); ++a)
    c.nodes[a] = c.boundary[a] == BoundaryKind::periodic ? c.nodes[a] * k : (c.nodes[a] - 1) * k + 1;
  c.dt /= k;
  c.n_steps *= k;
  c.diagnostics_cadence *= k;
  c.snapshot_cadence *= k;
  return c;
}

Scenario build_scenario(const ScenarioConfig& cfg) {
  validate(cfg);
  Scenario s;
  const int n = static_cast<int>(cfg.nodes.size());
  s.grid.n_space = n;
  s.grid.nodes = cfg.nodes;
  s.grid.lo = cfg.lo;
  s.grid.hi = cfg.hi;
  s.grid.boundary = cfg.boundary;
  s.grid.dt = cfg.dt;
  s.model = MaterialModel::uniform(cfg.rho, make_energy(cfg.energy), make_metric(cfg.metric_G, n),
                                   make_metric(cfg.metric_g, n), cfg.incompressible);
  s.constrained = cfg.constrained;

  const int nn = s.grid.num_nodes();
  Eigen::MatrixXd phi0(n, nn), V0 = Eigen::MatrixXd::Zero(n, nn);
  std::vector<double> kappa(n), base(n);
  for (int k = 0; k < n; ++k) {
    const double L = cfg.hi[k] - cfg.lo[k];
    kappa[k] = (cfg.boundary[k] == BoundaryKind::periodic ? 2.0 : 1.0) * M_PI / L;
  }
  for (int node = 0; node < nn; ++node) {
    const Vec x = s.grid.node_coord(node);
    phi0.col(node) = x;
    Vec xi(n);
    for (int k = 0; k < n; ++k) xi[k] = kappa[k] * (x[k] - cfg.lo[k]);
    if (cfg.profile == "sine") {
      double bump = 1.0;
      for (int k = 0; k < n; ++k) bump *= std::sin(xi[k]);
      for (int a = 0; a < n; ++a) phi0(a, node) += cfg.amplitude * (n == 1 ? std::sin(xi[0]) : bump);
    } else if (cfg.profile == "perturbed") {
      phi0(0, node) += cfg.amplitude * std::sin(xi[0]);
      if (n > 1) phi0(1, node) += cfg.amplitude * std::sin(xi[0] + xi[1]);
      V0(0, node) = cfg.velocity * (n > 1 ? std::cos(xi[1]) : std::cos(xi[0])) + 0.5 * cfg.velocity;
      if (n > 1) V0(1, node) = cfg.velocity * std::sin(xi[0]);
    } else if (cfg.profile == "taylor_green") {
      if (n != 2) throw ConfigError("the taylor_green profile is two dimensional");
      V0(0, node) = cfg.velocity * std::sin(xi[0]) * std::cos(xi[1]);
      V0(1, node) = -cfg.velocity * std::cos(xi[0]) * std::sin(xi[1]);
    } else if (cfg.profile == "uniform_flow") {
      for (int a = 0; a < n; ++a) V0(a, node) = cfg.velocity;
    }
  }
  s.initial = initialize(s.model, s.grid, phi0, V0, deformation_offsets(s.grid), s.constrained, cfg.solver);
  return s;
}

bool VerifyReport::all_pass() const {
  for (const auto& c : checks)
    if (!c.pass) return false;
  return true;
}

namespace {

struct Sampler {
  std::mt19937_64 rng;
  const ScenarioConfig& cfg;
  std::uniform_real_distribution<double> uni{-1.0, 1.0};

  JetSample jet(int n) {
    Vec x(n), y(n), v0(n);
    for (int k = 0; k < n; ++k) {
      const double mid = 0.5 * (cfg.lo[k] + cfg.hi[k]), half = 0.5 * (cfg.hi[k] - cfg.lo[k]);
      x[k] = mid + 0.8 * half * uni(rng);
      y[k] = x[k] + 0.05 * half * uni(rng);
      v0[k] = uni(rng);
    }
    Mat F = Mat::Identity(n, n);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) F(a, b) += 0.25 * uni(rng);
    if (F.determinant() < 0.3) F = Mat::Identity(n, n) + 0.1 * (F - Mat::Identity(n, n));
    JetSample s = make_jet(x, 0.0, y, v0, F);
    s.lambda = uni(rng);
    Vec beta(n + 1);
    for (int k = 0; k <= n; ++k) beta[k] = uni(rng);
    s.beta = beta;
    return s;
  }

  Mat unimodular(int n) {
    Mat A = Mat::Identity(n, n);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) A(a, b) += 0.3 * uni(rng);
    double d = A.determinant();
    if (d < 0.2) {
      A = Mat::Identity(n, n);
      d = 1.0;
    }
    A.row(0) /= d;
    return A;
  }
};

double rel(double a, double scale) { return a / std::max(1.0, scale); }

ConfigurationField oracle_section(const SpaceTimeGrid& grid, double eps, bool lambda) {
  const int n = grid.n_space;
  auto fn = [&](const Vec& x, double t) {
    Vec y = x;
    for (int a = 0; a < n; ++a) {
      double arg = 0.7 * t + 0.3 * a;
      for (int k = 0; k < n; ++k) {
        const double L = grid.hi[k] - grid.lo[k];
        arg += (2.0 * M_PI / L) * (k + a + 1) * (x[k] - grid.lo[k]) / (grid.boundary[k] == BoundaryKind::fixed ? 2.0 : 1.0);
      }
      y[a] += eps * std::sin(arg);
    }
    return y;
  };
  ConfigurationField f = sample_section(grid, n, 5, fn, deformation_offsets(grid));
  if (lambda) {
    f.lambda_layout = LambdaLayout::node;
    f.lambda.resize(5);
    for (int l = 0; l < 5; ++l) {
      f.lambda[l].resize(grid.num_nodes());
      for (int node = 0; node < grid.num_nodes(); ++node) {
        const Vec x = grid.node_coord(node);
        double v = 0.3 * std::cos(0.5 * l * grid.dt);
        for (int k = 0; k < n; ++k) v *= std::cos(2.0 * M_PI * (x[k] - grid.lo[k]) / (grid.hi[k] - grid.lo[k]));
        f.lambda[l][node] = v;
      }
    }
  }
  return f;
}

// Max gap between the two residual forms relative to the residual scale.
double oracle_gap(const MaterialModel& model, const SpaceTimeGrid& grid) {
  const ConfigurationField f = oracle_section(grid, 0.05, model.incompressible);
  const ELResidual gen = el_residual_general(model, f, grid, 2);
  Eigen::MatrixXd spec;
  if (model.incompressible) {
    spec = el_residual_constrained(model, ConstrainedState{f}, grid, 2).el.values;
  } else if (model.W.barotropic()) {
    spec = el_residual_barotropic(model, f, grid, 2).values;
  } else if (model.W.elastic()) {
    spec = el_residual_elastic(model, f, grid, 2).values;
  } else {
    spec = el_residual_continuum(model, f, grid, 2).values;
  }
  double worst = 0.0, scale = 0.0;
  for (int node = 0; node < grid.num_nodes(); ++node)
    if (gen.interior[node]) {
      worst = std::max(worst, (gen.values.col(node) - spec.col(node)).cwiseAbs().maxCoeff());
      scale = std::max(scale, spec.col(node).cwiseAbs().maxCoeff());
    }
  return rel(worst, scale);
}

}  // namespace

VerifyReport run_verify(const ScenarioConfig& cfg) {
  validate(cfg);
  VerifyReport rep;
  rep.scenario = cfg.scenario;
  const int n = static_cast<int>(cfg.nodes.size());
  ScenarioConfig quiet = cfg;
  quiet.n_steps = 0;
  const Scenario sc = build_scenario(quiet);
  const MaterialModel& model = sc.model;
  Sampler smp{std::mt19937_64(cfg.seed), cfg};
  auto add = [&](const std::string& name, double value, double tol) {
    rep.checks.push_back(CheckResult{name, value, tol, std::isfinite(value) && value <= tol});
  };

  add("grid_valid", 0.0, 0.0);
  const bool elastic = model.W.elastic(), barotropic = model.W.barotropic();
  const bool closed_relabel =
      model.incompressible ? model.W.kind == EnergyKind::constant : barotropic;
  double sym = 0.0, piola = 0.0, baro = 0.0, partial = 0.0, cartan = 0.0, noether = 0.0, time_cur = 0.0;
  for (int i = 0; i < cfg.samples; ++i) {
    const JetSample s = smp.jet(n);
    const Mat sigma = cauchy_stress(model, s);
    sym = std::max(sym, rel((sigma - sigma.transpose()).cwiseAbs().maxCoeff(), sigma.cwiseAbs().maxCoeff()));
    if (elastic) {
      const Mat P = piola_kirchhoff(model, s), T = piola_transform(model, s);
      piola = std::max(piola, (P - T).cwiseAbs().maxCoeff() / std::max(1e-300, P.cwiseAbs().maxCoeff()));
    }
    if (barotropic) {
      const Mat expect = -material_pressure(model, s) * model.g.eval(s.y).inverse();
      baro = std::max(baro, rel((sigma - expect).cwiseAbs().maxCoeff(), expect.cwiseAbs().maxCoeff()));
    }
    const EnergyPartials ep = energy_partials(model, s.x, s.y, s.F());
    for (int a = 0; a < n; ++a)
      for (int k = 0; k < n; ++k) {
        Mat Fp = s.F(), Fm = s.F();
        Fp(a, k) += 1e-6;
        Fm(a, k) -= 1e-6;
        const double fd = (stored_energy(model, s.x, s.y, Fp) - stored_energy(model, s.x, s.y, Fm)) / 2e-6;
        partial = std::max(partial, std::abs(fd - ep.dF(a, k)) / std::max(1.0, std::abs(fd)));
      }
    const double L = model.incompressible ? augmented_lagrangian(model, s) : lagrangian_density(model, s);
    cartan = std::max(cartan, rel(std::abs(L - cartan_pullback(cartan_coefficients(model, s), s)), std::abs(L)));
    if (n == 2 && closed_relabel) {
      const SymmetryGenerator gen = SymmetryGenerator::sine_stream();
      const NoetherCurrent a = momentum_map(model, s, gen);
      const NoetherCurrent b =
          model.incompressible ? incompressible_current(model, s, gen) : barotropic_current(model, s, gen);
      const double scale = std::max(std::abs(a.J0), a.Jk.cwiseAbs().maxCoeff());
      noether = std::max(noether, rel(std::max(std::abs(a.J0 - b.J0), (a.Jk - b.Jk).cwiseAbs().maxCoeff()), scale));
    }
    {
      const SymmetryGenerator gen = SymmetryGenerator::time_translation(1.0);
      const NoetherCurrent a = momentum_map(model, s, gen);
      const NoetherCurrent b = time_translation_current(model, s, 1.0);
      const double scale = std::max(std::abs(a.J0), a.Jk.cwiseAbs().maxCoeff());
      time_cur = std::max(time_cur, rel(std::max(std::abs(a.J0 - b.J0), (a.Jk - b.Jk).cwiseAbs().maxCoeff()), scale));
    }
  }
  add("stress_symmetry", sym, 1e-13);
  add("energy_partials_fd", partial, 1e-5);
  add("cartan_pullback", cartan, 1e-12);
  add("time_translation_current", time_cur, 1e-12);
  if (elastic) add("piola_identity", piola, 1e-8);
  if (barotropic) add("barotropic_stress_closed_form", baro, 1e-10);
  if (n == 2 && closed_relabel) add("noether_closed_form", noether, 1e-12);

  // Relabeling equivariance holds for energies that see F only through J.
  if (!elastic && model.G.is_constant()) {
    double eq = 0.0;
    for (int i = 0; i < 10; ++i) {
      const JetSample s = smp.jet(n);
      const Mat A = smp.unimodular(n);
      Vec b(n);
      for (int k = 0; k < n; ++k) b[k] = 0.1 * smp.uni(smp.rng);
      const JetSample t = relabel_jet(s, A, b);
      const double L0 = model.incompressible ? augmented_lagrangian(model, s) : lagrangian_density(model, s);
      const double L1 = model.incompressible ? augmented_lagrangian(model, t) : lagrangian_density(model, t);
      eq = std::max(eq, rel(std::abs(L0 - L1), std::abs(L0)));
    }
    add("relabeling_equivariance", eq, 1e-12);
  }

  if (model.G.kind() == MetricField::Kind::polar || model.g.kind() == MetricField::Kind::polar) {
    double worst = 0.0;
    const MetricField polar = MetricField::polar();
    for (int i = 0; i < cfg.samples; ++i) {
      Vec x(2);
      x << 1.0 + 0.5 * (smp.uni(smp.rng) + 1.0), M_PI * smp.uni(smp.rng);
      const ChristoffelValue G = christoffel(polar, x);
      const double r = x[0];
      Mat e0 = Mat::Zero(2, 2), e1 = Mat::Zero(2, 2);
      e0(1, 1) = -r;
      e1(0, 1) = e1(1, 0) = 1.0 / r;
      worst = std::max({worst, (G.gamma[0] - e0).cwiseAbs().maxCoeff(), (G.gamma[1] - e1).cwiseAbs().maxCoeff()});
    }
    add("christoffel_oracle", worst, 1e-12);
  }

  // Cross-oracle between the general and specialised EL residuals on three grids;
  // least-squares order over the three.
  {
    std::vector<double> gaps;
    SpaceTimeGrid g = sc.grid;
    for (int level = 0; level < 3; ++level) {
      const int cells = 32 << level;
      for (int k = 0; k < n; ++k) g.nodes[k] = g.boundary[k] == BoundaryKind::periodic ? cells : cells + 1;
      g.dt = 0.25 * g.spacing(0);
      gaps.push_back(oracle_gap(model, g));
    }
    const double order = gaps[2] > 0.0 && gaps[0] > 0.0 ? 0.5 * std::log2(gaps[0] / gaps[2]) : 99.0;
    add("el_cross_oracle_fine_gap", gaps[2], 1e-2);
    rep.checks.push_back(CheckResult{"el_cross_oracle_order", order, 1.8, order >= 1.8 || gaps[0] < 1e-10});
  }

  if (sc.constrained) {
    Eigen::VectorXd C = induced_constraint(sc.initial, sc.grid, model, 1);
    add("initial_constraint", C.cwiseAbs().maxCoeff(), 10.0 * cfg.solver.newton_tol);
  }
  return rep;
}

void write_verify_report(const VerifyReport& report, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  json checks = json::array();
  for (const auto& c : report.checks)
    checks.push_back({{"name", c.name}, {"value", c.value}, {"tolerance", c.tolerance}, {"pass", c.pass}});
  const json j{{"command", "verify"}, {"scenario", report.scenario}, {"pass", report.all_pass()}, {"checks", checks}};
  std::ofstream(out_dir / "report.json") << j.dump(2) << "\n";
}

RunOutcome run_scenario(const ScenarioConfig& cfg, const std::filesystem::path& out_dir) {
  const Scenario sc = build_scenario(cfg);
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "snapshots");
  RunOutcome out;
  json snapshots = json::array();
  json series = json::array();

  auto snapshot = [&](const ConfigurationField& f, int level) {
    std::ostringstream name;
    name << "snapshots/level_" << std::setw(6) << std::setfill('0') << (f.first_level + level) << ".csv";
    write_snapshot_csv((out_dir / name.str()).string(), sc.grid, f, level);
    snapshots.push_back({{"level", f.first_level + level}, {"time", (f.first_level + level) * sc.grid.dt},
                         {"path", name.str()}});
  };
  snapshot(sc.initial, 0);

  const bool fluid2d = sc.grid.n_space == 2 && sc.grid.all_periodic() && sc.model.W.barotropic() &&
                       sc.model.G.is_constant() && !sc.model.incompressible;
  const bool continuity = (sc.model.W.barotropic() || sc.model.W.elastic()) && !sc.model.incompressible;
  ConfigurationField window = sc.initial;
  long done = 0;
  try {
    for (long s = 0; s < cfg.n_steps; ++s) {
      StepReport rep;
      window = step(sc.model, window, sc.grid, cfg.solver, sc.constrained, &rep);
      ++done;
      out.max_constraint = std::max(out.max_constraint, rep.constraint);
      const int k = window.levels() - 2;
      const long cad = std::max<long>(1, cfg.diagnostics_cadence);
      if (cfg.diagnostics_cadence > 0 && (s + 1) % cad == 0) {
        json row{{"level", rep.level},
                 {"time", rep.level * sc.grid.dt},
                 {"newton_iterations", rep.iterations},
                 {"residual", rep.residual},
                 {"constraint", rep.constraint},
                 {"discrete_energy", discrete_energy(sc.model, sc.grid, window, k)}};
        const Vec P = discrete_momentum(sc.model, sc.grid, window, k);
        row["discrete_momentum"] = std::vector<double>(P.data(), P.data() + P.size());
        if (window.levels() >= 3) {
          if (continuity)
            row["energy_continuity_max"] = energy_continuity_residual(sc.model, window, sc.grid, window.levels() - 2).worst;
          if (fluid2d) {
            const auto d = noether_divergence(sc.model, window, sc.grid, SymmetryGenerator::sine_stream(),
                                              window.levels() - 2);
            row["relabeling_divergence_max"] = d.worst;
          }
        }
        series.push_back(row);
      }
      if (cfg.snapshot_cadence > 0 && (rep.level - 1) % cfg.snapshot_cadence == 0 && rep.level - 1 > 0)
        snapshot(window, window.levels() - 2);
      if (window.levels() > 3) {
        window.phi.erase(window.phi.begin());
        if (!window.lambda.empty()) window.lambda.erase(window.lambda.begin());
        ++window.first_level;
      }
    }
  } catch (const NewtonDiverged& e) {
    out.exit_code = 1;
    out.failed_step = e.step();
    out.message = e.what();
  } catch (const Error& e) {
    out.exit_code = 1;
    out.failed_step = done + 2;
    out.message = e.what();
  }
  if (out.exit_code == 0) snapshot(window, window.levels() - 1);
  out.steps_done = done;

  json report{{"command", "run"},
              {"scenario", cfg.scenario},
              {"status", out.exit_code == 0 ? "ok" : "failed"},
              {"steps_completed", done},
              {"max_constraint", out.max_constraint}};
  if (out.failed_step) report["failed_step"] = *out.failed_step;
  if (!out.message.empty()) report["message"] = out.message;
  std::ofstream(out_dir / "report.json") << report.dump(2) << "\n";
  std::ofstream(out_dir / "conservation.json") << json{{"scenario", cfg.scenario}, {"series", series}}.dump(2) << "\n";

  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::ostringstream stamp;
  stamp << std::put_time(std::gmtime(&now), "%Y-%m-%dT%H:%M:%SZ");
  const json manifest{{"metadata", {{"created_utc", stamp.str()}, {"tool", "msym"}}},
                      {"config", config_json(cfg)},
                      {"dt", sc.grid.dt},
                      {"snapshots", snapshots},
                      {"conservation", "conservation.json"},
                      {"report", "report.json"}};
  std::ofstream(out_dir / "manifest.json") << manifest.dump(2) << "\n";
  return out;
}

}  // namespace msym

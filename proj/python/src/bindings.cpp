#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "msym/conservation.hpp"
#include "msym/dynamics.hpp"
#include "msym/errors.hpp"
#include "msym/integrator.hpp"
#include "msym/material.hpp"
#include "msym/scenario.hpp"

namespace py = pybind11;
using namespace msym;

namespace {

template <class E>
void register_error(py::module_& m, const char* name, py::handle base) {
  py::register_exception<E>(m, name, base);
}

py::dict residual_dict(const ELResidual& r) {
  py::dict d;
  d["values"] = r.values;
  d["interior"] = std::vector<bool>(r.interior.begin(), r.interior.end());
  d["level"] = r.level;
  d["worst"] = r.worst;
  return d;
}

py::dict divergence_dict(const DivergenceField& f) {
  py::dict d;
  d["values"] = f.values;
  d["interior"] = std::vector<bool>(f.interior.begin(), f.interior.end());
  d["worst"] = f.worst;
  return d;
}

}  // namespace

PYBIND11_MODULE(_msym, m) {
  m.doc() = "Multisymplectic continuum mechanics: residuals, integrator and Noether currents.";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  register_error<SingularMetric>(m, "SingularMetric", base);
  register_error<DomainError>(m, "DomainError", base);
  register_error<ShapeError>(m, "ShapeError", base);
  register_error<IndexError>(m, "IndexError", base);
  register_error<NonRegular>(m, "NonRegular", base);
  register_error<WrongEnergyKind>(m, "WrongEnergyKind", base);
  register_error<NonDifferentiable>(m, "NonDifferentiable", base);
  register_error<MissingMultiplier>(m, "MissingMultiplier", base);
  register_error<SingularSaddle>(m, "SingularSaddle", base);
  register_error<ConfigError>(m, "ConfigError", base);
  register_error<NewtonDiverged>(m, "NewtonDiverged", base);

  // geometry
  py::class_<MetricField>(m, "MetricField")
      .def_static("euclidean", &MetricField::euclidean, py::arg("dim"))
      .def_static("conformal_constant", &MetricField::conformal_constant, py::arg("dim"), py::arg("c"))
      .def_static("polar", &MetricField::polar, py::arg("r_min") = 1e-3)
      .def_property_readonly("dim", &MetricField::dim)
      .def_property_readonly("label", &MetricField::label)
      .def("eval", &MetricField::eval, py::arg("x"))
      .def("deriv", [](const MetricField& g, const Vec& x) {
        const auto d = g.deriv(x);
        return std::vector<Mat>(d.begin(), d.begin() + g.dim());
      });
  m.def("christoffel", [](const MetricField& g, const Vec& x) {
    const ChristoffelValue c = christoffel(g, x);
    return std::vector<Mat>(c.gamma.begin(), c.gamma.begin() + c.dim);
  }, py::arg("metric"), py::arg("x"), "gamma[c][a, b] with upper index c.");

  // fields
  py::enum_<BoundaryKind>(m, "BoundaryKind")
      .value("periodic", BoundaryKind::periodic)
      .value("fixed", BoundaryKind::fixed);

  py::class_<SpaceTimeGrid>(m, "SpaceTimeGrid")
      .def(py::init([](std::vector<double> lo, std::vector<double> hi, std::vector<int> nodes,
                       std::vector<BoundaryKind> boundary, double dt) {
             SpaceTimeGrid g;
             g.n_space = static_cast<int>(nodes.size());
             g.lo = std::move(lo);
             g.hi = std::move(hi);
             g.nodes = std::move(nodes);
             g.boundary = std::move(boundary);
             g.dt = dt;
             g.validate();
             return g;
           }),
           py::arg("lo"), py::arg("hi"), py::arg("nodes"), py::arg("boundary"), py::arg("dt"))
      .def_readonly("n_space", &SpaceTimeGrid::n_space)
      .def_readonly("nodes", &SpaceTimeGrid::nodes)
      .def_readonly("dt", &SpaceTimeGrid::dt)
      .def("spacing", &SpaceTimeGrid::spacing)
      .def("num_nodes", &SpaceTimeGrid::num_nodes)
      .def("num_cells", &SpaceTimeGrid::num_cells)
      .def("node_coord", &SpaceTimeGrid::node_coord);

  py::class_<ConfigurationField>(m, "ConfigurationField")
      .def_readonly("fiber_dim", &ConfigurationField::fiber_dim)
      .def_readonly("phi", &ConfigurationField::phi)
      .def_readonly("lambda_", &ConfigurationField::lambda)
      .def_readonly("first_level", &ConfigurationField::first_level)
      .def("levels", &ConfigurationField::levels);

  m.def("deformation_offsets", &deformation_offsets, py::arg("grid"));
  m.def("sample_section", &sample_section, py::arg("grid"), py::arg("fiber_dim"), py::arg("levels"), py::arg("fn"),
        py::arg("offsets"), py::arg("first_level") = 0,
        "Sample fn(x, t) at every node for the given number of levels.");

  py::class_<JetSample>(m, "JetSample")
      .def_readwrite("x", &JetSample::x)
      .def_readwrite("t", &JetSample::t)
      .def_readwrite("y", &JetSample::y)
      .def_readwrite("v", &JetSample::v)
      .def_readwrite("lambda_", &JetSample::lambda)
      .def_readwrite("beta", &JetSample::beta)
      .def("F", &JetSample::F)
      .def("vdot", &JetSample::vdot);
  m.def("make_jet", &make_jet, py::arg("x"), py::arg("t"), py::arg("y"), py::arg("vdot"), py::arg("F"));
  m.def("jet_extend", &jet_extend, py::arg("grid"), py::arg("field"), py::arg("node"), py::arg("level"));

  // material
  py::class_<StoredEnergy>(m, "StoredEnergy")
      .def_static("constant", &StoredEnergy::constant, py::arg("c"))
      .def_static("barotropic_quadratic", &StoredEnergy::barotropic_quadratic, py::arg("k") = 1.0)
      .def_static("barotropic_log", &StoredEnergy::barotropic_log, py::arg("k") = 1.0)
      .def_static("stvenant", &StoredEnergy::stvenant, py::arg("lame_lambda"), py::arg("lame_mu"))
      .def_static("neohookean", &StoredEnergy::neohookean, py::arg("lame_mu"), py::arg("lame_lambda"))
      .def_property_readonly("label", &StoredEnergy::label);

  py::class_<MaterialModel>(m, "MaterialModel")
      .def_static("uniform", &MaterialModel::uniform, py::arg("rho"), py::arg("W"), py::arg("G"), py::arg("g"),
                  py::arg("incompressible") = false)
      .def_readonly("incompressible", &MaterialModel::incompressible);

  m.def("jacobian", &jacobian);
  m.def("lagrangian_density", &lagrangian_density);
  m.def("energy_density", &energy_density);
  m.def("cauchy_stress", &cauchy_stress);
  m.def("material_pressure", &material_pressure);
  m.def("piola_kirchhoff", &piola_kirchhoff);
  m.def("piola_transform", &piola_transform);
  m.def("legendre", [](const MaterialModel& model, const JetSample& s) {
    const Momenta p = legendre(model, s);
    py::dict d;
    d["p0"] = p.p0;
    d["pj"] = p.pj;
    d["Pi"] = p.Pi;
    return d;
  });

  // dynamics
  m.def("el_residual_general", [](const MaterialModel& mo, const ConfigurationField& f, const SpaceTimeGrid& g,
                                  int level) { return residual_dict(el_residual_general(mo, f, g, level)); },
        py::arg("model"), py::arg("field"), py::arg("grid"), py::arg("level") = -1);
  m.def("el_residual_continuum", [](const MaterialModel& mo, const ConfigurationField& f, const SpaceTimeGrid& g,
                                    int level) { return residual_dict(el_residual_continuum(mo, f, g, level)); },
        py::arg("model"), py::arg("field"), py::arg("grid"), py::arg("level") = -1);
  m.def("el_residual_barotropic", [](const MaterialModel& mo, const ConfigurationField& f, const SpaceTimeGrid& g,
                                     int level) { return residual_dict(el_residual_barotropic(mo, f, g, level)); },
        py::arg("model"), py::arg("field"), py::arg("grid"), py::arg("level") = -1);
  m.def("el_residual_elastic", [](const MaterialModel& mo, const ConfigurationField& f, const SpaceTimeGrid& g,
                                  int level) { return residual_dict(el_residual_elastic(mo, f, g, level)); },
        py::arg("model"), py::arg("field"), py::arg("grid"), py::arg("level") = -1);
  m.def("induced_constraint", &induced_constraint, py::arg("field"), py::arg("grid"), py::arg("model"),
        py::arg("level") = -1);

  // integrator
  py::class_<SolverSettings>(m, "SolverSettings")
      .def(py::init<>())
      .def_readwrite("newton_tol", &SolverSettings::newton_tol)
      .def_readwrite("max_iter", &SolverSettings::max_iter);

  py::class_<LevelDiagnostics>(m, "LevelDiagnostics")
      .def_readonly("level", &LevelDiagnostics::level)
      .def_readonly("iterations", &LevelDiagnostics::iterations)
      .def_readonly("residual", &LevelDiagnostics::residual)
      .def_readonly("constraint", &LevelDiagnostics::constraint)
      .def_readonly("energy", &LevelDiagnostics::energy)
      .def_readonly("momentum", &LevelDiagnostics::momentum);

  py::class_<Trajectory>(m, "Trajectory")
      .def_readonly("field", &Trajectory::field)
      .def_readonly("diagnostics", &Trajectory::diagnostics);

  m.def("initialize", &initialize, py::arg("model"), py::arg("grid"), py::arg("phi0"), py::arg("V0"),
        py::arg("offsets"), py::arg("constrained") = false, py::arg("settings") = SolverSettings{});
  m.def("run", [](const MaterialModel& model, const ConfigurationField& init, const SpaceTimeGrid& grid,
                  const SolverSettings& settings, long n_steps, bool constrained, bool keep_history) {
    RunOptions o;
    o.n_steps = n_steps;
    o.constrained = constrained;
    o.keep_history = keep_history;
    py::gil_scoped_release release;
    return run(model, init, grid, settings, o);
  }, py::arg("model"), py::arg("initial"), py::arg("grid"), py::arg("settings") = SolverSettings{},
        py::arg("n_steps") = 1, py::arg("constrained") = false, py::arg("keep_history") = false);
  m.def("discrete_energy", &discrete_energy, py::arg("model"), py::arg("grid"), py::arg("field"), py::arg("level"));
  m.def("discrete_momentum", &discrete_momentum, py::arg("model"), py::arg("grid"), py::arg("field"),
        py::arg("level"));

  // conservation
  py::class_<SymmetryGenerator>(m, "SymmetryGenerator")
      .def_static("sine_stream", &SymmetryGenerator::sine_stream, py::arg("amplitude") = 1.0)
      .def_static("translation", &SymmetryGenerator::translation, py::arg("c"))
      .def_static("time_translation", &SymmetryGenerator::time_translation, py::arg("zeta") = 1.0);

  py::class_<NoetherCurrent>(m, "NoetherCurrent")
      .def_readonly("J0", &NoetherCurrent::J0)
      .def_readonly("Jk", &NoetherCurrent::Jk);

  m.def("momentum_map", &momentum_map, py::arg("model"), py::arg("sample"), py::arg("generator"));
  m.def("barotropic_current", &barotropic_current, py::arg("model"), py::arg("sample"), py::arg("generator"));
  m.def("incompressible_current", &incompressible_current, py::arg("model"), py::arg("sample"),
        py::arg("generator"));
  m.def("time_translation_current", &time_translation_current, py::arg("model"), py::arg("sample"),
        py::arg("zeta") = 1.0);
  m.def("noether_divergence", [](const MaterialModel& mo, const ConfigurationField& f, const SpaceTimeGrid& g,
                                 const SymmetryGenerator& gen, int level) {
    return divergence_dict(noether_divergence(mo, f, g, gen, level));
  }, py::arg("model"), py::arg("field"), py::arg("grid"), py::arg("generator"), py::arg("level") = -1);
  m.def("energy_continuity_residual", [](const MaterialModel& mo, const ConfigurationField& f, const SpaceTimeGrid& g,
                                         int level) {
    return divergence_dict(energy_continuity_residual(mo, f, g, level));
  }, py::arg("model"), py::arg("field"), py::arg("grid"), py::arg("level") = -1);
  m.def("noether_implies_el_check", [](const MaterialModel& mo, const ConfigurationField& f, const SpaceTimeGrid& g,
                                       const SymmetryGenerator& gen, int level) {
    const NoetherELGap r = noether_implies_el_check(mo, f, g, gen, level);
    py::dict d;
    d["gap"] = r.gap;
    d["gap_unit_jacobian"] = r.gap_unit_jacobian;
    d["divergence"] = r.divergence;
    return d;
  }, py::arg("model"), py::arg("field"), py::arg("grid"), py::arg("generator"), py::arg("level") = -1);

  // scenarios
  py::class_<ScenarioConfig>(m, "ScenarioConfig")
      .def_readonly("scenario", &ScenarioConfig::scenario)
      .def_readonly("nodes", &ScenarioConfig::nodes)
      .def_readonly("dt", &ScenarioConfig::dt)
      .def_readonly("n_steps", &ScenarioConfig::n_steps);
  m.def("parse_config", &parse_config, py::arg("text"));
  m.def("load_config", &load_config, py::arg("path"));
  m.def("refined", &refined, py::arg("config"), py::arg("k"));

  py::class_<Scenario>(m, "Scenario")
      .def_readonly("model", &Scenario::model)
      .def_readonly("grid", &Scenario::grid)
      .def_readonly("initial", &Scenario::initial)
      .def_readonly("constrained", &Scenario::constrained);
  m.def("build_scenario", &build_scenario, py::arg("config"));

  m.def("run_verify", [](const ScenarioConfig& cfg) {
    const VerifyReport rep = run_verify(cfg);
    py::list checks;
    for (const auto& c : rep.checks) {
      py::dict d;
      d["name"] = c.name;
      d["value"] = c.value;
      d["tolerance"] = c.tolerance;
      d["pass"] = c.pass;
      checks.append(d);
    }
    return checks;
  }, py::arg("config"), "List of checks, each a dict with name, value, tolerance and pass.");
  m.def("run_scenario", [](const ScenarioConfig& cfg, const std::filesystem::path& out) {
    const RunOutcome r = run_scenario(cfg, out);
    py::dict d;
    d["exit_code"] = r.exit_code;
    d["steps_done"] = r.steps_done;
    d["failed_step"] = r.failed_step;
    d["message"] = r.message;
    d["max_constraint"] = r.max_constraint;
    return d;
  }, py::arg("config"), py::arg("out_dir"));
}

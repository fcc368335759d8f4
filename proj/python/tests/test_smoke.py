import json

import numpy as np
import pytest

import msym


def flat_model(energy, dim=2, incompressible=False):
    G = msym.MetricField.euclidean(dim)
    return msym.MaterialModel.uniform(1.0, energy, G, G, incompressible)


def jet(F, vdot=None):
    n = F.shape[0]
    vdot = np.zeros(n) if vdot is None else vdot
    return msym.make_jet(np.full(n, 1.3), 0.0, np.full(n, 1.3), vdot, F)


def test_exceptions_share_a_base():
    assert issubclass(msym.ConfigError, msym.Error)
    assert issubclass(msym.NewtonDiverged, msym.Error)
    with pytest.raises(msym.ConfigError):
        msym.parse_config(json.dumps({"scenario": "elastic_bar_1d", "unknown": 1}))


def test_jacobian_is_det_F_on_flat_charts():
    F = np.array([[1.2, 0.1], [0.0, 0.9]])
    model = flat_model(msym.StoredEnergy.barotropic_log(1.0))
    assert msym.jacobian(model, jet(F)) == pytest.approx(np.linalg.det(F), rel=1e-14)


def test_polar_metric_and_christoffel():
    g = msym.MetricField.polar()
    x = np.array([2.0, 0.3])
    assert np.allclose(g.eval(x), np.diag([1.0, 4.0]))
    gamma = msym.christoffel(g, x)
    assert gamma[0][1, 1] == pytest.approx(-2.0)
    assert gamma[1][0, 1] == pytest.approx(0.5)


@pytest.mark.parametrize(
    "energy",
    [
        msym.StoredEnergy.barotropic_quadratic(1.0),
        msym.StoredEnergy.stvenant(1.2, 0.8),
        msym.StoredEnergy.neohookean(0.8, 1.2),
    ],
)
def test_cauchy_stress_is_symmetric(energy):
    F = np.array([[1.1, 0.2], [-0.1, 0.95]])
    sigma = msym.cauchy_stress(flat_model(energy), jet(F))
    assert np.abs(sigma - sigma.T).max() <= 1e-14 * max(1.0, np.abs(sigma).max())


def test_barotropic_stress_is_pressure():
    F = np.array([[1.1, 0.0], [0.0, 1.05]])
    model = flat_model(msym.StoredEnergy.barotropic_log(1.0))
    s = jet(F)
    sigma = msym.cauchy_stress(model, s)
    assert np.allclose(sigma, -msym.material_pressure(model, s) * np.eye(2), atol=1e-12)


def test_translation_current_matches_momentum_map():
    F = np.array([[1.05, 0.02], [0.01, 0.98]])
    model = flat_model(msym.StoredEnergy.barotropic_quadratic(1.0))
    s = jet(F, np.array([0.3, -0.2]))
    gen = msym.SymmetryGenerator.sine_stream(1.0)
    a = msym.momentum_map(model, s, gen)
    b = msym.barotropic_current(model, s, gen)
    assert a.J0 == pytest.approx(b.J0, abs=1e-12)
    assert np.allclose(a.Jk, b.Jk, atol=1e-12)


def test_gas_run_conserves_discrete_momentum():
    cfg = msym.parse_config(
        json.dumps(
            {
                "scenario": "barotropic_gas_2d",
                "grid": {"nodes": [8, 8]},
                "integration": {"n_steps": 5},
            }
        )
    )
    sc = msym.build_scenario(cfg)
    settings = msym.SolverSettings()
    traj = msym.run(sc.model, sc.initial, sc.grid, settings, n_steps=5)
    assert len(traj.diagnostics) == 5
    p = np.array([d.momentum for d in traj.diagnostics])
    assert np.abs(p - p[0]).max() <= 10 * settings.newton_tol
    assert all(d.residual <= settings.newton_tol for d in traj.diagnostics)


def test_bar_verify_checks_pass():
    cfg = msym.parse_config(json.dumps({"scenario": "elastic_bar_1d"}))
    checks = msym.run_verify(cfg)
    assert checks
    assert all(c["pass"] for c in checks), checks


def test_run_scenario_writes_outputs(tmp_path):
    cfg = msym.parse_config(
        json.dumps({"scenario": "elastic_bar_1d", "integration": {"n_steps": 10}})
    )
    out = msym.run_scenario(cfg, tmp_path)
    assert out["exit_code"] == 0
    assert out["steps_done"] == 10
    for name in ("report.json", "manifest.json", "conservation.json"):
        assert (tmp_path / name).is_file()

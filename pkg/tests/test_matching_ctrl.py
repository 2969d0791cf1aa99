import math

import numpy as np
import pytest

from convmatch.errors import ConfigError, SingularityError
from convmatch.matching_ctrl import (
    MatchingController, MatchingState, equivalent_machine, machine_form_deriv, matching_step,
    vx_terminal_deriv,
)
from convmatch.outer_ctrl import AmpTrackConfig, ReactiveShapeParams
from convmatch.plant import ConverterParams, LoadModel, ModulationCommand, PlantState, converter_deriv
from convmatch.sim import SimConfig, estimate_amp_freq, integrate, simulate


def test_zero_dc_voltage_freezes_oscillator(p):
    st = MatchingState.from_angle(0.7)
    m, st2 = matching_step(p, st, 0.0, 1e-3)
    assert st2.xi == pytest.approx(st.xi, abs=1e-15)
    assert m.m_ab == pytest.approx((p.mu * st.xi[0], p.mu * st.xi[1]), abs=1e-15)


def test_rotation_rate_at_nominal_voltage(p):
    dt = 1e-5
    st = MatchingState.from_angle(0.0)
    _, st2 = matching_step(p, st, 1000.0, dt)
    assert st2.theta_v / dt == pytest.approx(314.2, rel=1e-9)
    assert st2.theta_v / dt / (2 * math.pi) == pytest.approx(50.0, abs=0.01)


def test_negative_voltage_reverses_rotation(p):
    _, st = matching_step(p, MatchingState(), -1000.0, 1e-5)
    assert st.theta_v == pytest.approx(-p.eta * 1000.0 * 1e-5)


def test_modulation_norm_every_step(p):
    st = MatchingState.from_angle(1.234)
    for k in range(2000):
        m, st = matching_step(p, st, 1000.0 + k, 1e-4)
        assert math.hypot(*m.m_ab) == pytest.approx(0.33, abs=1e-15)


def test_equivalent_machine_values(p):
    em = equivalent_machine(p, 1000.0, 0.0)
    assert em.inertia_eq == pytest.approx(1e-3 / 0.3142**2)
    assert em.inertia_eq == pytest.approx(0.01013, rel=1e-3)
    # 1.0132 is G_dc/eta^2 for eta = pi/10 exactly; the rounded 0.3142 lands 0.025% lower
    assert em.damping_eq == pytest.approx(1.0132, rel=3e-4)
    exact = equivalent_machine(ConverterParams(eta=math.pi / 10), 1000.0, 0.0)
    assert exact.damping_eq == pytest.approx(1.0132, rel=1e-4)
    assert em.torque_m_eq == pytest.approx(100.0 / 0.3142)
    assert em.tau_e_v == 0.0
    assert em.omega_v == pytest.approx(314.2)


def test_equivalent_machine_needs_positive_eta():
    with pytest.raises(ConfigError):
        equivalent_machine(ConverterParams(eta=0.0), 1000.0, 0.0)


def test_terminal_radial_balance_at_open_circuit(p):
    r = p.mu * (p.i_dc / p.g_dc) / 2.0
    vx = np.array([r * 0.6, r * 0.8])
    d = vx_terminal_deriv(p, vx, np.zeros(2))
    u = vx / r
    assert abs(d @ u) < 1e-9 * np.linalg.norm(d)
    # tangential speed over radius is the rotation rate eta v_dc
    rate = (u[0] * d[1] - u[1] * d[0]) / r
    assert rate == pytest.approx(2 * p.eta / p.mu * r, rel=1e-12)
    assert rate == pytest.approx(p.eta * 1000.0, rel=1e-12)


def test_terminal_deriv_singular_at_origin(p):
    with pytest.raises(SingularityError):
        vx_terminal_deriv(p, (0.0, 0.0), (1.0, 1.0))


def test_terminal_deriv_matches_plant_chain_rule(p, rng):
    # d/dt (mu v_dc xi / 2) from the plant equations and the rotation of xi
    for _ in range(20):
        v_dc = rng.uniform(200.0, 1200.0)
        th = rng.uniform(-math.pi, math.pi)
        i = rng.normal(0.0, 30.0, 2)
        v = rng.normal(0.0, 150.0, 2)
        xi = np.array([-math.sin(th), math.cos(th)])
        m = p.mu * xi
        st = PlantState(v_dc=v_dc, i_ab=tuple(i), v_ab=tuple(v))
        dv_dc = converter_deriv(p, st, ModulationCommand(tuple(m)), LoadModel(), 0.0).v_dc
        dxi = p.eta * v_dc * np.array([-xi[1], xi[0]])
        expect = 0.5 * p.mu * (dv_dc * xi + v_dc * dxi)
        got = vx_terminal_deriv(p, 0.5 * m * v_dc, i)
        assert got == pytest.approx(expect, rel=1e-9, abs=1e-6)


def test_terminal_deriv_along_simulated_trajectory(p):
    tr = simulate(p, MatchingController(), LoadModel.constant(0.2, 0.001),
                  SimConfig(dt=1e-6, t_end=0.02, record_every=1), PlantState(v_dc=900.0))
    vx = tr.v_x
    fd = (vx[2:] - vx[:-2]) / (2 * tr.dt)
    k = np.arange(1000, len(tr.t) - 1, 997)
    for j in k:
        d = vx_terminal_deriv(p, vx[j], tr.i_ab[j])
        assert np.linalg.norm(d - fd[j - 1]) < 1e-4 * np.linalg.norm(d)


def test_oscillator_norm_drift_per_million_steps(p):
    tr = simulate(p, MatchingController(), LoadModel.constant(0.3, 0.001),
                  SimConfig(dt=1e-6, t_end=1.0, record_every=100), PlantState(v_dc=1000.0))
    norm = np.linalg.norm(tr.xi, axis=1)
    assert np.max(np.abs(norm - 1.0)) <= 1e-9
    assert np.max(np.abs(np.linalg.norm(tr.m_ab, axis=1) - p.mu)) <= 1e-12


def test_machine_form_is_the_same_system(p):
    load = LoadModel.constant(0.25, -0.002)
    cfg = SimConfig(dt=1e-6, t_end=0.02, record_every=20)
    th0 = 0.3
    tr = simulate(p, MatchingController(theta0=th0), load, cfg, PlantState(v_dc=800.0))
    x0 = [th0, p.eta * 800.0, 0.0, 0.0, 0.0, 0.0]
    mf = integrate(machine_form_deriv(p, load), x0, cfg)
    assert mf.x[:, 1] / p.eta == pytest.approx(tr.v_dc, rel=1e-9)
    assert np.max(np.abs(mf.x[:, 4:6] - tr.v_ab)) < 1e-6
    assert np.max(np.abs(mf.x[:, 2:4] - tr.i_ab)) < 1e-6


def test_ac_signals_synchronize(p):
    tr = simulate(p, MatchingController(), LoadModel.constant(0.3, 0.001),
                  SimConfig(dt=1e-6, t_end=0.4, record_every=10), PlantState(v_dc=0.0))
    w = tr.tail(0.1)
    f = [estimate_amp_freq(tr.t[w], z[w])[1] for z in (tr.v_ab, tr.i_ab, tr.v_x)]
    assert max(f) - min(f) < 1e-4 * np.mean(f)


def test_shaping_conflicts_with_amplitude_loop():
    with pytest.raises(ConfigError):
        MatchingController(amp=AmpTrackConfig(), shape=ReactiveShapeParams("mu", 0.33, 1e-5))

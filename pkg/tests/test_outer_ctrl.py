import numpy as np
import pytest

from convmatch import _layout as L
from convmatch.errors import ConfigError
from convmatch.matching_ctrl import MatchingController
from convmatch.outer_ctrl import (
    AmpMeasurement, AmpTrackConfig, AmpTrackState, EtaTrackConfig, EtaTrackState, IdcPidConfig,
    IdcPidState, ReactiveShapeParams, amp_track_step, eta_rate, eta_track_step, idc_pid_step,
    mu_shaping_slope, pid_equivalent_inertia, reactive_limits, reactive_shape,
    shaped_mu_from_unit_q, vsm_equivalent_inertia,
)
from convmatch.plant import LoadModel, PlantState
from convmatch.sim import SimConfig, simulate


# ---- amplitude tracking

def test_amp_track_zero_error_holds_mu():
    cfg = AmpTrackConfig(il_ref=20.0)
    st = AmpTrackState(mu_dyn=0.33)
    # v_x equals its reference when i_l = i_ref and v_amp = mu v_dc / 2
    meas = AmpMeasurement(il_amp=20.0, v_amp=165.0, vload_amp=165.0, v_dc=1000.0)
    mu, st2, flags = amp_track_step(cfg, st, meas, 1e-5)
    assert mu == 0.33
    assert flags == 0
    assert st2.int_el == 0.0


def test_amp_track_raises_mu_when_current_low():
    meas = AmpMeasurement(il_amp=10.0, v_amp=165.0, vload_amp=165.0, v_dc=1000.0)
    mu, _, _ = amp_track_step(AmpTrackConfig(), AmpTrackState(), meas, 1e-6)
    assert mu > 0.33


def test_amp_track_holds_at_zero_dc_voltage():
    st = AmpTrackState(mu_dyn=0.4)
    mu, st2, flags = amp_track_step(AmpTrackConfig(), st, AmpMeasurement(0, 0, 0, 0.0), 1e-6)
    assert (mu, st2) == (0.4, st)
    assert flags & L.F_CTRL_UNDEF


def test_amp_track_time_scale_ordering():
    with pytest.raises(ConfigError):
        AmpTrackConfig(lambda_x=900.0, lambda0=-100.0)
    AmpTrackConfig(lambda_x=1000.0, lambda0=-100.0)


@pytest.mark.parametrize("il", [0.0, 1e4])
def test_amp_track_mu_stays_in_unit_interval(il):
    st = AmpTrackState(mu_dyn=0.5)
    meas = AmpMeasurement(il_amp=il, v_amp=0.0, vload_amp=0.0, v_dc=10.0)
    for _ in range(200):
        mu, st, _ = amp_track_step(AmpTrackConfig(k_x=1e7), st, meas, 1e-3)
        assert 0.0 <= mu <= 1.0
    assert mu in (0.0, 1.0)


# ---- i_dc PID

def test_pid_zero_error_zero_output():
    cfg = IdcPidConfig()
    st = IdcPidState()
    for _ in range(10):
        out, st = idc_pid_step(cfg, st, 1000.0, 1000.0, 1e-4)
        assert out == 0.0


def test_pid_proportional_and_integral():
    cfg = IdcPidConfig(k_p=0.3, k_i=20.0, k_d=0.0)
    out, st = idc_pid_step(cfg, IdcPidState(), 1000.0, 990.0, 1e-3)
    assert out == pytest.approx(0.3 * 10 + 20.0 * 10 * 1e-3)
    out, st = idc_pid_step(cfg, st, 1000.0, 990.0, 1e-3)
    assert out == pytest.approx(0.3 * 10 + 20.0 * 20 * 1e-3)


def test_pid_derivative_filter_response():
    # a ramp in the error gives de/dt = 1; the filter relaxes z to k_d with rate N
    cfg = IdcPidConfig(k_p=0.0, k_i=0.0, k_d=0.5, n_filter=10.0)
    st = IdcPidState()
    dt = 1e-3
    for k in range(1001):
        out, st = idc_pid_step(cfg, st, 0.0, -k * dt, dt)
    assert out == pytest.approx(0.5 * (1 - np.exp(-10.0 * 1.0)), rel=2e-2)


def test_pid_filter_validation():
    with pytest.raises(ConfigError):
        IdcPidConfig(n_filter=0.0)


def test_pid_reference_defaults_to_50hz(p):
    assert IdcPidConfig().resolved_ref(p) == pytest.approx(100 * np.pi / 0.3142)


def test_pid_adds_inertia(p):
    assert pid_equivalent_inertia(p, 0.001) > p.c_dc / p.eta**2
    assert pid_equivalent_inertia(p, 0.0) == pytest.approx(p.c_dc / p.eta**2)


# ---- eta tracking

def test_eta_rate_zero_at_reference(p):
    cfg = EtaTrackConfig(tau=100.0)
    assert eta_rate(cfg, p.eta, p.eta * 1000.0, 1000.0, 0.0) == 0.0


def test_eta_step_exact_law_first_order():
    # with v_dc frozen the exact law is omega' = tau (omega_ref - omega)
    cfg = EtaTrackConfig(tau=100.0)
    st = EtaTrackState(0.3)
    dt = 1e-5
    for _ in range(1000):
        _, st, flags = eta_track_step(cfg, st, 314.16, 1000.0, 0.0, dt)
        assert flags == 0
    w = st.eta_dyn * 1000.0
    assert (314.16 - w) / (314.16 - 300.0) == pytest.approx(np.exp(-1.0), rel=1e-3)


def test_eta_step_holds_without_dc_voltage():
    st = EtaTrackState(0.2)
    eta, st2, flags = eta_track_step(EtaTrackConfig(), st, 314.0, 0.0, 0.0, 1e-5)
    assert (eta, st2) == (0.2, st)
    assert flags & L.F_ETA_HOLD


def test_eta_config_validation(p):
    with pytest.raises(ConfigError):
        EtaTrackConfig(tau=0.0)
    with pytest.raises(ConfigError):
        EtaTrackConfig(j_extra=-1.0)
    assert EtaTrackConfig(j_extra=1.0).resolved_law == "vsm"
    assert EtaTrackConfig().resolved_law == "exact"
    with pytest.raises(ConfigError):
        eta_rate(EtaTrackConfig(j_extra=1.0), 0.3, 314.0, 1000.0, 0.0)


def test_vsm_inertia(p):
    assert vsm_equivalent_inertia(p, 1.0) == pytest.approx(2 * p.c_dc / p.eta**2)


def test_eta_loop_closed_form_in_simulation(p):
    # omega_v = eta v_dc follows omega' = tau (omega_ref - omega) whatever the load does
    tau = 100.0
    ctrl = MatchingController(eta=EtaTrackConfig(tau=tau, omega_ref=300.0))
    tr = simulate(p, ctrl, LoadModel.steps([(0.0, 0.1, 0.0), (0.01, 0.3, 0.0)]),
                  SimConfig(dt=1e-6, t_end=0.04, record_every=1), PlantState(v_dc=1000.0))
    w = tr.eta * tr.v_dc
    oracle = 300.0 + (w[0] - 300.0) * np.exp(-tau * tr.t)
    assert np.max(np.abs(w - oracle)) < 1e-6 * abs(w[0] - 300.0)


# ---- reactive shaping

def test_reactive_shape_examples():
    assert reactive_shape(ReactiveShapeParams("mu", 0.33, 1e-5), 0.0) == (0.33, False)
    mu, clamped = reactive_shape(ReactiveShapeParams("mu", 0.33, 1e-5), 5000.0)
    assert mu == pytest.approx(0.38) and not clamped
    idc, clamped = reactive_shape(ReactiveShapeParams("idc", 100.0, 2e-3), -5000.0)
    assert idc == pytest.approx(90.0) and not clamped


def test_reactive_shape_clamps():
    assert reactive_shape(ReactiveShapeParams("mu", 0.33, 1e-5), 1e6) == (1.0, True)
    mu, clamped = reactive_shape(ReactiveShapeParams("mu", 0.33, 1e-5), -1e6)
    assert clamped and 0.0 < mu <= 1e-9
    assert reactive_shape(ReactiveShapeParams("idc", 100.0, 1e-2), -2e4) == (0.0, True)
    eta, clamped = reactive_shape(ReactiveShapeParams("eta", 0.3, 1e-5), -1e6)
    assert clamped and eta > 0


def test_reactive_limits():
    assert reactive_limits(ReactiveShapeParams("mu", 0.33, 3.3e-5)) == pytest.approx((-1e4, 1e4))
    assert reactive_limits(ReactiveShapeParams("idc", 100.0, 1e-2)) == pytest.approx((-1e4, 1e4))
    lo, hi = reactive_limits(ReactiveShapeParams("mu", 0.33, 6.6e-5))
    assert (lo, hi) == pytest.approx((-5e3, 5e3))
    with pytest.raises(ConfigError):
        reactive_limits(ReactiveShapeParams("eta", 0.3, 1e-6))


def test_reactive_shape_validation():
    with pytest.raises(ConfigError):
        ReactiveShapeParams("mu", 0.33, 0.0)
    with pytest.raises(ConfigError):
        ReactiveShapeParams("voltage", 0.33, 1e-5)
    with pytest.raises(ConfigError):
        ReactiveShapeParams("mu", 0.33, 1e-5, q_filter=-1.0)


def test_shaped_mu_fixed_point():
    sp = ReactiveShapeParams("mu", 0.33, 3.3e-5)
    mu, clamped = shaped_mu_from_unit_q(sp, 1000.0)
    assert not clamped
    assert mu == pytest.approx(0.33 + 3.3e-5 * mu * 1000.0)
    assert shaped_mu_from_unit_q(sp, 3e4) == (1.0, True)


def test_mu_shaping_slope(p):
    assert mu_shaping_slope(ReactiveShapeParams("mu", 0.33, 3.3e-5), p) == pytest.approx(0.0165)

import math

import numpy as np
import pytest

from convmatch.errors import AmplitudeUndefinedError, ConfigError, DivergenceError
from convmatch.frames import J2, SQRT_3_2
from convmatch.matching_ctrl import MatchingController
from convmatch.plant import LoadModel, PlantState
from convmatch.sim import (
    LinearSystem, SimConfig, detect_steady_state, estimate_amp_freq, integrate, settle_time,
    simulate,
)


def test_scalar_exponential():
    tr = integrate(lambda t, x: -x, [1.0], SimConfig(dt=1e-3, t_end=1.0, record_every=1000))
    assert tr.x[-1, 0] == pytest.approx(math.exp(-1.0), abs=1e-9)


def test_fourth_order_convergence():
    errs = []
    for dt in (0.1, 0.05):
        tr = integrate(lambda t, x: -x, [1.0], SimConfig(dt=dt, t_end=1.0, record_every=1))
        errs.append(abs(tr.x[-1, 0] - math.exp(-1.0)))
    assert errs[0] / errs[1] >= 8.0


def test_rotation_norm_conserved():
    w = 314.159
    tr = integrate(LinearSystem(w * J2), [1.0, 0.0], SimConfig(dt=1e-6, t_end=1.0, record_every=10000))
    assert np.max(np.abs(np.linalg.norm(tr.x, axis=1) - 1.0)) < 1e-9


def test_linear_and_callable_paths_agree():
    a = np.array([[-3.0, 1.0], [-1.0, -2.0]])
    cfg = SimConfig(dt=1e-3, t_end=0.5, record_every=50)
    lin = integrate(LinearSystem(a), [1.0, 2.0], cfg)
    fun = integrate(lambda t, x: a @ x, [1.0, 2.0], cfg)
    assert np.allclose(lin.x, fun.x, rtol=1e-12, atol=1e-14)


def test_divergence_raises_with_partial_trace():
    with pytest.raises(DivergenceError) as ei:
        integrate(LinearSystem(np.array([[1e4]])), [1.0], SimConfig(dt=1e-2, t_end=10.0, record_every=1))
    assert ei.value.args


def test_events_must_be_on_grid():
    cfg = SimConfig(dt=1e-3)
    assert cfg.grid_index(0.25) == 250
    with pytest.raises(ConfigError):
        cfg.grid_index(0.25 + 3e-4)


def test_config_validation():
    for bad in ({"dt": 0.0}, {"t_end": -1.0}, {"record_every": 0}, {"steady_tol": 0.0}):
        with pytest.raises(ConfigError):
            SimConfig(**bad)


def test_event_callable_sees_segment_from_step_start():
    seen = []

    def f(t, x, seg):
        seen.append((round(t / 1e-3, 6), seg))
        return np.zeros(1)

    integrate(f, [0.0], SimConfig(dt=1e-3, t_end=5e-3, record_every=1), events=[0.0, 3e-3])
    # four stages per step; the step that starts at t=3 ms uses segment 1 throughout,
    # the one before it uses segment 0 even for its stage evaluated at t=3 ms
    steps = [seen[i:i + 4] for i in range(0, len(seen), 4)]
    assert [st[0][0] for st in steps] == [0.0, 1.0, 2.0, 3.0, 4.0]
    assert all(s == 0 for st in steps[:3] for _, s in st)
    assert all(s == 1 for st in steps[3:] for _, s in st)


def test_estimate_synthetic():
    amp, w = 165.0 * SQRT_3_2, 314.159
    t = np.linspace(0.0, 0.04, 4001)
    z = np.column_stack([amp * np.cos(w * t), amp * np.sin(w * t)])
    a, om = estimate_amp_freq(t, z)
    assert a == pytest.approx(202.07, rel=1e-3)
    assert om == pytest.approx(w, rel=1e-3)


def test_estimate_constant_vector():
    t = np.linspace(0.0, 1.0, 11)
    a, om = estimate_amp_freq(t, np.tile([3.0, 4.0], (11, 1)))
    assert a == pytest.approx(5.0) and om == 0.0


def test_estimate_rejects_zero_signal():
    with pytest.raises(AmplitudeUndefinedError):
        estimate_amp_freq(np.arange(5.0), np.zeros((5, 2)))
    with pytest.raises(ConfigError):
        estimate_amp_freq(np.arange(2.0), np.ones((2, 2)))


def test_settle_constant():
    t = np.linspace(0, 1, 101)
    assert settle_time(t, [np.full(101, 3.0)], 1e-6, 0.1) == 0


def test_settle_exponential():
    tau, tol, win = 0.01, 1e-6, 0.01
    t = np.arange(0.0, 0.3, 1e-4)
    k = settle_time(t, [1.0 + np.exp(-t / tau)], tol, win)
    # spread of 1 + e^{-t/tau} over a window drops below tol near tau*ln(1/tol)
    assert abs(t[k] - tau * math.log(1.0 / tol)) <= win


def test_settle_oscillating_never():
    t = np.linspace(0, 1, 1001)
    assert settle_time(t, [1000.0 + 50.0 * np.sin(2 * np.pi * 7 * t)], 1e-4, 0.1) is None


@pytest.fixture(scope="module")
def open_circuit_trace():
    from convmatch.plant import ConverterParams
    return simulate(ConverterParams(), MatchingController(), LoadModel(),
                    SimConfig(t_end=0.5, record_every=10), PlantState())


def test_open_circuit_dc_voltage(open_circuit_trace, p):
    assert open_circuit_trace.v_dc[-1] == pytest.approx(p.i_dc / p.g_dc, rel=1e-3)


def test_open_circuit_frequency_estimate(open_circuit_trace):
    tr = open_circuit_trace
    sel = tr.tail(0.1)
    _, w = estimate_amp_freq(tr.t[sel], tr.v_ab[sel])
    assert w == pytest.approx(2 * math.pi * 50, rel=1e-3)


def test_detect_steady_state(open_circuit_trace):
    res = detect_steady_state(open_circuit_trace, SimConfig(t_end=0.5, steady_tol=1e-4))
    assert res is not None
    t_settle, vals = res
    assert 0.0 < t_settle < 0.5
    assert vals["v_dc"] == pytest.approx(1000.0, rel=1e-3)
    assert vals["amp_vx"] == pytest.approx(165.0, abs=0.5)


def test_simulation_is_deterministic(p):
    args = (p, MatchingController(), LoadModel.constant(0.3, 0.001), SimConfig(t_end=0.02))
    a = simulate(*args, PlantState(v_dc=900.0))
    b = simulate(*args, PlantState(v_dc=900.0))
    assert np.array_equal(a.x, b.x) and np.array_equal(a.aux, b.aux)


def test_load_step_lands_on_grid_sample(p):
    ts, dt = 2e-3, 1e-6
    ld = LoadModel.steps([(0.0, 0.1, 0.0), (ts, 0.4, 0.0)])
    tr = simulate(p, MatchingController(), ld, SimConfig(dt=dt, t_end=4e-3, record_every=1), PlantState(v_dc=1000.0))
    k = int(round(ts / dt))
    ratio = tr.i_load[:, 1] / np.where(tr.v_ab[:, 1] == 0, np.nan, tr.v_ab[:, 1])
    assert ratio[k - 1] == pytest.approx(0.1)
    assert ratio[k] == pytest.approx(0.4)
    assert tr.event[k] == 1 and tr.event.sum() == 1


def test_first_segment_must_start_at_zero(p):
    with pytest.raises(ConfigError):
        simulate(p, None, LoadModel.steps([(0.1, 0.0, 0.0)]), SimConfig(t_end=0.2))

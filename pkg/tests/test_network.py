import numpy as np
import pytest

from convmatch.errors import ConfigError
from convmatch.network import (
    NetworkState, build_network, network_deriv, default_line, series_load_admittance,
    simulate_network, single_converter_oracle,
)
from convmatch.plant import ConverterParams, PlantState
from convmatch.sim import SimConfig

J = np.array([[0.0, -1.0], [1.0, 0.0]])


def tree_cfg(**kw):
    cfg = {"topology": "tree", "loads": [[(0.0, 0.3, 0.001)], [(0.0, 0.1, 0.0)]]}
    cfg.update(kw)
    return cfg


def random_state(rng, n_lines):
    plants = tuple(
        PlantState(v_dc=rng.uniform(500, 1100), i_ab=tuple(rng.normal(0, 20, 2)),
                   v_ab=tuple(rng.normal(0, 150, 2)))
        for _ in range(2)
    )
    lines = tuple(tuple(rng.normal(0, 10, 2)) for _ in range(n_lines))
    return NetworkState(plants, tuple(rng.uniform(-3, 3, 2)), lines)


def plant_part(p, s, th):
    xi = np.array([-np.sin(th), np.cos(th)])
    m = p.mu * xi
    i, v = np.array(s.i_ab), np.array(s.v_ab)
    dv_dc = (-p.g_dc * s.v_dc + p.i_dc - 0.5 * m @ i) / p.c_dc
    di = (-p.r * i + 0.5 * m * s.v_dc - v) / p.l
    dxi = p.eta * s.v_dc * (J @ xi)
    return dv_dc, di, dxi


def test_default_line_values(p):
    assert default_line(p) == pytest.approx((0.5, 5e-5))


def test_build_shapes():
    _, st = build_network(tree_cfg())
    assert len(st.i_net) == 1
    _, st = build_network({"topology": "star", "r_load": 10.0})
    assert len(st.i_net) == 2
    assert st.plants[0].v_dc == 1000.0


@pytest.mark.parametrize("bad", [
    {"topology": "ring"},
    tree_cfg(l_net=0.0),
    tree_cfg(r_net=-1.0),
    {"topology": "star"},
    {"topology": "star", "r_load": 0.0},
    {"topology": "tree"},
    tree_cfg(enabled=[False, False]),
])
def test_build_rejects(bad):
    with pytest.raises(ConfigError):
        build_network(bad)


def test_state_shape_mismatch():
    params, st = build_network(tree_cfg())
    wrong = NetworkState(st.plants, st.theta, ((0.0, 0.0), (0.0, 0.0)))
    with pytest.raises(ConfigError):
        network_deriv(params, wrong)


def test_tree_derivative_by_hand(rng):
    params, _ = build_network(tree_cfg())
    st = random_state(rng, 1)
    d = network_deriv(params, st)
    inet = np.array(st.i_net[0])
    loads = [(0.3, 0.001), (0.1, 0.0)]
    for k in range(2):
        p, s = params.converters[k], st.plants[k]
        dv_dc, di, dxi = plant_part(p, s, st.theta[k])
        g, b = loads[k]
        v = np.array(s.v_ab)
        sign = -1.0 if k == 0 else 1.0
        dv = (np.array(s.i_ab) - (g * v + b * (J @ v)) + sign * inet) / p.c
        o = 7 * k
        assert d[o] == pytest.approx(dv_dc)
        assert d[o + 1:o + 3] == pytest.approx(di)
        assert d[o + 3:o + 5] == pytest.approx(dv)
        assert d[o + 5:o + 7] == pytest.approx(dxi)
    v1, v2 = np.array(st.plants[0].v_ab), np.array(st.plants[1].v_ab)
    dinet = (-params.r_net * inet + v1 - v2) / params.l_net
    assert d[14:16] == pytest.approx(dinet)


def test_star_derivative_by_hand(rng):
    params, _ = build_network({"topology": "star", "r_load": 8.0})
    st = random_state(rng, 2)
    d = network_deriv(params, st)
    i1, i2 = (np.array(x) for x in st.i_net)
    v_load = 8.0 * (i1 + i2)
    for k, inet in enumerate((i1, i2)):
        p, s = params.converters[k], st.plants[k]
        v = np.array(s.v_ab)
        dv = (np.array(s.i_ab) - inet) / p.c
        assert d[7 * k + 3:7 * k + 5] == pytest.approx(dv)
        dl = (-params.r_net * inet + v - v_load) / params.l_net
        assert d[14 + 2 * k:16 + 2 * k] == pytest.approx(dl)


def test_symmetric_tree_carries_no_line_current():
    cfg = {"topology": "tree", "loads": [[(0.0, 0.2, 0.001)], [(0.0, 0.2, 0.001)]]}
    params, st = build_network(cfg)
    tr = simulate_network(params, st, SimConfig(dt=1e-6, t_end=0.1, record_every=10))
    assert np.max(np.abs(tr.i_net(1))) < 1e-6
    assert tr.v_dc(1) == pytest.approx(tr.v_dc(2), abs=1e-9)


def test_star_with_one_converter_matches_single_converter():
    params, st = build_network({"topology": "star", "r_load": 10.0, "enabled": [True, False]})
    tr = simulate_network(params, st, SimConfig(dt=1e-6, t_end=0.4, record_every=10))
    eq = single_converter_oracle(params, 1)
    sel = tr.tail(0.1)
    assert np.mean(tr.v_dc(1)[sel]) == pytest.approx(eq.v_dc_s, rel=0.01)
    assert np.mean(np.linalg.norm(tr.v_ab(1)[sel], axis=1)) == pytest.approx(eq.v_amp, rel=0.01)
    assert np.mean(np.linalg.norm(tr.i_net(1)[sel], axis=1)) == pytest.approx(eq.il_amp, rel=0.01)
    assert np.max(np.abs(tr.i_net(2))) == 0.0
    with pytest.raises(ConfigError):
        single_converter_oracle(build_network(tree_cfg())[0])


def test_series_load_admittance():
    g, b = series_load_admittance(3.0, 4.0)
    z = np.array([[3.0, -4.0], [4.0, 3.0]])
    y = np.array([[g, -b], [b, g]])
    assert y @ z == pytest.approx(np.eye(2))


@pytest.mark.parametrize("topo", ["tree", "star"])
def test_buses_synchronize(topo):
    convs = [ConverterParams(), ConverterParams(i_dc=95.0)]
    cfg = tree_cfg(converters=convs, theta0=[0.0, 0.5]) if topo == "tree" else \
        {"topology": "star", "r_load": 10.0, "converters": convs, "theta0": [0.0, 0.5]}
    params, st = build_network(cfg)
    tr = simulate_network(params, st, SimConfig(dt=1e-6, t_end=0.5, record_every=20))
    f1, f2 = tr.steady_frequency(1, 0.1), tr.steady_frequency(2, 0.1)
    assert abs(f1 - f2) < 1e-4 * abs(f1)
    book = tr.power_bookkeeping(0.1)
    assert book["source"] >= book["load"]
    assert book["source"] == pytest.approx(book["load"] + book["losses"], rel=1e-3)
    assert tr.passivity_violation() <= 1e-6 * np.max(tr.storage())


def test_trace_columns_and_csv(tmp_path):
    params, st = build_network({"topology": "star", "r_load": 10.0})
    tr = simulate_network(params, st, SimConfig(dt=1e-6, t_end=0.002, record_every=100))
    cols = tr.columns()
    assert {"v_dc_1", "v_dc_2", "inet1_tostar_alpha", "v_load_beta"} <= set(cols)
    tr.to_csv(tmp_path / "n.csv")
    head = (tmp_path / "n.csv").read_text().splitlines()[0].split(",")
    assert head == list(cols)
    with pytest.raises(ConfigError):
        tr.v_dc(3)

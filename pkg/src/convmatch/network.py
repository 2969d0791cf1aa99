"""Two matching-controlled converters joined by RL lines.

Topologies:

* ``tree``: one line between the two converter buses, each bus with its own
  impedance load.  The line current is positive from bus 1 toward bus 2;
  bus 1 loses it and bus 2 gains it.
* ``star``: each converter feeds its own line into a common resistive load
  with no capacitor of its own, so the star-point voltage is algebraic,
  ``v_load = R_load (i_net1 + i_net2)``.  Line currents are positive toward
  the star point.

Both converters run plain matching control.  A converter can be disabled,
which zeroes its modulation and DC source and opens its line.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernel_py
from . import _layout as L
from . import kernel
from .errors import ConfigError, DivergenceError
from .plant import ConverterParams, LoadModel, PlantState
from .sim import SimConfig, estimate_amp_freq, instantaneous_omega
from .analysis import storage_violation

TOPOLOGIES = {"tree": L.TOPO_TREE, "star": L.TOPO_STAR}


def default_line(p: ConverterParams) -> tuple[float, float]:
    """Line resistance and inductance scaled from the filter: ``5 R`` and ``L / 10``."""
    return 5.0 * p.r, p.l / 10.0


@dataclass(frozen=True)
class NetworkParams:
    converters: tuple[ConverterParams, ConverterParams]
    r_net: float
    l_net: float
    topology: str = "tree"
    loads: Optional[tuple[LoadModel, LoadModel]] = None
    r_load: Optional[float] = None
    enabled: tuple[bool, bool] = (True, True)

    def __post_init__(self):
        if self.topology not in TOPOLOGIES:
            raise ConfigError(f"topology must be 'tree' or 'star', not {self.topology!r}")
        if len(self.converters) != 2:
            raise ConfigError("a network has exactly two converters")
        for name in ("r_net", "l_net"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be positive")
        if self.topology == "tree":
            if self.loads is None or len(self.loads) != 2:
                raise ConfigError("tree topology needs one load model per bus")
            for ld in self.loads:
                for seg in ld.schedule:
                    if seg.i_const[0] != 0 or seg.i_const[1] != 0:
                        raise ConfigError("network buses take impedance loads only")
        else:
            if self.r_load is None or not (math.isfinite(self.r_load) and self.r_load > 0):
                raise ConfigError("star topology needs a positive r_load")
        if len(self.enabled) != 2 or not any(self.enabled):
            raise ConfigError("at least one converter must be enabled")

    @property
    def n_lines(self) -> int:
        return 1 if self.topology == "tree" else 2


@dataclass(frozen=True)
class NetworkState:
    plants: tuple[PlantState, PlantState]
    theta: tuple[float, float] = (0.0, 0.0)
    i_net: tuple = ((0.0, 0.0),)

    def as_array(self) -> np.ndarray:
        x = np.zeros(L.NXN)
        for k in range(2):
            o = k * L.NXB
            s = self.plants[k]
            x[o:o + 5] = [s.v_dc, s.i_ab[0], s.i_ab[1], s.v_ab[0], s.v_ab[1]]
            x[o + 5] = -math.sin(self.theta[k])
            x[o + 6] = math.cos(self.theta[k])
        for j, line in enumerate(self.i_net):
            x[L.NX_LINE + 2 * j:L.NX_LINE + 2 * j + 2] = line
        return x


def _check_shapes(params: NetworkParams, state: NetworkState) -> None:
    if len(state.plants) != 2 or len(state.theta) != 2:
        raise ConfigError("network state needs two converter states")
    if len(state.i_net) != params.n_lines:
        raise ConfigError(
            f"{params.topology} topology has {params.n_lines} line current(s), "
            f"state carries {len(state.i_net)}"
        )
    for line in state.i_net:
        if len(line) != 2:
            raise ConfigError("line currents are two-axis vectors")
    for k in range(2):
        if not params.enabled[k] and any(v != 0 for v in state.i_net[min(k, params.n_lines - 1)]):
            raise ConfigError("the line of a disabled converter must start at zero current")


def build_network(cfg: dict) -> tuple[NetworkParams, NetworkState]:
    """Validate a plain-dict description and return parameters plus initial state.

    Keys: ``topology``; ``converters`` (list of two ``ConverterParams`` or
    dicts of their fields); optional ``r_net``/``l_net`` (default: scaled
    from converter 1's filter); ``loads`` as two lists of ``(t, g, b)`` rows
    for the tree or ``r_load`` for the star; optional ``v_dc0`` (default
    1000 V), ``theta0`` pair and ``enabled`` pair.
    """
    topo = cfg.get("topology")
    if topo not in TOPOLOGIES:
        raise ConfigError(f"invalid topology {topo!r}")
    convs = cfg.get("converters", [{}, {}])
    if len(convs) != 2:
        raise ConfigError("exactly two converters are required")
    params = tuple(c if isinstance(c, ConverterParams) else ConverterParams(**c) for c in convs)
    r0, l0 = default_line(params[0])
    r_net = float(cfg.get("r_net", r0))
    l_net = float(cfg.get("l_net", l0))
    enabled = tuple(bool(e) for e in cfg.get("enabled", (True, True)))
    loads = None
    if topo == "tree":
        rows = cfg.get("loads")
        if rows is None or len(rows) != 2:
            raise ConfigError("tree topology needs 'loads' for both buses")
        loads = tuple(r if isinstance(r, LoadModel) else LoadModel.steps(r) for r in rows)
    np_ = NetworkParams(params, r_net, l_net, topo, loads, cfg.get("r_load"), enabled)
    v0 = float(cfg.get("v_dc0", 1000.0))
    theta = tuple(float(t) for t in cfg.get("theta0", (0.0, 0.0)))
    plants = tuple(PlantState(v_dc=v0 if enabled[k] else 0.0) for k in range(2))
    lines = tuple((0.0, 0.0) for _ in range(np_.n_lines))
    st = NetworkState(plants, theta, lines)
    _check_shapes(np_, st)
    return np_, st


def pack_network(params: NetworkParams) -> np.ndarray:
    par = np.zeros(L.NPARN)
    for k, p in enumerate(params.converters):
        on = params.enabled[k]
        par[k * L.NB:(k + 1) * L.NB] = [
            p.c_dc, p.g_dc, p.i_dc if on else 0.0, p.r, p.l, p.c, p.eta, p.mu if on else 0.0,
        ]
        par[L.NP_OPEN1 + k] = 0.0 if on else 1.0
    par[L.NP_RNET] = params.r_net
    par[L.NP_LNET] = params.l_net
    par[L.NP_TOPO] = TOPOLOGIES[params.topology]
    return par


def _load_table(params: NetworkParams, cfg: SimConfig):
    """Merge the per-bus schedules into one piecewise-constant table."""
    if params.topology == "star":
        row = np.zeros(L.NLOADN)
        row[L.NL_R] = params.r_load
        return np.zeros(1, dtype=np.int_), row[None, :]
    times = sorted({s.t_start for ld in params.loads for s in ld.schedule})
    if times[0] > 0:
        raise ConfigError("load schedules must start at t=0")
    rows = []
    for t in times:
        row = np.zeros(L.NLOADN)
        for k, ld in enumerate(params.loads):
            seg = ld.segment_at(t)
            row[L.NL_G1 + 2 * k] = seg.g
            row[L.NL_B1 + 2 * k] = seg.b
        rows.append(row)
    steps = np.array([cfg.grid_index(t) for t in times], dtype=np.int_)
    return steps, np.array(rows)


def network_deriv(params: NetworkParams, state: NetworkState, t: float = 0.0) -> np.ndarray:
    """Time derivative of the packed network state at ``t``.

    Layout: per converter ``(v_dc, i_a, i_b, v_a, v_b, xi_a, xi_b)``, then
    line currents, then the two energy accumulators.
    """
    _check_shapes(params, state)
    steps, rows = _load_table(params, SimConfig())
    seg = int(np.searchsorted(steps, t / SimConfig().dt, side="right") - 1) if len(steps) > 1 else 0
    x = state.as_array()
    dx = [0.0] * L.NXN
    aux = [0.0] * L.NAUXN
    _kernel_py.net_deriv(list(x), list(pack_network(params)), list(rows[max(seg, 0)]), dx, aux)
    return np.array(dx)


@dataclass
class NetworkTrace:
    t: np.ndarray
    x: np.ndarray
    aux: np.ndarray
    params: NetworkParams
    dt: float
    record_every: int
    event_steps: tuple[int, ...] = ()
    meta: dict = field(default_factory=dict)

    def _o(self, k: int) -> int:
        if k not in (1, 2):
            raise ConfigError("buses are numbered 1 and 2")
        return (k - 1) * L.NXB

    def v_dc(self, k: int):
        return self.x[:, self._o(k)]

    def i_ab(self, k: int):
        o = self._o(k)
        return self.x[:, o + 1:o + 3]

    def v_ab(self, k: int):
        o = self._o(k)
        return self.x[:, o + 3:o + 5]

    def xi(self, k: int):
        o = self._o(k)
        return self.x[:, o + 5:o + 7]

    def m_ab(self, k: int):
        a = L.NA_M1A + 2 * (k - 1)
        return self.aux[:, a:a + 2]

    def i_load(self, k: int):
        a = L.NA_IL1A + 2 * (k - 1)
        return self.aux[:, a:a + 2]

    def i_net(self, j: int = 1):
        if j not in range(1, self.params.n_lines + 1):
            raise ConfigError(f"line {j} does not exist in a {self.params.topology} network")
        a = L.NX_LINE + 2 * (j - 1)
        return self.x[:, a:a + 2]

    @property
    def v_load(self):
        return self.aux[:, L.NA_VLA:L.NA_VLB + 1]

    def v_x(self, k: int):
        return 0.5 * self.m_ab(k) * self.v_dc(k)[:, None]

    def p_x(self, k: int):
        return np.einsum("ij,ij->i", self.v_x(k), self.i_ab(k))

    def q_x(self, k: int):
        vx, i = self.v_x(k), self.i_ab(k)
        return vx[:, 1] * i[:, 0] - vx[:, 0] * i[:, 1]

    def p_load(self, k: int):
        return np.einsum("ij,ij->i", self.v_ab(k), self.i_load(k))

    def q_load(self, k: int):
        v, i = self.v_ab(k), self.i_load(k)
        return v[:, 1] * i[:, 0] - v[:, 0] * i[:, 1]

    def omega_est(self, k: int):
        return instantaneous_omega(self.t, self.v_ab(k))

    def tail(self, fraction: float = 0.2) -> np.ndarray:
        return self.t >= self.t[-1] * (1.0 - fraction) - 1e-9 * self.dt

    def steady_frequency(self, k: int, fraction: float = 0.2) -> float:
        sel = self.tail(fraction)
        return estimate_amp_freq(self.t[sel], self.v_ab(k)[sel])[1]

    def storage(self):
        s = np.zeros(len(self.t))
        for k in (1, 2):
            p = self.params.converters[k - 1]
            i, v = self.i_ab(k), self.v_ab(k)
            s += 0.5 * (p.c_dc * self.v_dc(k) ** 2 + p.l * np.sum(i * i, axis=1)
                        + p.c * np.sum(v * v, axis=1))
        for j in range(1, self.params.n_lines + 1):
            i = self.i_net(j)
            s += 0.5 * self.params.l_net * np.sum(i * i, axis=1)
        return s

    def passivity_violation(self) -> float:
        return storage_violation(self.storage(), self.x[:, L.NX_ESUP])

    def power_bookkeeping(self, fraction: float = 0.2) -> dict:
        """Mean source power against mean load power plus losses over the tail."""
        sel = self.tail(fraction)
        src = 0.0
        loss = 0.0
        for k in (1, 2):
            p = self.params.converters[k - 1]
            i_dc = p.i_dc if self.params.enabled[k - 1] else 0.0
            vdc = self.v_dc(k)[sel]
            i = self.i_ab(k)[sel]
            src += float(np.mean(i_dc * vdc))
            loss += float(np.mean(p.g_dc * vdc**2 + p.r * np.sum(i * i, axis=1)))
        for j in range(1, self.params.n_lines + 1):
            i = self.i_net(j)[sel]
            loss += float(np.mean(self.params.r_net * np.sum(i * i, axis=1)))
        if self.params.topology == "star":
            vl = self.v_load[sel]
            load = float(np.mean(np.sum(vl * vl, axis=1) / self.params.r_load))
        else:
            load = float(np.mean(self.p_load(1)[sel] + self.p_load(2)[sel]))
        return {"source": src, "load": load, "losses": loss}

    def columns(self) -> dict:
        cols = {"t": self.t}
        for k in (1, 2):
            s = f"_{k}"
            cols.update({
                "v_dc" + s: self.v_dc(k),
                "i_alpha" + s: self.i_ab(k)[:, 0],
                "i_beta" + s: self.i_ab(k)[:, 1],
                "v_alpha" + s: self.v_ab(k)[:, 0],
                "v_beta" + s: self.v_ab(k)[:, 1],
                "m_alpha" + s: self.m_ab(k)[:, 0],
                "m_beta" + s: self.m_ab(k)[:, 1],
                "P_x" + s: self.p_x(k),
                "Q_x" + s: self.q_x(k),
                "P_load" + s: self.p_load(k),
                "Q_load" + s: self.q_load(k),
                "amp_vx" + s: np.linalg.norm(self.v_x(k), axis=1),
                "amp_v" + s: np.linalg.norm(self.v_ab(k), axis=1),
                "amp_il" + s: np.linalg.norm(self.i_ab(k), axis=1),
                "omega_est" + s: self.omega_est(k),
            })
        if self.params.topology == "tree":
            cols["inet_1to2_alpha"] = self.i_net(1)[:, 0]
            cols["inet_1to2_beta"] = self.i_net(1)[:, 1]
        else:
            for j in (1, 2):
                cols[f"inet{j}_tostar_alpha"] = self.i_net(j)[:, 0]
                cols[f"inet{j}_tostar_beta"] = self.i_net(j)[:, 1]
            cols["v_load_alpha"] = self.v_load[:, 0]
            cols["v_load_beta"] = self.v_load[:, 1]
        ev = np.zeros(len(self.t), dtype=int)
        for s in self.event_steps:
            k = -(-s // self.record_every)
            if 0 < k < len(ev):
                ev[k] = 1
        cols["event"] = ev
        return cols

    def to_csv(self, path) -> None:
        cols = self.columns()
        names = list(cols)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names)
            for k in range(len(self.t)):
                w.writerow([str(int(cols[n][k])) if n == "event" else repr(float(cols[n][k]))
                            for n in names])


def simulate_network(params: NetworkParams, state: NetworkState, cfg: SimConfig) -> NetworkTrace:
    """Integrate the network with the same RK4 kernel as single converters."""
    _check_shapes(params, state)
    par = pack_network(params)
    x0 = state.as_array()
    steps, rows = _load_table(params, cfg)
    n = cfg.n_steps
    every = int(cfg.record_every)
    nrec = n // every + 1
    out_x = np.zeros((nrec, L.NXN))
    out_aux = np.zeros((nrec, L.NAUXN))
    rec, _, status, last_ok = kernel.run_network(
        x0, par, np.ascontiguousarray(steps), np.ascontiguousarray(rows), n, cfg.dt, every, out_x, out_aux
    )
    trace = NetworkTrace(
        np.arange(rec) * cfg.dt * every, out_x[:rec], out_aux[:rec], params, cfg.dt, every,
        tuple(int(s) for s in steps[1:]), {"par": par, "x0": x0},
    )
    if status:
        raise DivergenceError(f"network state became non-finite after t={last_ok * cfg.dt:.6g}s",
                              last_ok * cfg.dt, trace)
    return trace


def series_load_admittance(r: float, x: float) -> tuple[float, float]:
    """``(g, b)`` of an impedance ``r I + x J`` seen as ``g I + b J``."""
    d = r * r + x * x
    return r / d, -x / d


def single_converter_oracle(params: NetworkParams, k: int = 1, iters: int = 20):
    """Steady state of converter ``k`` alone feeding its line into ``R_load``.

    The line inductance makes the equivalent admittance frequency dependent,
    so the dq equilibrium is iterated on ``omega`` until it is self-consistent.
    """
    from .analysis import dq_equilibrium

    if params.topology != "star":
        raise ConfigError("the single-converter reduction is defined for the star topology")
    p = params.converters[k - 1]
    w = p.eta * p.v_dc_open
    eq = None
    for _ in range(iters):
        g, b = series_load_admittance(params.r_net + params.r_load, w * params.l_net)
        eq = dq_equilibrium(p, g, b)
        if abs(eq.omega_s - w) < 1e-12 * w:
            break
        w = eq.omega_s
    return eq

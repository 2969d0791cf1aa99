"""Fixed-step RK4 integration, trace recording and signal estimators.

Two entry points:

* :func:`integrate` is a generic classical RK4 loop for any derivative
  callable (plus a compiled fast path for linear systems).  It backs the
  small oracle problems and the reduced analysis models.
* :func:`simulate` runs one converter with its controller through the
  compiled kernel and wraps the result in a :class:`SimTrace`.

Load steps are scheduled events: a step at ``t_s`` must land on the
integration grid and is seen by every RK stage of the step that starts at
``t_s`` (half-open segments).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import _layout as L
from . import kernel
from .errors import AmplitudeUndefinedError, ConfigError, DivergenceError
from .plant import ConverterParams, LoadModel, PlantState, pack_params

EPS_AMP = 1e-9

CSV_HEADER = (
    "t", "v_dc", "i_alpha", "i_beta", "v_alpha", "v_beta", "m_alpha", "m_beta",
    "P_x", "Q_x", "P_load", "Q_load", "amp_vx", "amp_v", "amp_il", "omega_est", "event",
)


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-6
    t_end: float = 0.1
    record_every: int = 10
    steady_tol: float = 1e-4
    steady_window: float = 0.02

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigError("dt must be positive")
        if not (self.t_end > 0 and math.isfinite(self.t_end)):
            raise ConfigError("t_end must be positive")
        if int(self.record_every) != self.record_every or self.record_every < 1:
            raise ConfigError("record_every must be a positive integer")
        if not self.steady_tol > 0:
            raise ConfigError("steady_tol must be positive")
        if not self.steady_window > 0:
            raise ConfigError("steady_window must be positive")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def grid_index(self, t: float) -> int:
        """Step index of ``t``; raises if ``t`` is off the integration grid."""
        k = t / self.dt
        kr = int(round(k))
        if abs(k - kr) > 1e-6 * max(1.0, abs(k)):
            raise ConfigError(f"event time {t} is not a multiple of dt={self.dt}")
        return kr


# ---------------------------------------------------------------- generic RK4


@dataclass
class Trajectory:
    """Output of :func:`integrate`: sample times and states."""

    t: np.ndarray
    x: np.ndarray


@dataclass(frozen=True)
class LinearSystem:
    """``x' = A x``; integrated by the compiled kernel."""

    a: np.ndarray


def _event_steps(events, cfg: SimConfig) -> list[int]:
    if events is None:
        return [0]
    times = [s.t_start for s in events.schedule] if isinstance(events, LoadModel) else list(events)
    steps = [cfg.grid_index(t) for t in times]
    if not steps or steps[0] != 0:
        steps = [0] + steps
    return steps


def integrate(system, x0, cfg: SimConfig, events=None) -> Trajectory:
    """Classical fixed-step RK4.

    ``system`` is either a :class:`LinearSystem` or a callable.  With
    ``events`` (a :class:`LoadModel` or a list of switch times) the callable
    is ``f(t, x, seg)`` where ``seg`` is the index of the segment active at
    the start of the step; otherwise it is ``f(t, x)``.
    """
    x = np.array(x0, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ConfigError("initial state is not finite")
    n = cfg.n_steps
    every = int(cfg.record_every)
    nrec = n // every + 1

    if isinstance(system, LinearSystem):
        a = np.ascontiguousarray(system.a, dtype=float)
        out = np.zeros((nrec, x.size))
        rec, _, status, last_ok = kernel.run_linear(a, x, n, cfg.dt, every, out)
        t = np.arange(rec) * cfg.dt * every
        if status:
            raise DivergenceError(
                "non-finite state", last_ok * cfg.dt, Trajectory(t, out[:rec])
            )
        return Trajectory(t, out)

    steps = _event_steps(events, cfg)
    if events is None:
        def f(t, y, seg):
            return system(t, y)
    else:
        f = system
    dt = cfg.dt
    out = np.zeros((nrec, x.size))
    out[0] = x
    rec = 1
    seg = 0
    for k in range(n):
        while seg + 1 < len(steps) and k >= steps[seg + 1]:
            seg += 1
        t = k * dt
        k1 = np.asarray(f(t, x, seg), dtype=float)
        k2 = np.asarray(f(t + 0.5 * dt, x + 0.5 * dt * k1, seg), dtype=float)
        k3 = np.asarray(f(t + 0.5 * dt, x + 0.5 * dt * k2, seg), dtype=float)
        k4 = np.asarray(f(t + dt, x + dt * k3, seg), dtype=float)
        xn = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(xn)):
            tt = np.arange(rec) * dt * every
            raise DivergenceError("non-finite state", k * dt, Trajectory(tt, out[:rec]))
        x = xn
        if (k + 1) % every == 0:
            out[rec] = x
            rec += 1
    return Trajectory(np.arange(nrec) * dt * every, out)


# ---------------------------------------------------------------- estimators


def estimate_amp_freq(t, z) -> tuple[float, float]:
    """Mean amplitude and mean angular velocity of a two-axis signal window.

    Frequency comes from the cross product ``(z_a dz_b - z_b dz_a)/|z|^2``
    with central differences, so it is immune to angle wrapping.
    """
    t = np.asarray(t, dtype=float)
    z = np.asarray(z, dtype=float)
    if len(t) < 3:
        raise ConfigError("window needs at least 3 samples")
    r2 = z[:, 0] ** 2 + z[:, 1] ** 2
    if np.min(r2) < EPS_AMP**2:
        raise AmplitudeUndefinedError("signal passes through the origin")
    amp = float(np.mean(np.sqrt(r2)))
    h = (t[2:] - t[:-2])[:, None]
    dz = (z[2:] - z[:-2]) / h
    zi = z[1:-1]
    w = (zi[:, 0] * dz[:, 1] - zi[:, 1] * dz[:, 0]) / r2[1:-1]
    return amp, float(np.mean(w))


def instantaneous_omega(t, z) -> np.ndarray:
    """Per-sample cross-product frequency; NaN where the signal vanishes."""
    t = np.asarray(t, dtype=float)
    z = np.asarray(z, dtype=float)
    if len(t) < 3:
        return np.full(len(t), np.nan)
    dz = np.gradient(z, t, axis=0)
    r2 = z[:, 0] ** 2 + z[:, 1] ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        w = (z[:, 0] * dz[:, 1] - z[:, 1] * dz[:, 0]) / r2
    w[r2 < EPS_AMP**2] = np.nan
    return w


def settle_time(t, signals: Sequence[np.ndarray], tol: float, window: float) -> Optional[int]:
    """Index of the first sample after which every window is quiet.

    A window starting at sample k is quiet when each signal's spread
    ``(max - min) / |mean|`` stays below ``tol``.  Signals that are NaN over
    the final window (e.g. the frequency of an identically zero AC voltage)
    are ignored.  Returns ``None`` if the trace never settles.
    """
    t = np.asarray(t, dtype=float)
    if len(t) < 2:
        return None
    h = t[1] - t[0]
    w = int(round(window / h)) + 1
    if w > len(t):
        return None
    ok = np.ones(len(t) - w + 1, dtype=bool)
    for s in signals:
        s = np.asarray(s, dtype=float)
        if np.all(np.isnan(s[-w:])):
            continue
        win = np.lib.stride_tricks.sliding_window_view(s, w)
        with np.errstate(invalid="ignore"):
            spread = (win.max(axis=1) - win.min(axis=1)) / np.maximum(
                np.abs(win.mean(axis=1)), 1e-12
            )
        ok &= spread < tol  # NaN compares False
    if not ok[-1]:
        return None
    bad = np.flatnonzero(~ok)
    return 0 if bad.size == 0 else int(bad[-1] + 1)


# ---------------------------------------------------------------- traces


@dataclass
class SimTrace:
    """Uniformly sampled record of one closed-loop simulation.

    Raw storage is the kernel state ``x`` and auxiliary outputs ``aux`` per
    sample; every derived column is recomputed from those on demand.
    """

    t: np.ndarray
    x: np.ndarray
    aux: np.ndarray
    params: ConverterParams
    dt: float
    record_every: int
    flags: int = 0
    event_steps: tuple[int, ...] = ()
    controller_code: int = L.CTRL_FIXED
    meta: dict = field(default_factory=dict)

    # raw channels
    @property
    def v_dc(self):
        return self.x[:, L.X_VDC]

    @property
    def i_ab(self):
        return self.x[:, L.X_IA:L.X_IB + 1]

    @property
    def v_ab(self):
        return self.x[:, L.X_VA:L.X_VB + 1]

    @property
    def m_ab(self):
        return self.aux[:, L.A_MA:L.A_MB + 1]

    @property
    def i_load(self):
        return self.aux[:, L.A_ILA:L.A_ILB + 1]

    @property
    def i_dc(self):
        return self.aux[:, L.A_IDC]

    @property
    def mu(self):
        return self.aux[:, L.A_MU]

    @property
    def eta(self):
        return self.aux[:, L.A_ETA]

    @property
    def v_dc_dot(self):
        return self.aux[:, L.A_VDC_DOT]

    @property
    def sample_flags(self):
        return self.aux[:, L.A_FLAGS].astype(int)

    @property
    def xi(self):
        """Oscillator state of the matching controller."""
        return self.x[:, L.X_XI_A:L.X_XI_B + 1]

    @property
    def theta_v(self):
        """Virtual angle recovered from the oscillator state."""
        return np.arctan2(-self.x[:, L.X_XI_A], self.x[:, L.X_XI_B])

    @property
    def i_gamma(self):
        return self.x[:, L.X_IG]

    @property
    def v_gamma(self):
        return self.x[:, L.X_VG]

    @property
    def energy_supplied(self):
        """Integral of ``i_dc v_dc - i_load . v`` accumulated by the integrator."""
        return self.x[:, L.X_ESUP]

    @property
    def energy_dissipated(self):
        return self.x[:, L.X_EDIS]

    # derived channels
    @property
    def v_x(self):
        return 0.5 * self.m_ab * self.v_dc[:, None]

    @property
    def p_x(self):
        return np.einsum("ij,ij->i", self.v_x, self.i_ab)

    @property
    def q_x(self):
        vx, i = self.v_x, self.i_ab
        return vx[:, 1] * i[:, 0] - vx[:, 0] * i[:, 1]

    @property
    def p_load(self):
        return np.einsum("ij,ij->i", self.v_ab, self.i_load)

    @property
    def q_load(self):
        v, i = self.v_ab, self.i_load
        return v[:, 1] * i[:, 0] - v[:, 0] * i[:, 1]

    @property
    def amp_vx(self):
        return np.linalg.norm(self.v_x, axis=1)

    @property
    def amp_v(self):
        return np.linalg.norm(self.v_ab, axis=1)

    @property
    def amp_il(self):
        return np.linalg.norm(self.i_ab, axis=1)

    @property
    def omega_est(self):
        return instantaneous_omega(self.t, self.v_ab)

    @property
    def event(self):
        """1 on the first sample at or after each load step, else 0."""
        ev = np.zeros(len(self.t), dtype=int)
        for s in self.event_steps:
            if s <= 0:
                continue
            k = -(-s // self.record_every)
            if k < len(ev):
                ev[k] = 1
        return ev

    def window(self, t0: float, t1: float | None = None) -> np.ndarray:
        """Boolean mask of samples with ``t0 <= t <= t1``."""
        t1 = self.t[-1] if t1 is None else t1
        eps = 1e-9 * self.dt
        return (self.t >= t0 - eps) & (self.t <= t1 + eps)

    def tail(self, fraction: float = 0.2) -> np.ndarray:
        return self.window(self.t[-1] * (1.0 - fraction))

    def columns(self) -> dict:
        return {
            "t": self.t,
            "v_dc": self.v_dc,
            "i_alpha": self.i_ab[:, 0],
            "i_beta": self.i_ab[:, 1],
            "v_alpha": self.v_ab[:, 0],
            "v_beta": self.v_ab[:, 1],
            "m_alpha": self.m_ab[:, 0],
            "m_beta": self.m_ab[:, 1],
            "P_x": self.p_x,
            "Q_x": self.q_x,
            "P_load": self.p_load,
            "Q_load": self.q_load,
            "amp_vx": self.amp_vx,
            "amp_v": self.amp_v,
            "amp_il": self.amp_il,
            "omega_est": self.omega_est,
            "event": self.event,
        }

    def to_csv(self, path) -> None:
        cols = self.columns()
        data = [cols[h] for h in CSV_HEADER]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_HEADER)
            for k in range(len(self.t)):
                w.writerow([repr(float(c[k])) if h != "event" else str(int(c[k]))
                            for h, c in zip(CSV_HEADER, data)])


def read_trace_csv(path) -> dict:
    """Load a trace CSV back into column arrays."""
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = [list(map(float, row)) for row in r]
    arr = np.array(rows) if rows else np.zeros((0, len(header)))
    return {h: arr[:, k] for k, h in enumerate(header)}


def detect_steady_state(trace: SimTrace, cfg: SimConfig):
    """First time after which DC voltage, frequency and amplitudes stay quiet.

    Returns ``(t_settle, values)`` with values averaged over the final window,
    or ``None``.
    """
    return steady_from_columns(trace.columns(), cfg)


def steady_from_columns(cols: dict, cfg: SimConfig):
    """:func:`detect_steady_state` on CSV-style columns (see ``CSV_HEADER``).

    Working from the exported columns alone keeps every summary value
    reproducible from the trace file.
    """
    t = np.asarray(cols["t"], dtype=float)
    sigs = {name: np.asarray(cols[key], dtype=float) for name, key in
            (("v_dc", "v_dc"), ("omega", "omega_est"), ("amp_v", "amp_v"), ("amp_vx", "amp_vx"))}
    k = settle_time(t, list(sigs.values()), cfg.steady_tol, cfg.steady_window)
    if k is None:
        return None
    eps = 1e-9 * cfg.dt
    last = t >= t[-1] - cfg.steady_window - eps
    vals = {name: float(np.nanmean(s[last])) if not np.all(np.isnan(s[last])) else float("nan")
            for name, s in sigs.items()}
    for name, key in (("p_x", "P_x"), ("q_x", "Q_x"), ("p_load", "P_load"),
                      ("q_load", "Q_load"), ("amp_il", "amp_il")):
        vals[name] = float(np.mean(np.asarray(cols[key], dtype=float)[last]))
    return float(t[k]), vals


# ---------------------------------------------------------------- closed loop


class FixedModulation:
    """Constant modulation vector; the open-loop plant with no controller."""

    code = L.CTRL_FIXED

    def __init__(self, m_ab=(0.0, 0.0)):
        self.m_ab = (float(m_ab[0]), float(m_ab[1]))

    def pack(self, par: np.ndarray, x0: np.ndarray, p: ConverterParams) -> None:
        par[L.P_CTRL] = L.CTRL_FIXED
        par[L.P_FIX_MA], par[L.P_FIX_MB] = self.m_ab


def simulate(
    params: ConverterParams,
    controller,
    load: LoadModel,
    cfg: SimConfig,
    initial: PlantState | None = None,
) -> SimTrace:
    """Integrate one converter under ``controller`` and ``load``.

    ``controller`` is any object with ``pack(par, x0, params)``; each
    controller module provides one.  Raises :class:`DivergenceError` with the
    partial trace attached if the state blows up.
    """
    controller = FixedModulation() if controller is None else controller
    par = pack_params(params)
    x0 = np.zeros(L.NX)
    st = PlantState() if initial is None else initial
    x0[:L.X_ESUP] = st.as_array()
    controller.pack(par, x0, params)
    if load.schedule[0].t_start > 0:
        raise ConfigError("first load segment must start at t=0")
    steps = np.array([cfg.grid_index(max(s.t_start, 0.0)) for s in load.schedule], dtype=np.int_)
    rows = np.ascontiguousarray(load.as_rows())
    n = cfg.n_steps
    every = int(cfg.record_every)
    nrec = n // every + 1
    out_x = np.zeros((nrec, L.NX))
    out_aux = np.zeros((nrec, L.NAUX))
    rec, flags, status, last_ok = kernel.run_converter(
        x0, par, steps, rows, n, cfg.dt, every, out_x, out_aux
    )
    trace = SimTrace(
        t=np.arange(rec) * cfg.dt * every,
        x=out_x[:rec],
        aux=out_aux[:rec],
        params=params,
        dt=cfg.dt,
        record_every=every,
        flags=int(flags),
        event_steps=tuple(int(s) for s in steps[1:]),
        controller_code=int(par[L.P_CTRL]),
        meta={"par": par, "x0": x0},
    )
    if status:
        raise DivergenceError(
            f"state became non-finite after t={last_ok * cfg.dt:.6g}s",
            last_ok * cfg.dt,
            trace,
        )
    return trace

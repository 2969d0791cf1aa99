"""Averaged three-phase DC/AC converter with an LC output filter.

State: DC-link voltage ``v_dc``, filter inductor current ``i_ab``, filter
capacitor voltage ``v_ab`` and the decoupled zero-sequence pair
``(i_gamma, v_gamma)``.  The modulation ``m_ab`` is the only control input
apart from the DC current source ``i_dc``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import _layout as L
from .errors import ConfigError
from .frames import AlphaBetaSignal


@dataclass(frozen=True)
class ConverterParams:
    """Electrical constants of one converter plus the matching gains.

    Defaults are the 10 kW-class reference design used throughout the
    examples: 1 kV DC link, 50 Hz at nominal DC voltage.
    """

    c_dc: float = 1e-3
    g_dc: float = 0.1
    i_dc: float = 100.0
    r: float = 0.1
    l: float = 5e-4
    c: float = 1e-5
    eta: float = 0.3142
    mu: float = 0.33

    def __post_init__(self):
        for name in ("c_dc", "g_dc", "r", "l", "c"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be positive, got {v!r}")
        if not (0.0 < self.mu <= 1.0):
            raise ConfigError(f"mu must lie in (0, 1], got {self.mu!r}")
        if not self.eta > 0:
            raise ConfigError(f"eta must be positive, got {self.eta!r}")
        if not self.i_dc >= 0:
            raise ConfigError(f"i_dc must be non-negative, got {self.i_dc!r}")

    def with_(self, **changes) -> "ConverterParams":
        return replace(self, **changes)

    @property
    def v_dc_open(self) -> float:
        """Open-circuit DC voltage ``i_dc / g_dc``."""
        return self.i_dc / self.g_dc


@dataclass(frozen=True)
class PlantState:
    v_dc: float = 0.0
    i_ab: AlphaBetaSignal = AlphaBetaSignal(0.0, 0.0)
    v_ab: AlphaBetaSignal = AlphaBetaSignal(0.0, 0.0)
    i_gamma: float = 0.0
    v_gamma: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "i_ab", AlphaBetaSignal(*map(float, self.i_ab)))
        object.__setattr__(self, "v_ab", AlphaBetaSignal(*map(float, self.v_ab)))

    def as_array(self) -> np.ndarray:
        return np.array([self.v_dc, *self.i_ab, *self.v_ab, self.i_gamma, self.v_gamma])

    @classmethod
    def from_array(cls, x) -> "PlantState":
        return cls(float(x[0]), (x[1], x[2]), (x[3], x[4]), float(x[5]), float(x[6]))


@dataclass(frozen=True)
class LoadSegment:
    t_start: float
    g: float = 0.0
    b: float = 0.0
    i_const: AlphaBetaSignal = AlphaBetaSignal(0.0, 0.0)

    def admittance(self) -> np.ndarray:
        return np.array([[self.g, -self.b], [self.b, self.g]])


@dataclass(frozen=True)
class LoadModel:
    """Piecewise-constant load schedule.

    Each segment is active on ``[t_start, next t_start)``.  Within a segment
    the load current is ``G v + i_const`` with ``G = [[g, -b], [b, g]]``;
    ``b < 0`` is inductive.  Mixing impedance and constant current in one
    segment is allowed (superposition).
    """

    schedule: tuple[LoadSegment, ...] = field(default_factory=lambda: (LoadSegment(0.0),))

    def __post_init__(self):
        segs = tuple(
            s if isinstance(s, LoadSegment) else LoadSegment(*s) for s in self.schedule
        )
        if not segs:
            raise ConfigError("load schedule is empty")
        for s0, s1 in zip(segs, segs[1:]):
            if not s1.t_start > s0.t_start:
                raise ConfigError("load segment start times must be strictly increasing")
        for s in segs:
            if not all(math.isfinite(v) for v in (s.t_start, s.g, s.b, *s.i_const)):
                raise ConfigError("load segment values must be finite")
        object.__setattr__(self, "schedule", segs)

    @classmethod
    def constant(cls, g: float = 0.0, b: float = 0.0, i_const=(0.0, 0.0)) -> "LoadModel":
        return cls((LoadSegment(0.0, g, b, AlphaBetaSignal(*i_const)),))

    @classmethod
    def steps(cls, rows: Sequence[tuple[float, float, float]]) -> "LoadModel":
        """Impedance steps from ``(t_start, g, b)`` rows."""
        return cls(tuple(LoadSegment(t, g, b) for t, g, b in rows))

    def segment_at(self, t: float) -> LoadSegment:
        if t < self.schedule[0].t_start:
            raise ConfigError(f"no load segment active at t={t}")
        active = self.schedule[0]
        for s in self.schedule[1:]:
            if t >= s.t_start:
                active = s
            else:
                break
        return active

    def as_rows(self) -> np.ndarray:
        """Segment table in the kernel's column order."""
        out = np.zeros((len(self.schedule), L.NLOAD))
        for k, s in enumerate(self.schedule):
            out[k, L.L_G] = s.g
            out[k, L.L_B] = s.b
            out[k, L.L_ICA] = s.i_const[0]
            out[k, L.L_ICB] = s.i_const[1]
        return out


@dataclass(frozen=True)
class ModulationCommand:
    m_ab: AlphaBetaSignal = AlphaBetaSignal(0.0, 0.0)
    saturated: bool = False

    @classmethod
    def clamped(cls, ma: float, mb: float) -> "ModulationCommand":
        """Scale radially onto the unit disc when over-modulated."""
        n = math.hypot(ma, mb)
        if n > 1.0:
            return cls(AlphaBetaSignal(ma / n, mb / n), True)
        return cls(AlphaBetaSignal(float(ma), float(mb)), False)


def modulation_io(m: ModulationCommand, state: PlantState) -> tuple[float, AlphaBetaSignal]:
    """DC-side current ``i_x`` and AC terminal voltage ``v_x`` of the switching block."""
    ma, mb = m.m_ab
    i_x = 0.5 * (ma * state.i_ab[0] + mb * state.i_ab[1])
    return i_x, AlphaBetaSignal(0.5 * ma * state.v_dc, 0.5 * mb * state.v_dc)


def load_current(load: LoadModel, t: float, v_ab) -> AlphaBetaSignal:
    s = load.segment_at(t)
    va, vb = float(v_ab[0]), float(v_ab[1])
    return AlphaBetaSignal(
        s.g * va - s.b * vb + s.i_const[0], s.b * va + s.g * vb + s.i_const[1]
    )


def gamma_deriv(p: ConverterParams, i_gamma: float, v_gamma: float) -> tuple[float, float]:
    return (-p.r * i_gamma - v_gamma) / p.l, i_gamma / p.c


def converter_deriv(
    p: ConverterParams,
    state: PlantState,
    m: ModulationCommand,
    load: LoadModel,
    t: float,
    i_dc: float | None = None,
) -> PlantState:
    """Time derivative of the averaged model.

    ``i_dc`` overrides the nominal source current (used by frequency
    controllers acting on the DC source).  Over-modulation is clamped first.
    """
    src = p.i_dc if i_dc is None else i_dc
    mc = ModulationCommand.clamped(*m.m_ab) if not m.saturated else m
    ma, mb = mc.m_ab
    ia, ib = state.i_ab
    va, vb = state.v_ab
    il = load_current(load, t, state.v_ab)
    dv_dc = (-p.g_dc * state.v_dc + src - 0.5 * (ma * ia + mb * ib)) / p.c_dc
    di = ((-p.r * ia + 0.5 * ma * state.v_dc - va) / p.l,
          (-p.r * ib + 0.5 * mb * state.v_dc - vb) / p.l)
    dv = ((ia - il[0]) / p.c, (ib - il[1]) / p.c)
    dig, dvg = gamma_deriv(p, state.i_gamma, state.v_gamma)
    return PlantState(dv_dc, di, dv, dig, dvg)


def pack_params(p: ConverterParams) -> np.ndarray:
    """Kernel parameter vector with the plant block filled in."""
    par = np.zeros(L.NPAR)
    par[L.P_CDC] = p.c_dc
    par[L.P_GDC] = p.g_dc
    par[L.P_IDC] = p.i_dc
    par[L.P_R] = p.r
    par[L.P_L] = p.l
    par[L.P_C] = p.c
    par[L.P_ETA] = p.eta
    par[L.P_MU] = p.mu
    return par

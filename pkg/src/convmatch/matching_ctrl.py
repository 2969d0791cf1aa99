"""Matching control: the DC-link voltage sets the speed of the modulation.

The modulation rotates at ``omega_v = eta * v_dc`` with fixed amplitude
``mu``::

    theta_v' = eta * v_dc
    m        = mu * (-sin theta_v, cos theta_v)

so the DC capacitor behaves like the rotor of a synchronous machine
(inertia ``C_dc/eta^2``, damping ``G_dc/eta^2``, mechanical torque
``i_dc/eta``).  The angle is carried as a unit vector ``xi`` that is
renormalised after every step, which avoids angle wrapping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _layout as L
from .errors import ConfigError, SingularityError
from .frames import AlphaBetaSignal
from .outer_ctrl import AmpTrackConfig, EtaTrackConfig, IdcPidConfig, ReactiveShapeParams
from .plant import ConverterParams, LoadModel, ModulationCommand

EPS_AMP = 1e-9


@dataclass(frozen=True)
class MatchingState:
    xi: AlphaBetaSignal = AlphaBetaSignal(0.0, 1.0)

    @classmethod
    def from_angle(cls, theta_v: float) -> "MatchingState":
        return cls(AlphaBetaSignal(-math.sin(theta_v), math.cos(theta_v)))

    @property
    def theta_v(self) -> float:
        return math.atan2(-self.xi[0], self.xi[1])


def matching_step(p: ConverterParams, st: MatchingState, v_dc: float, dt: float):
    """Rotate the oscillator by ``eta*v_dc*dt`` and emit ``m = mu*xi``.

    Works for any sign of ``v_dc`` (the rotation direction follows it).
    Returns ``(ModulationCommand, MatchingState)``.
    """
    phi = p.eta * v_dc * dt
    c, s = math.cos(phi), math.sin(phi)
    xa, xb = st.xi
    na, nb = c * xa - s * xb, s * xa + c * xb
    n = math.hypot(na, nb)
    xi = AlphaBetaSignal(na / n, nb / n)
    return ModulationCommand(AlphaBetaSignal(p.mu * xi[0], p.mu * xi[1])), MatchingState(xi)


@dataclass(frozen=True)
class EquivalentMachine:
    """Synchronous-machine parameters the closed loop is equivalent to.

    In the machine picture ``mu = -2 eta L_m i_f``: the modulation amplitude
    plays the role of the field excitation.
    """

    inertia_eq: float
    damping_eq: float
    torque_m_eq: float
    tau_e_v: float
    omega_v: float


def equivalent_machine(p: ConverterParams, v_dc: float, i_x: float) -> EquivalentMachine:
    if p.eta <= 0:
        raise ConfigError("eta must be positive")
    e2 = p.eta * p.eta
    return EquivalentMachine(p.c_dc / e2, p.g_dc / e2, p.i_dc / p.eta, i_x / p.eta, p.eta * v_dc)


def vx_terminal_deriv(p: ConverterParams, v_x, i_ab) -> np.ndarray:
    """Time derivative of the modulated terminal voltage ``v_x = mu v_dc xi / 2``.

    Valid along matching-control trajectories with ``v_dc > 0``; singular at
    ``v_x = 0`` where the radial projection is undefined.
    """
    vx = np.asarray(v_x, dtype=float)
    i = np.asarray(i_ab, dtype=float)
    nv = float(np.hypot(vx[0], vx[1]))
    if nv <= EPS_AMP:
        raise SingularityError("terminal voltage too close to zero for the projection")
    mu = p.mu
    u = vx / nv
    proj_i = u * (u @ i)
    jv = np.array([-vx[1], vx[0]])
    rhs = (2.0 * p.i_dc / mu) * u - proj_i - (4.0 * p.g_dc / mu**2) * vx \
        + (8.0 * p.c_dc * p.eta / mu**3) * nv * jv
    return rhs * mu**2 / (4.0 * p.c_dc)


def machine_form_deriv(p: ConverterParams, load: LoadModel):
    """Right-hand side of the equivalent-machine form.

    State ``(theta_v, omega_v, i_a, i_b, v_a, v_b)``; returns ``f(t, x)``
    suitable for :func:`sim.integrate`.  Used to check that the closed loop
    and the machine form are the same system.
    """
    m_eq = p.c_dc / p.eta**2
    d_eq = p.g_dc / p.eta**2

    def f(t, x):
        th, w, ia, ib, va, vb = x
        seg = load.segment_at(t)
        ma, mb = -p.mu * math.sin(th), p.mu * math.cos(th)
        v_dc = w / p.eta
        i_x = 0.5 * (ma * ia + mb * ib)
        ila = seg.g * va - seg.b * vb + seg.i_const[0]
        ilb = seg.b * va + seg.g * vb + seg.i_const[1]
        return np.array([
            w,
            (-d_eq * w + p.i_dc / p.eta - i_x / p.eta) / m_eq,
            (-p.r * ia + 0.5 * ma * v_dc - va) / p.l,
            (-p.r * ib + 0.5 * mb * v_dc - vb) / p.l,
            (ia - ila) / p.c,
            (ib - ilb) / p.c,
        ])

    return f


@dataclass(frozen=True)
class MatchingController:
    """Matching control with optional outer loops, ready for :func:`sim.simulate`.

    At most one loop may act on each of ``mu``, ``eta`` and ``i_dc``.
    """

    theta0: float = 0.0
    amp: Optional[AmpTrackConfig] = None
    pid: Optional[IdcPidConfig] = None
    eta: Optional[EtaTrackConfig] = None
    shape: Optional[ReactiveShapeParams] = None

    code = L.CTRL_MATCHING

    def __post_init__(self):
        if self.shape is not None:
            clash = {"mu": self.amp, "eta": self.eta, "idc": self.pid}[self.shape.mode]
            if clash is not None:
                raise ConfigError(
                    f"reactive shaping on {self.shape.mode} conflicts with another loop on it"
                )

    def pack(self, par, x0, p: ConverterParams) -> None:
        par[L.P_CTRL] = L.CTRL_MATCHING
        x0[L.X_XI_A] = -math.sin(self.theta0)
        x0[L.X_XI_B] = math.cos(self.theta0)
        if self.amp is not None:
            self.amp.pack(par, x0, p)
        if self.pid is not None:
            self.pid.pack(par, x0, p)
        if self.eta is not None:
            self.eta.pack(par, x0, p)
        if self.shape is not None:
            self.shape.pack(par, x0, p)

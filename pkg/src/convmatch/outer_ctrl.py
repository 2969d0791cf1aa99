"""Outer loops wrapped around the matching controller.

* amplitude tracking: drive the inductor-current (or capacitor-voltage)
  amplitude to a set point by adapting the modulation amplitude ``mu``;
* frequency tracking through the DC source current (PID on ``v_dc``);
* frequency tracking through the angle gain ``eta`` (exact law and a
  virtual-synchronous-machine variant);
* static reactive-power feedback into ``mu``, ``eta`` or ``i_dc``.

Each loop has a small config dataclass, a pure step function (explicit
Euler, for use outside the simulator) and a ``pack`` method that writes
its gains into the kernel parameter vector.  Inside :func:`sim.simulate`
the same continuous-time laws are integrated jointly with the plant by RK4.

Error signs are measured minus reference throughout (``e_l = i_amp - i_ref``)
except the PID, which follows the usual reference minus measurement.  Both
choices give negative feedback with positive gains.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Optional

from . import _layout as L
from .errors import ConfigError
from .plant import ConverterParams

EPS_DIV = L.EPS_DIV
OMEGA_50HZ = 100.0 * math.pi


# ---------------------------------------------------------------- amplitude


@dataclass(frozen=True)
class AmpTrackConfig:
    """Gains of the three-level amplitude cascade.

    ``lambda_x`` is the bandwidth of the innermost ``mu`` loop
    (``k_x = 2*lambda_x``) and ``lambda0`` that of the current loop; the
    inner loop has to be at least ten times faster.
    """

    mode: Literal["current", "voltage"] = "current"
    il_ref: float = 20.0
    v_ref: float = 0.0
    k_p: float = 0.15
    k_i: float = 11.25
    k_x: float = 2e5
    lambda_x: float = 1e5
    lambda0: float = -100.0
    k_cp: float = 0.0
    k_ci: float = 0.0

    def __post_init__(self):
        if self.mode not in ("current", "voltage"):
            raise ConfigError(f"unknown amplitude-tracking mode {self.mode!r}")
        if abs(self.lambda_x) < 10.0 * abs(self.lambda0):
            raise ConfigError("mu loop must be at least ten times faster than the current loop")
        if self.k_x <= 0:
            raise ConfigError("k_x must be positive")

    def pack(self, par, x0, p: ConverterParams, mu0: Optional[float] = None) -> None:
        par[L.P_AMP_MODE] = L.AMP_CURRENT if self.mode == "current" else L.AMP_VOLTAGE
        par[L.P_AMP_KP] = self.k_p
        par[L.P_AMP_KI] = self.k_i
        par[L.P_AMP_KX] = self.k_x
        par[L.P_AMP_IREF] = self.il_ref
        par[L.P_AMP_VREF] = self.v_ref
        par[L.P_AMP_KCP] = self.k_cp
        par[L.P_AMP_KCI] = self.k_ci
        x0[L.X_MU] = p.mu if mu0 is None else mu0


@dataclass(frozen=True)
class AmpTrackState:
    int_el: float = 0.0
    int_ec: float = 0.0
    mu_dyn: float = 0.33


@dataclass(frozen=True)
class AmpMeasurement:
    il_amp: float
    v_amp: float
    vload_amp: float
    v_dc: float
    # only the non-smooth exact law would need it; kept for interface symmetry
    v_dc_dot: float = 0.0


def amp_track_step(cfg: AmpTrackConfig, st: AmpTrackState, meas: AmpMeasurement, dt: float):
    """One Euler step of the smooth cascade.

    Returns ``(mu, new_state, flags)``.  ``mu`` stays in [0, 1]; while it is
    pinned at a bound the integrators are frozen.
    """
    flags = 0
    mu = st.mu_dyn
    if meas.v_dc <= EPS_DIV:
        return mu, st, L.F_CTRL_UNDEF
    if cfg.mode == "voltage":
        e_c = meas.v_amp - cfg.v_ref
        i_ref = meas.vload_amp - cfg.k_cp * e_c - cfg.k_ci * st.int_ec
    else:
        e_c = 0.0
        i_ref = cfg.il_ref
    e_l = meas.il_amp - i_ref
    vx_ref = -cfg.k_p * e_l - cfg.k_i * st.int_el + meas.v_amp
    e_x = 0.5 * mu * meas.v_dc - vx_ref
    dmu = -(cfg.k_x / meas.v_dc) * e_x
    if (mu >= 1.0 and dmu > 0) or (mu <= 0.0 and dmu < 0):
        return mu, st, flags | L.F_MU_CLAMP
    mu_new = mu + dt * dmu
    if mu_new > 1.0 or mu_new < 0.0:
        mu_new = min(1.0, max(0.0, mu_new))
        flags |= L.F_MU_CLAMP
    return mu_new, AmpTrackState(st.int_el + dt * e_l, st.int_ec + dt * e_c, mu_new), flags


# ---------------------------------------------------------------- i_dc PID


@dataclass(frozen=True)
class IdcPidConfig:
    """PID on the DC voltage driving the source current.

    The controller output is a correction added to ``bias`` (default: the
    nominal ``i_dc``); with zero error the source sits at its nominal value.
    ``v_dc_ref`` defaults to ``omega_ref / eta`` for 50 Hz.
    """

    k_p: float = 0.3
    k_i: float = 20.0
    k_d: float = 0.001
    n_filter: float = 10.0
    v_dc_ref: Optional[float] = None
    bias: Optional[float] = None

    def __post_init__(self):
        if self.n_filter <= 0:
            raise ConfigError("derivative filter cutoff must be positive")

    def resolved_ref(self, p: ConverterParams) -> float:
        return OMEGA_50HZ / p.eta if self.v_dc_ref is None else self.v_dc_ref

    def pack(self, par, x0, p: ConverterParams) -> None:
        par[L.P_PID_ON] = 1.0
        par[L.P_PID_KP] = self.k_p
        par[L.P_PID_KI] = self.k_i
        par[L.P_PID_KD] = self.k_d
        par[L.P_PID_N] = self.n_filter
        par[L.P_PID_VREF] = self.resolved_ref(p)
        par[L.P_PID_BIAS] = p.i_dc if self.bias is None else self.bias
        x0[L.X_PID_INT] = 0.0
        # start the derivative filter at the initial error: no derivative kick
        x0[L.X_PID_FILT] = par[L.P_PID_VREF] - x0[L.X_VDC]


@dataclass(frozen=True)
class IdcPidState:
    int_e: float = 0.0
    z: float = 0.0
    e_prev: Optional[float] = None


def idc_pid_step(cfg: IdcPidConfig, st: IdcPidState, v_dc_ref: float, v_dc: float, dt: float):
    """Returns ``(i_dc_correction, new_state)``.

    The derivative acts on a backward difference of the error and is low-pass
    filtered: ``z' = N (k_d de/dt - z)``.
    """
    e = v_dc_ref - v_dc
    de = 0.0 if st.e_prev is None else (e - st.e_prev) / dt
    int_e = st.int_e + dt * e
    z = st.z + dt * cfg.n_filter * (cfg.k_d * de - st.z)
    out = cfg.k_p * e + cfg.k_i * int_e + z
    return out, IdcPidState(int_e, z, e)


def pid_equivalent_inertia(p: ConverterParams, k_d: float) -> float:
    """Inertia of the equivalent machine once the D-term is added."""
    return (p.c_dc + k_d) / p.eta**2


# ---------------------------------------------------------------- eta


@dataclass(frozen=True)
class EtaTrackConfig:
    """Frequency control through the angle gain.

    ``law="exact"`` cancels the DC-voltage dynamics so that the internal
    frequency obeys ``omega' = tau (omega_ref - omega)`` regardless of load.
    ``law="vsm"`` keeps a swing-equation structure with extra inertia factor
    ``(1 + j_extra)``; here ``tau`` acts as a damping gain.  If ``law`` is
    left as ``None`` the VSM form is chosen exactly when ``j_extra > 0``.
    """

    tau: float = 100.0
    j_extra: float = 0.0
    omega_ref: float = OMEGA_50HZ
    law: Optional[Literal["exact", "vsm"]] = None

    def __post_init__(self):
        if self.tau <= 0:
            raise ConfigError("tau must be positive")
        if self.j_extra < 0:
            raise ConfigError("j_extra must be non-negative")
        if self.law not in (None, "exact", "vsm"):
            raise ConfigError(f"unknown eta law {self.law!r}")

    @property
    def resolved_law(self) -> str:
        if self.law is not None:
            return self.law
        return "vsm" if self.j_extra > 0 else "exact"

    def pack(self, par, x0, p: ConverterParams) -> None:
        par[L.P_ETA_MODE] = L.ETA_EXACT if self.resolved_law == "exact" else L.ETA_VSM
        par[L.P_ETA_TAU] = self.tau
        par[L.P_ETA_J] = self.j_extra
        par[L.P_ETA_WREF] = self.omega_ref
        x0[L.X_ETA] = p.eta


@dataclass(frozen=True)
class EtaTrackState:
    eta_dyn: float = 0.3142


def eta_rate(cfg: EtaTrackConfig, eta: float, omega_ref: float, v_dc: float,
             v_dc_dot: float, p: Optional[ConverterParams] = None) -> float:
    """Right-hand side of the selected eta law (requires ``v_dc > 0``)."""
    if cfg.resolved_law == "exact":
        return (cfg.tau / v_dc) * (omega_ref - eta * v_dc) - (eta / v_dc) * v_dc_dot
    if p is None:
        raise ConfigError("the VSM eta law needs the converter parameters")
    return (
        -(cfg.tau / v_dc) * (eta * v_dc - omega_ref)
        + eta * p.g_dc / p.c_dc
        - cfg.j_extra * eta * v_dc_dot / v_dc
    ) / (1.0 + cfg.j_extra)


def eta_track_step(cfg: EtaTrackConfig, st: EtaTrackState, omega_ref: float, v_dc: float,
                   v_dc_dot: float, dt: float, p: Optional[ConverterParams] = None):
    """Returns ``(eta, new_state, flags)``; holds eta when ``v_dc`` is ~0."""
    if v_dc <= EPS_DIV:
        return st.eta_dyn, st, L.F_ETA_HOLD
    eta = st.eta_dyn + dt * eta_rate(cfg, st.eta_dyn, omega_ref, v_dc, v_dc_dot, p)
    if eta <= 0:
        return st.eta_dyn, st, L.F_ETA_HOLD
    return eta, EtaTrackState(eta), 0


def vsm_equivalent_inertia(p: ConverterParams, j_extra: float, eta: Optional[float] = None) -> float:
    eta = p.eta if eta is None else eta
    return p.c_dc * (1.0 + j_extra) / eta**2


# ---------------------------------------------------------------- reactive shaping


_SHAPE_CODES = {"mu": L.SHAPE_MU, "eta": L.SHAPE_ETA, "idc": L.SHAPE_IDC}


@dataclass(frozen=True)
class ReactiveShapeParams:
    """Static reactive-power feedback ``value = base + gain * Q_x``.

    mode ``mu`` gives a resistive-style droop of the voltage amplitude,
    ``eta`` an inductive-style frequency droop, ``idc`` a governor-like
    action on the source current.

    ``q_filter`` is the bandwidth (1/s) of a first-order low-pass on the
    measured Q_x.  Feeding back the raw instantaneous Q_x excites the LC
    filter and destabilises mode ``mu`` for capacitive loads; steady states
    are the same either way.  ``q_filter=0`` selects the unfiltered
    algebraic loop.
    """

    mode: Literal["mu", "eta", "idc"]
    base: float
    gain: float
    q_filter: float = 50.0

    def __post_init__(self):
        if self.mode not in _SHAPE_CODES:
            raise ConfigError(f"unknown reactive-shaping mode {self.mode!r}")
        if not self.gain > 0:
            raise ConfigError("shaping gain must be positive")
        if not self.q_filter >= 0:
            raise ConfigError("q_filter must be non-negative")

    def pack(self, par, x0, p: ConverterParams) -> None:
        par[L.P_SHAPE_MODE] = _SHAPE_CODES[self.mode]
        par[L.P_SHAPE_BASE] = self.base
        par[L.P_SHAPE_GAIN] = self.gain
        par[L.P_SHAPE_LAMBDA] = self.q_filter
        x0[L.X_QF] = 0.0


def reactive_shape(params: ReactiveShapeParams, q_x: float) -> tuple[float, bool]:
    """Effective ``mu``/``eta``/``i_dc`` for a given Q_x, and whether it was clamped."""
    v = params.base + params.gain * q_x
    if params.mode == "mu":
        if v > 1.0:
            return 1.0, True
        if v <= 0.0:
            return 1e-12, True
    elif params.mode == "eta":
        if v <= 0.0:
            return L.EPS_OSC, True
    elif v < 0.0:
        return 0.0, True
    return v, False


def reactive_limits(params: ReactiveShapeParams) -> tuple[float, float]:
    """Range of Q_x over which the shaped quantity stays admissible."""
    if params.mode == "eta":
        raise ConfigError("no reactive-power range is defined for eta shaping")
    q = params.base / params.gain
    return -q, q


def shaped_mu_from_unit_q(params: ReactiveShapeParams, q_unit: float) -> tuple[float, bool]:
    """Solve ``mu = base + gain * mu * q_unit`` for mu.

    ``Q_x`` itself scales with ``mu``; the closed-loop kernel uses this
    algebraic solution.  No admissible root (``mu`` would exceed 1 or flip
    sign) returns ``(1.0, True)``.
    """
    den = 1.0 - params.gain * q_unit
    if den <= params.base:
        return 1.0, True
    return params.base / den, False


def mu_shaping_slope(params: ReactiveShapeParams, p: ConverterParams) -> float:
    """dv_x/dQ_x at zero active power under ``mu`` shaping (V/var)."""
    return params.gain * p.i_dc / (2.0 * p.g_dc)


__all__ = [
    "AmpTrackConfig", "AmpTrackState", "AmpMeasurement", "amp_track_step",
    "IdcPidConfig", "IdcPidState", "idc_pid_step", "pid_equivalent_inertia",
    "EtaTrackConfig", "EtaTrackState", "eta_rate", "eta_track_step", "vsm_equivalent_inertia",
    "ReactiveShapeParams", "reactive_shape", "reactive_limits", "shaped_mu_from_unit_q",
    "mu_shaping_slope",
]

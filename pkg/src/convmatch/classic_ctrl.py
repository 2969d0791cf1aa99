"""Classical grid-forming schemes for comparison with matching control.

* cascaded inner loop: PI voltage loop around a feedback-linearising current
  loop, tracking an alpha-beta voltage reference;
* reference generators for that loop: fixed sinusoid, droop, polar virtual
  oscillator, and a pair of Van der Pol oscillators;
* open-loop polar modulation, which writes a sinusoid straight into ``m``.

Sign convention for the inner loop: ``e_c = v_ref - v`` and
``e_l = i_ref - i``, both fed back with positive gains.  With
``K_pc = -2 C lambda0``, ``K_ic = C lambda0^2`` the voltage error obeys a
critically damped second-order law with double pole ``lambda0``, and
``K_pl = -L lambda_l`` places the current pole at ``lambda_l``.

P and Q used by the droop-type generators are measured at the load
(``v . i_load``), instantaneous, with no filtering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

from . import _layout as L
from .errors import ConfigError, ControllerUndefinedError
from .frames import SQRT_3_2, AlphaBetaSignal
from .plant import ConverterParams, ModulationCommand

EPS_DIV = L.EPS_DIV
EPS_OSC = L.EPS_OSC
OMEGA_50HZ = 100.0 * math.pi


# ---------------------------------------------------------------- inner loop


@dataclass(frozen=True)
class InnerLoopGains:
    k_pc: float
    k_ic: float
    k_pl: float
    lambda0: float
    lambda_l: float


def inner_gains_from_poles(lambda0: float, lambda_l: float, p: ConverterParams) -> InnerLoopGains:
    """Gains placing a double voltage pole at ``lambda0`` and the current pole at ``lambda_l``."""
    if not lambda0 < 0:
        raise ConfigError("lambda0 must be negative")
    if not lambda_l <= 10.0 * lambda0:
        raise ConfigError("current loop must be at least ten times faster than the voltage loop")
    return InnerLoopGains(-2.0 * p.c * lambda0, p.c * lambda0**2, -p.l * lambda_l, lambda0, lambda_l)


@dataclass(frozen=True)
class InnerLoopState:
    int_ec: AlphaBetaSignal = AlphaBetaSignal(0.0, 0.0)


@dataclass(frozen=True)
class InnerLoopMeasurement:
    v_ab: AlphaBetaSignal
    i_ab: AlphaBetaSignal
    i_load: AlphaBetaSignal
    v_dc: float


def inner_loop_step(gains: InnerLoopGains, st: InnerLoopState, v_ref, meas: InnerLoopMeasurement,
                    dt: float, p: ConverterParams):
    """Modulation command for one step and the advanced voltage integral.

    Raises :class:`ControllerUndefinedError` when ``v_dc`` is too small to
    divide by.  Over-modulation is clamped radially and the integral is held
    during that step.
    """
    if meas.v_dc <= EPS_DIV:
        raise ControllerUndefinedError("v_dc too small for feedback linearisation")
    eca = v_ref[0] - meas.v_ab[0]
    ecb = v_ref[1] - meas.v_ab[1]
    ira = gains.k_pc * eca + gains.k_ic * st.int_ec[0] + meas.i_load[0]
    irb = gains.k_pc * ecb + gains.k_ic * st.int_ec[1] + meas.i_load[1]
    ela = ira - meas.i_ab[0]
    elb = irb - meas.i_ab[1]
    k = 2.0 / meas.v_dc
    m = ModulationCommand.clamped(
        k * (meas.v_ab[0] + gains.k_pl * ela + p.r * meas.i_ab[0]),
        k * (meas.v_ab[1] + gains.k_pl * elb + p.r * meas.i_ab[1]),
    )
    if m.saturated:
        return m, st
    return m, InnerLoopState(AlphaBetaSignal(st.int_ec[0] + dt * eca, st.int_ec[1] + dt * ecb))


# ---------------------------------------------------------------- references


@dataclass(frozen=True)
class SineReference:
    """Fixed-frequency, fixed-amplitude voltage reference (alpha-beta amplitude)."""

    omega: float = OMEGA_50HZ
    amp: float = 165.0 * SQRT_3_2
    theta0: float = 0.0

    def pack(self, par, x0) -> None:
        par[L.P_REF_KIND] = L.REF_SINE
        par[L.P_REF_W0] = self.omega
        par[L.P_REF_AMP] = self.amp
        x0[L.X_THETA] = self.theta0


@dataclass(frozen=True)
class DroopParams:
    """Droop laws ``omega = omega0 + n_f (p0 - P)``, ``v = v0_hat + n_a (q0 - Q)``.

    ``amp_scale`` multiplies the amplitude on output (1 keeps ``v0_hat`` as
    an alpha-beta amplitude, ``sqrt(3/2)`` treats it as a phase amplitude).
    """

    omega0: float = OMEGA_50HZ
    v0_hat: float = 165.0
    p0: float = 0.0
    q0: float = 0.0
    n_f: float = 2e-3
    n_a: float = 2e-3
    amp_scale: float = 1.0
    theta0: float = 0.0

    def __post_init__(self):
        if not (self.n_f > 0 and self.n_a > 0):
            raise ConfigError("droop gains must be positive")

    def frequency(self, p_meas: float) -> float:
        return self.omega0 + self.n_f * (self.p0 - p_meas)

    def amplitude(self, q_meas: float) -> float:
        return self.v0_hat + self.n_a * (self.q0 - q_meas)

    def pack(self, par, x0) -> None:
        par[L.P_REF_KIND] = L.REF_DROOP
        _pack_droop(self, par, x0)


def _pack_droop(d: DroopParams, par, x0) -> None:
    par[L.P_REF_W0] = d.omega0
    par[L.P_REF_AMP] = d.v0_hat
    par[L.P_REF_SCALE] = d.amp_scale
    par[L.P_DROOP_P0] = d.p0
    par[L.P_DROOP_Q0] = d.q0
    par[L.P_DROOP_NF] = d.n_f
    par[L.P_DROOP_NA] = d.n_a
    x0[L.X_THETA] = d.theta0


@dataclass(frozen=True)
class PolarRefState:
    theta: float = 0.0
    v_hat: float = 0.0
    lam: float = 100.0


def droop_reference(d: DroopParams, st: PolarRefState, meas, dt: float):
    """Advance the droop angle and return ``(v_ref, state, clamped)``."""
    p_meas, q_meas = meas
    theta = st.theta + d.frequency(p_meas) * dt
    v_hat = d.amplitude(q_meas)
    clamped = v_hat < 0
    v_hat = max(v_hat, 0.0)
    a = d.amp_scale * v_hat
    ref = AlphaBetaSignal(-a * math.sin(theta), a * math.cos(theta))
    return ref, PolarRefState(theta, v_hat, st.lam), clamped


@dataclass(frozen=True)
class PolarVoc:
    """Polar virtual oscillator: droop angle, first-order lag on the amplitude."""

    droop: DroopParams
    lambda_osc: float = 100.0

    def __post_init__(self):
        if not self.lambda_osc > 0:
            raise ConfigError("lambda_osc must be positive")

    def pack(self, par, x0) -> None:
        par[L.P_REF_KIND] = L.REF_POLAR
        _pack_droop(self.droop, par, x0)
        par[L.P_POLAR_LAMBDA] = self.lambda_osc
        x0[L.X_VHAT] = self.droop.v0_hat


def polar_voc_step(d: DroopParams, st: PolarRefState, meas, dt: float):
    """One Euler step; returns ``(v_ref, state)``.  ``st.lam`` is the lag rate."""
    if not st.lam > 0:
        raise ConfigError("lambda_osc must be positive")
    p_meas, q_meas = meas
    theta = st.theta + d.frequency(p_meas) * dt
    v_hat = max(st.v_hat + dt * st.lam * (d.amplitude(q_meas) - st.v_hat), 0.0)
    a = d.amp_scale * v_hat
    return AlphaBetaSignal(-a * math.sin(theta), a * math.cos(theta)), PolarRefState(theta, v_hat, st.lam)


# ---------------------------------------------------------------- Van der Pol


@dataclass(frozen=True)
class VdpVocState:
    """Two Van der Pol oscillators, one per axis, coupled only through the load current.

    ``x1`` of each oscillator is the voltage-like output.  The default
    initial point ``x1a = -x2a = x1b = x2b = 1`` puts the two oscillators a
    quarter period apart with equal amplitudes ``sqrt(2)``.
    """

    x1a: float = 1.0
    x2a: float = -1.0
    x1b: float = 1.0
    x2b: float = 1.0
    mu_vdp: float = 0.2
    kappa: float = 0.8
    omega0: float = OMEGA_50HZ

    def __post_init__(self):
        if self.mu_vdp < 0 or self.kappa < 0:
            raise ConfigError("mu_vdp and kappa must be non-negative")


def oscillator_phase_amp(x1: float, x2: float) -> tuple[float, float]:
    """Phase and amplitude of one oscillator, read as ``x1 = A cos(phi)``, ``x2 = -A sin(phi)``."""
    return math.atan2(-x2, x1), math.hypot(x1, x2)


def vdp_is_orthogonal(st: VdpVocState, tol: float = 1e-9) -> bool:
    """True when the phase gap is pi/2 (mod pi) and both amplitudes agree."""
    pa, aa = oscillator_phase_amp(st.x1a, st.x2a)
    pb, ab = oscillator_phase_amp(st.x1b, st.x2b)
    gap = (pa - pb - math.pi / 2) % math.pi
    return min(gap, math.pi - gap) <= tol and abs(aa - ab) <= tol * max(1.0, aa)


def _vdp_rhs(st_vals, mu, kappa, w, ila, ilb):
    x1a, x2a, x1b, x2b = st_vals
    return (
        w * x2a,
        -w * x1a + mu * (1.0 - x1a * x1a) * x2a + kappa * ila,
        w * x2b,
        -w * x1b + mu * (1.0 - x1b * x1b) * x2b + kappa * ilb,
    )


def vdp_voc_step(st: VdpVocState, i_load, v_ref_amp: float, dt: float):
    """One RK4 step of both oscillators with the load current held.

    Returns ``(v_ref, state)`` where ``v_ref`` has alpha-beta amplitude
    ``v_ref_amp * sqrt(3/2)`` along the direction ``(x1a, x1b)``.
    """
    ila, ilb = float(i_load[0]), float(i_load[1])
    y = (st.x1a, st.x2a, st.x1b, st.x2b)
    args = (st.mu_vdp, st.kappa, st.omega0, ila, ilb)
    k1 = _vdp_rhs(y, *args)
    k2 = _vdp_rhs(tuple(a + 0.5 * dt * b for a, b in zip(y, k1)), *args)
    k3 = _vdp_rhs(tuple(a + 0.5 * dt * b for a, b in zip(y, k2)), *args)
    k4 = _vdp_rhs(tuple(a + dt * b for a, b in zip(y, k3)), *args)
    yn = tuple(a + dt / 6.0 * (b + 2 * c + 2 * d + e) for a, b, c, d, e in zip(y, k1, k2, k3, k4))
    new = VdpVocState(*yn, st.mu_vdp, st.kappa, st.omega0)
    den = math.hypot(new.x1a, new.x1b)
    if den < EPS_OSC:
        raise ControllerUndefinedError("oscillator outputs vanished; amplitude undefined")
    a = v_ref_amp * SQRT_3_2 / den
    return AlphaBetaSignal(a * new.x1a, a * new.x1b), new


@dataclass(frozen=True)
class VdpReference:
    """Van der Pol pair as a reference generator for the inner loop."""

    init: VdpVocState = VdpVocState()
    v_ref_amp: float = 165.0
    amp_scale: float = SQRT_3_2

    def pack(self, par, x0) -> None:
        s = self.init
        par[L.P_REF_KIND] = L.REF_VDP
        par[L.P_REF_W0] = s.omega0
        par[L.P_REF_AMP] = self.v_ref_amp * self.amp_scale
        par[L.P_VDP_MU] = s.mu_vdp
        par[L.P_VDP_KAPPA] = s.kappa
        x0[L.X_X1A], x0[L.X_X2A], x0[L.X_X1B], x0[L.X_X2B] = s.x1a, s.x2a, s.x1b, s.x2b


Reference = Union[SineReference, DroopParams, PolarVoc, VdpReference]


@dataclass(frozen=True)
class InnerLoopController:
    """Inner cascade driven by one of the reference generators."""

    gains: InnerLoopGains
    reference: Reference = SineReference()

    code = L.CTRL_INNER

    def pack(self, par, x0, p: ConverterParams) -> None:
        par[L.P_CTRL] = L.CTRL_INNER
        par[L.P_KPC] = self.gains.k_pc
        par[L.P_KIC] = self.gains.k_ic
        par[L.P_KPL] = self.gains.k_pl
        par[L.P_REF_SCALE] = 1.0
        self.reference.pack(par, x0)


# ---------------------------------------------------------------- open loop


@dataclass(frozen=True)
class OpenLoopModulation:
    """Sinusoidal modulation with a first-order lag on its amplitude.

    By default the lag drives the modulation amplitude itself towards
    ``m_ref`` (a pure open-loop scheme).  ``capacitor_feedback=True`` instead
    feeds back the measured capacitor amplitude, normalised by
    ``scale * v_dc_ref / 2``, which closes a slow voltage loop.
    """

    omega_ref: float = OMEGA_50HZ
    m_ref: float = 0.33
    lambda_m: float = 100.0
    scale: float = SQRT_3_2
    capacitor_feedback: bool = False
    v_dc_ref: float = 1000.0
    v_m0: float = 0.0
    theta0: float = 0.0

    code = L.CTRL_OPEN_LOOP

    def pack(self, par, x0, p: ConverterParams) -> None:
        par[L.P_CTRL] = L.CTRL_OPEN_LOOP
        par[L.P_OL_WREF] = self.omega_ref
        par[L.P_OL_MREF] = self.m_ref
        par[L.P_OL_LAMBDA] = self.lambda_m
        par[L.P_OL_SCALE] = self.scale
        par[L.P_OL_FEEDBACK] = 1.0 if self.capacitor_feedback else 0.0
        par[L.P_OL_VDCREF] = self.v_dc_ref
        x0[L.X_OL_THETA] = self.theta0
        x0[L.X_OL_VM] = self.v_m0


def open_loop_modulation_step(st: PolarRefState, dt: float,
                              cfg: OpenLoopModulation = OpenLoopModulation(),
                              v_amp: Optional[float] = None):
    """Advance the modulation oscillator by one Euler step.

    ``st.v_hat`` holds the modulation amplitude and ``st.lam`` the lag rate.
    ``v_amp`` is required only with ``capacitor_feedback``.  Returns
    ``(ModulationCommand, state)``.
    """
    if cfg.capacitor_feedback:
        if v_amp is None:
            raise ConfigError("capacitor feedback needs the measured voltage amplitude")
        fb = 2.0 * v_amp / (cfg.scale * cfg.v_dc_ref)
    else:
        fb = st.v_hat
    theta = st.theta + cfg.omega_ref * dt
    vm = st.v_hat + dt * st.lam * (cfg.m_ref - fb)
    a = cfg.scale * vm
    m = ModulationCommand.clamped(-a * math.sin(theta), a * math.cos(theta))
    return m, PolarRefState(theta, vm, st.lam)

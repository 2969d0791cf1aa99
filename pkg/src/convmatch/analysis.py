"""Closed-form steady-state theory and stability certificates.

Everything here is algebra on :class:`ConverterParams` plus small dense
linear algebra; simulation enters only through :class:`SimTrace` objects
handed in by the caller (passivity audit, Lyapunov decrease along a
trajectory, manifold decay).

Amplitudes are power-invariant alpha-beta norms unless a docstring says
otherwise.  ``J`` is the rotation by +90 degrees, so a load ``g I + b J``
with ``b < 0`` is inductive and draws positive reactive power.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .errors import ConfigError, NoSolutionError, SingularityError, SolverError
from .frames import J2
from .plant import ConverterParams, PlantState
from .sim import LinearSystem, SimConfig, SimTrace, integrate

NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 50
SINGULAR_TOL = 1e-12


# ---------------------------------------------------------------- power / amplitude / frequency


@dataclass(frozen=True)
class SteadyStateProfile:
    p_x: float
    v_dc_ss: float
    vx_amp: float
    omega: float

    @property
    def frequency_hz(self) -> float:
        return self.omega / (2.0 * math.pi)


def _dc_voltage(p: ConverterParams, p_x: float, branch: str) -> float:
    disc = p.i_dc**2 - 4.0 * p.g_dc * p_x
    if disc < 0.0:
        raise NoSolutionError(
            f"P_x={p_x:g} W exceeds the deliverable maximum {p.i_dc**2 / (4 * p.g_dc):g} W"
        )
    root = math.sqrt(disc)
    if branch == "stable":
        return (p.i_dc + root) / (2.0 * p.g_dc)
    if branch == "unstable":
        return (p.i_dc - root) / (2.0 * p.g_dc)
    raise ConfigError(f"unknown branch {branch!r}")


def steady_state_profile(p: ConverterParams, p_x: float, branch: str = "stable") -> SteadyStateProfile:
    """DC voltage, terminal amplitude and frequency that carry ``p_x`` watts.

    The DC node balance ``i_dc v - G_dc v^2 = P_x`` has two roots; the
    high-voltage one (``branch="stable"``) is the operating point.  The
    low-voltage root is available as ``branch="unstable"``.  Reactive power
    does not enter at all.
    """
    v = _dc_voltage(p, p_x, branch)
    return SteadyStateProfile(float(p_x), v, 0.5 * p.mu * v, p.eta * v)


def power_from_vx(p: ConverterParams, vx_amp: float) -> float:
    """Active power as a function of terminal amplitude (inverse of the profile)."""
    v = 2.0 * vx_amp / p.mu
    return p.i_dc * v - p.g_dc * v * v


def power_from_omega(p: ConverterParams, omega: float) -> float:
    v = omega / p.eta
    return p.i_dc * v - p.g_dc * v * v


def droop_coefficients(p: ConverterParams, at: SteadyStateProfile) -> tuple[float, float]:
    """Local slopes ``dP/dvx_amp`` (W/V) and ``dP/domega`` (W per rad/s)."""
    d_vx = -(8.0 * p.g_dc / p.mu**2) * at.vx_amp + 2.0 * p.i_dc / p.mu
    d_omega = -(2.0 * p.g_dc / p.eta**2) * at.omega + p.i_dc / p.eta
    return d_vx, d_omega


class MaxPower(NamedTuple):
    p_max: float
    v_max: float
    omega_max: float


def max_power(p: ConverterParams) -> MaxPower:
    """Vertex of the power parabola: the most the DC source can deliver."""
    return MaxPower(
        p.i_dc**2 / (4.0 * p.g_dc),
        p.mu * p.i_dc / (4.0 * p.g_dc),
        p.eta * p.i_dc / (2.0 * p.g_dc),
    )


def max_current(p: ConverterParams) -> float:
    """Largest inductor-current amplitude when all power is lost in ``R``."""
    return p.i_dc / (2.0 * math.sqrt(p.g_dc * p.r))


# ---------------------------------------------------------------- filter node


def filter_power_balance(
    p: ConverterParams,
    px_qx: tuple[float, float],
    il_amp: float,
    v_amp: float,
    omega_s: float,
    sign: str = "consistent",
) -> tuple[float, float]:
    """Load powers from terminal powers minus what the LC filter takes.

    The inductor absorbs ``omega L il^2`` of reactive power and the
    capacitor supplies ``omega C v^2``, hence with ``sign="consistent"``
    ``Q_load = Q_x - omega L il^2 + omega C v^2``.  ``sign="flipped"`` uses
    ``+omega L il^2`` instead, which a simulation does not reproduce.
    """
    if omega_s == 0:
        raise ConfigError("omega_s must be nonzero")
    p_x, q_x = px_qx
    p_load = p_x - p.r * il_amp**2
    if sign == "consistent":
        q_l = -omega_s * p.l * il_amp**2
    elif sign == "flipped":
        q_l = omega_s * p.l * il_amp**2
    else:
        raise ConfigError(f"unknown sign convention {sign!r}")
    return p_load, q_x + q_l + omega_s * p.c * v_amp**2


def critical_susceptance(p: ConverterParams, omega_s: float) -> float:
    """Reactive load that resonates the filter capacitor (zero inductor current)."""
    return -p.c * omega_s


def amplitude_ratio(p: ConverterParams, b: float, omega_s: float) -> float:
    """``il_amp / v_amp`` for a purely reactive load ``b``."""
    return abs(p.c * omega_s + b)


def reactive_characteristic_b(
    p: ConverterParams,
    il_amp: float,
    omega_s: float,
    branch: str,
    form: str = "consistent",
) -> float:
    """Susceptance of a purely reactive load that draws ``il_amp``.

    With ``g = 0`` all active power is lost in ``R``, which fixes ``v_dc``
    and therefore the terminal amplitude.  The series reactance seen by the
    modulator is ``X = omega L - 1/(C omega + b)`` and ``|v_x| = il |R + jX|``,
    so ``1/(C omega + b) = omega L -+ s`` with ``s = sqrt(vx^2 - R^2 il^2)/il``.
    ``branch="over"`` returns the root with ``b`` above the critical value,
    ``branch="under"`` the one below it.

    ``form="alternate"`` evaluates ``+-(1/(s - omega L) - C omega)``
    instead; it agrees with the consistent over-critical root only up to
    the sign of ``omega L``.
    """
    if branch not in ("over", "under"):
        raise ConfigError(f"branch must be 'over' or 'under', not {branch!r}")
    if il_amp < 0:
        raise ConfigError("il_amp must be non-negative")
    i_max = max_current(p)
    if il_amp > i_max * (1.0 + 1e-12):
        raise NoSolutionError(f"il_amp={il_amp:g} A exceeds the current limit {i_max:g} A")
    b_cri = critical_susceptance(p, omega_s)
    if il_amp == 0.0:
        return b_cri
    disc = max(p.i_dc**2 - 4.0 * p.g_dc * p.r * il_amp**2, 0.0)
    vx = 0.5 * p.mu * (p.i_dc + math.sqrt(disc)) / (2.0 * p.g_dc)
    rad = vx * vx - (p.r * il_amp) ** 2
    if rad < 0.0:
        raise NoSolutionError("terminal amplitude cannot push this current through R")
    s = math.sqrt(rad) / il_amp
    xl = omega_s * p.l
    if form == "alternate":
        core = 1.0 / (s - xl) - p.c * omega_s
        return core if branch == "over" else -core
    if form != "consistent":
        raise ConfigError(f"unknown form {form!r}")
    if branch == "over":
        return 1.0 / (xl + s) - p.c * omega_s
    return 1.0 / (xl - s) - p.c * omega_s


class OpenCircuitQuantities(NamedTuple):
    il_open: float
    qx_open: float
    px_open: float


def open_circuit_quantities(
    p: ConverterParams,
    v_amp: Optional[float] = None,
    omega_s: Optional[float] = None,
    sign: str = "consistent",
) -> OpenCircuitQuantities:
    """Current, reactive and active power drawn by the bare LC filter.

    ``v_amp`` defaults to the power-invariant amplitude of the nominal
    open-circuit point (``sqrt(3/2) * mu * v_dc / 2``) and ``omega_s`` to
    ``eta * i_dc / G_dc``.  The inductor term of ``Q_x`` is positive in the
    consistent balance; ``sign="flipped"`` negates it.  The difference is about
    0.13 VAR for the reference design.
    """
    v_dc = p.v_dc_open
    v = math.sqrt(1.5) * 0.5 * p.mu * v_dc if v_amp is None else float(v_amp)
    w = p.eta * v_dc if omega_s is None else float(omega_s)
    il = p.c * v * w
    lterm = p.l * p.c**2 * w**3 * v * v
    if sign == "flipped":
        lterm = -lterm
    elif sign != "consistent":
        raise ConfigError(f"unknown sign convention {sign!r}")
    return OpenCircuitQuantities(il, lterm - p.c * w * v * v, p.r * il * il)


# ---------------------------------------------------------------- storage and passivity


def storage_open(state: PlantState, p: ConverterParams) -> float:
    """Energy stored in the DC capacitor, filter inductor and filter capacitor."""
    i = state.i_ab
    v = state.v_ab
    return 0.5 * (
        p.c_dc * state.v_dc**2
        + p.l * (i[0] ** 2 + i[1] ** 2)
        + p.c * (v[0] ** 2 + v[1] ** 2)
    )


def storage_closed(state: PlantState, m, p: ConverterParams) -> float:
    """Open-loop storage plus the controller energy ``|m|^2 / 2``."""
    return storage_open(state, p) + 0.5 * (m[0] ** 2 + m[1] ** 2)


def storage_trace(trace: SimTrace) -> np.ndarray:
    p = trace.params
    i, v = trace.i_ab, trace.v_ab
    return 0.5 * (
        p.c_dc * trace.v_dc**2
        + p.l * np.einsum("ij,ij->i", i, i)
        + p.c * np.einsum("ij,ij->i", v, v)
    )


def supplied_energy_trapezoid(trace: SimTrace) -> np.ndarray:
    """Supply integral from the recorded samples; used when no accumulator is present."""
    rate = trace.i_dc * trace.v_dc - np.einsum("ij,ij->i", trace.i_load, trace.v_ab)
    out = np.zeros_like(rate)
    out[1:] = np.cumsum(0.5 * (rate[1:] + rate[:-1]) * np.diff(trace.t))
    return out


def storage_violation(storage, supplied) -> float:
    """``max_{t1 <= t2} [S(t2) - S(t1) - (E(t2) - E(t1))]``.

    ``E`` is the cumulative supplied energy.  A passive run gives a value at
    integration-error level; anything clearly positive means the storage
    grew faster than the supply allows.
    """
    f = np.asarray(storage, dtype=float) - np.asarray(supplied, dtype=float)
    if f.size == 0:
        return 0.0
    run_min = np.minimum.accumulate(f)
    return float(np.max(f - run_min))


def passivity_audit(trace: SimTrace, p: Optional[ConverterParams] = None, use_accumulator: bool = True) -> float:
    """Largest windowed excess of stored over supplied energy, in joules.

    The supply integral comes from the accumulator the integrator carries
    alongside the state (same RK4 stages, so no sampling error); pass
    ``use_accumulator=False`` to use the trapezoid rule on the samples.
    """
    if p is not None and p != trace.params:
        trace = SimTrace(trace.t, trace.x, trace.aux, p, trace.dt, trace.record_every)
    s = storage_trace(trace)
    e = trace.energy_supplied if use_accumulator else supplied_energy_trapezoid(trace)
    return storage_violation(s, e)


def passivity_tolerance(trace: SimTrace, rel: float = 1e-6) -> float:
    return rel * float(np.max(storage_trace(trace)))


# ---------------------------------------------------------------- dq equilibrium


@dataclass(frozen=True)
class DqEquilibrium:
    v_dc_s: float
    i_dq_s: np.ndarray
    v_dq_s: np.ndarray
    omega_s: float
    residual: float
    iterations: int = 0

    @property
    def il_amp(self) -> float:
        return float(np.hypot(*self.i_dq_s))

    @property
    def v_amp(self) -> float:
        return float(np.hypot(*self.v_dq_s))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([[self.v_dc_s], self.i_dq_s, self.v_dq_s])


def _eq_residual(x, p: ConverterParams, g: float, b: float) -> np.ndarray:
    v, i, u = x[0], x[1:3], x[3:5]
    w = p.eta * v
    gl = g * np.eye(2) + b * J2
    r0 = -p.g_dc * v + p.i_dc - 0.5 * p.mu * i[1]
    r1 = -p.r * i - p.l * w * (J2 @ i) + np.array([0.0, 0.5 * p.mu * v]) - u
    r2 = i - gl @ u - p.c * w * (J2 @ u)
    return np.concatenate([[r0], r1, r2])


def _eq_jacobian(x, p: ConverterParams, g: float, b: float) -> np.ndarray:
    v, i, u = x[0], x[1:3], x[3:5]
    w = p.eta * v
    gl = g * np.eye(2) + b * J2
    jac = np.zeros((5, 5))
    jac[0, 0] = -p.g_dc
    jac[0, 2] = -0.5 * p.mu
    jac[1:3, 0] = -p.l * p.eta * (J2 @ i) + np.array([0.0, 0.5 * p.mu])
    jac[1:3, 1:3] = -p.r * np.eye(2) - p.l * w * J2
    jac[1:3, 3:5] = -np.eye(2)
    jac[3:5, 0] = -p.c * p.eta * (J2 @ u)
    jac[3:5, 1:3] = np.eye(2)
    jac[3:5, 3:5] = -gl - p.c * w * J2
    return jac


def _ac_response(p: ConverterParams, g: float, b: float, v_dc: float):
    """Linear AC steady state for a frozen DC voltage (initial guess)."""
    w = p.eta * v_dc
    gl = g * np.eye(2) + b * J2
    a = np.zeros((4, 4))
    a[0:2, 0:2] = -p.r * np.eye(2) - p.l * w * J2
    a[0:2, 2:4] = -np.eye(2)
    a[2:4, 0:2] = np.eye(2)
    a[2:4, 2:4] = -gl - p.c * w * J2
    rhs = np.array([0.0, -0.5 * p.mu * v_dc, 0.0, 0.0])
    sol = np.linalg.solve(a, rhs)
    return sol[0:2], sol[2:4]


def dq_equilibrium(
    p: ConverterParams,
    g: float,
    b: float = 0.0,
    guess: Optional[np.ndarray] = None,
    tol: float = NEWTON_TOL,
    max_iter: int = NEWTON_MAX_ITER,
) -> DqEquilibrium:
    """Real synchronous equilibrium of the matching-controlled converter.

    Unknowns are ``(v_dc, i_d, i_q, v_d, v_q)`` in the frame that rotates
    with the modulation angle (so ``m_dq = (0, mu)``) with
    ``omega = eta v_dc`` substituted.  Damped Newton with step halving from
    the open-circuit DC voltage and the matching linear AC response.
    """
    if not g > 0:
        raise ConfigError("dq equilibrium needs a resistive load g > 0")
    if guess is None:
        v0 = p.v_dc_open
        try:
            i0, u0 = _ac_response(p, g, b, v0)
        except np.linalg.LinAlgError:
            i0, u0 = np.zeros(2), np.zeros(2)
        x = np.concatenate([[v0], i0, u0])
    else:
        x = np.array(guess, dtype=float)
    r = _eq_residual(x, p, g, b)
    nr = float(np.max(np.abs(r)))
    best = nr
    for it in range(1, max_iter + 1):
        if nr < tol:
            break
        try:
            step = np.linalg.solve(_eq_jacobian(x, p, g, b), -r)
        except np.linalg.LinAlgError as exc:
            raise SolverError("singular Jacobian", best) from exc
        lam = 1.0
        while True:
            xn = x + lam * step
            rn = _eq_residual(xn, p, g, b)
            nrn = float(np.max(np.abs(rn)))
            if nrn < nr or lam < 1e-6:
                break
            lam *= 0.5
        x, r, nr = xn, rn, nrn
        best = min(best, nr)
    else:
        it = max_iter
    if not nr < tol:
        raise SolverError(f"Newton did not converge in {max_iter} iterations", best)
    return DqEquilibrium(float(x[0]), x[1:3].copy(), x[3:5].copy(), p.eta * float(x[0]), nr, it)


def trace_in_dq(trace: SimTrace):
    """Inductor current and capacitor voltage in the modulation-angle frame."""
    th = trace.theta_v
    c, s = np.cos(th), np.sin(th)

    def rot(z):
        return np.stack([c * z[:, 0] + s * z[:, 1], -s * z[:, 0] + c * z[:, 1]], axis=1)

    return rot(trace.i_ab), rot(trace.v_ab)


# ---------------------------------------------------------------- Lyapunov


@dataclass(frozen=True)
class LyapunovReport:
    condition_lhs: float
    condition_rhs: float
    holds: bool
    w_tilde: float
    p_matrix: np.ndarray = field(repr=False)
    eigenvalues: np.ndarray = field(repr=False)

    @property
    def negative_definite(self) -> bool:
        return bool(np.max(self.eigenvalues) < 0)


def lyapunov_matrix(p: ConverterParams, eq: DqEquilibrium, g: float, g_dc_eff: Optional[float] = None) -> np.ndarray:
    """Symmetric matrix ``P`` with ``dW/dt = e' P e`` for the error ``e``.

    ``e = (v_dc, i_d, i_q, v_d, v_q) - equilibrium``.  Cubic terms cancel
    exactly, so the identity holds globally, not just near the equilibrium.
    """
    gdc = p.g_dc if g_dc_eff is None else g_dc_eff
    i, v = eq.i_dq_s, eq.v_dq_s
    m = np.diag([-gdc, -p.r, -p.r, -g, -g])
    m[0, 1] = m[1, 0] = 0.5 * p.l * p.eta * i[1]
    m[0, 2] = m[2, 0] = -0.5 * p.l * p.eta * i[0]
    m[0, 3] = m[3, 0] = 0.5 * p.c * p.eta * v[1]
    m[0, 4] = m[4, 0] = -0.5 * p.c * p.eta * v[0]
    return m


def w_tilde(p: ConverterParams, eq: DqEquilibrium, v_dc, i_dq, v_dq):
    """Error storage around ``eq``; vectorised over leading axes."""
    dv = np.asarray(v_dc) - eq.v_dc_s
    di = np.asarray(i_dq) - eq.i_dq_s
    du = np.asarray(v_dq) - eq.v_dq_s
    return 0.5 * (p.c_dc * dv**2 + p.l * np.sum(di * di, axis=-1) + p.c * np.sum(du * du, axis=-1))


def lyapunov_condition(
    p: ConverterParams,
    eq: DqEquilibrium,
    g: float,
    state: Optional[np.ndarray] = None,
    g_dc_eff: Optional[float] = None,
) -> LyapunovReport:
    """Sufficient condition for the error storage to decrease.

    ``R C^2 eta^2 |v|^2 + g L^2 eta^2 |i|^2 < 4 R G_dc g``.  It is exactly
    the Schur-complement test for ``P`` being negative definite; both are
    reported.  ``g_dc_eff`` replaces ``G_dc`` (a proportional DC-voltage loop
    adds its gain here).  ``state`` is an optional ``(v_dc, i_d, i_q, v_d,
    v_q)`` at which ``w_tilde`` is evaluated.
    """
    if not g > 0:
        raise ConfigError("g must be positive")
    gdc = p.g_dc if g_dc_eff is None else g_dc_eff
    e2 = p.eta**2
    lhs = p.r * p.c**2 * e2 * eq.v_amp**2 + g * p.l**2 * e2 * eq.il_amp**2
    rhs = 4.0 * p.r * gdc * g
    mat = lyapunov_matrix(p, eq, g, gdc)
    eig = np.linalg.eigvalsh(mat)
    w = 0.0
    if state is not None:
        s = np.asarray(state, dtype=float)
        w = float(w_tilde(p, eq, s[0], s[1:3], s[3:5]))
    return LyapunovReport(float(lhs), float(rhs), bool(lhs < rhs), w, mat, eig)


def lyapunov_trace(trace: SimTrace, eq: DqEquilibrium) -> np.ndarray:
    """Error storage along a matching-control trace."""
    i_dq, v_dq = trace_in_dq(trace)
    return w_tilde(trace.params, eq, trace.v_dc, i_dq, v_dq)


# ---------------------------------------------------------------- internal model


@dataclass(frozen=True)
class ManifoldReport:
    f: np.ndarray
    residual: float
    a_hurwitz: bool
    a: np.ndarray = field(repr=False)
    d: np.ndarray = field(repr=False)
    s: np.ndarray = field(repr=False)
    spectral_abscissa: float = 0.0


def ac_circuit_matrices(p: ConverterParams, g: float, b: float, omega_s: float):
    """``(A, D, S)`` of the LC filter driven by a harmonic terminal voltage."""
    eye = np.eye(2)
    gl = g * eye + b * J2
    a = np.block([[-p.r / p.l * eye, -eye / p.l], [eye / p.c, -gl / p.c]])
    d = np.vstack([eye / p.l, np.zeros((2, 2))])
    return a, d, omega_s * J2


def internal_model_manifold(p: ConverterParams, g: float, b: float, omega_s: float) -> ManifoldReport:
    """Steady-state map ``x = F u`` from terminal voltage to filter state.

    ``F = [M^-1; (M N)^-1]`` with ``N = C omega J + G_load`` and
    ``M = L omega J + R + N^-1``; it solves ``A F - F S + D = 0``.
    """
    eye = np.eye(2)
    n = p.c * omega_s * J2 + g * eye + b * J2
    if abs(np.linalg.det(n)) < SINGULAR_TOL:
        raise SingularityError("load resonates the filter capacitor (N singular)")
    m = p.l * omega_s * J2 + p.r * eye + np.linalg.inv(n)
    if abs(np.linalg.det(m)) < SINGULAR_TOL:
        raise SingularityError("series impedance is singular (M singular)")
    minv = np.linalg.inv(m)
    f = np.vstack([minv, np.linalg.inv(m @ n)])
    a, d, s = ac_circuit_matrices(p, g, b, omega_s)
    res = float(np.max(np.abs(a @ f - f @ s + d)))
    eig = np.linalg.eigvals(a)
    absc = float(np.max(eig.real))
    return ManifoldReport(f, res, bool(absc < 0), a, d, s, absc)


def manifold_decay_rate(
    p: ConverterParams,
    g: float,
    b: float,
    omega_s: float,
    x0=(0.0, 0.0, 0.0, 0.0),
    u0=(0.0, 165.0),
    dt: float = 1e-7,
    fit_window: tuple[float, float] = (3e-4, 1.2e-3),
) -> tuple[float, ManifoldReport]:
    """Fitted exponential rate of ``|x - F u|`` for the forced filter.

    The filter state and the harmonic exosystem ``u' = S u`` are integrated
    together; the log of the distance to the manifold is fitted by least
    squares over ``fit_window``.
    """
    rep = internal_model_manifold(p, g, b, omega_s)
    big = np.block([[rep.a, rep.d], [np.zeros((2, 4)), rep.s]])
    cfg = SimConfig(dt=dt, t_end=fit_window[1], record_every=10)
    traj = integrate(LinearSystem(big), np.concatenate([x0, u0]), cfg)
    delta = traj.x[:, :4] - traj.x[:, 4:] @ rep.f.T
    nrm = np.linalg.norm(delta, axis=1)
    sel = (traj.t >= fit_window[0]) & (nrm > 0)
    slope = np.polyfit(traj.t[sel], np.log(nrm[sel]), 1)[0]
    return float(slope), rep


# ---------------------------------------------------------------- reactive shaping


class ShapingPoint(NamedTuple):
    """Closed-loop steady state of ``mu = base + gain * Q_x`` on a pure susceptance."""

    mu: float
    b: float
    q_x: float
    vx_amp: float
    p_x: float
    v_dc: float
    omega: float


def _shape_residual(z, p: ConverterParams, shape, mu: float):
    pm = p.with_(mu=mu)
    r = _eq_residual(z[:5], pm, 0.0, z[5])
    q_x = 0.5 * mu * z[0] * z[1]
    return np.concatenate([r, [shape.base + shape.gain * q_x - mu]])


def _shape_jacobian(z, p: ConverterParams, shape, mu: float):
    pm = p.with_(mu=mu)
    jac = np.zeros((6, 6))
    jac[:5, :5] = _eq_jacobian(z[:5], pm, 0.0, z[5])
    jac[3:5, 5] = -(J2 @ z[3:5])
    jac[5, 0] = 0.5 * shape.gain * mu * z[1]
    jac[5, 1] = 0.5 * shape.gain * mu * z[0]
    return jac


def shaping_steady_state(p: ConverterParams, shape, mu: float, guess=None,
                         tol: float = NEWTON_TOL, max_iter: int = NEWTON_MAX_ITER):
    """Steady state with ``mu`` shaping, parameterised by the settled ``mu``.

    The load susceptance ``b`` is the extra unknown: it is whichever load
    makes ``mu`` self-consistent.  This parameterisation passes through the
    fold of the load-parameterised family without trouble.  Returns
    ``(ShapingPoint, z)`` with ``z`` the Newton vector, usable as the next
    guess.
    """
    if shape.mode != "mu":
        raise ConfigError("steady-state family is only defined for mu shaping")
    if not 0.0 < mu <= 1.0:
        raise ConfigError("mu must lie in (0, 1]")
    if guess is None:
        v0 = p.i_dc / p.g_dc
        i0, u0 = _ac_response(p.with_(mu=mu), 0.0, 0.0, v0)
        z = np.concatenate([[v0], i0, u0, [0.0]])
    else:
        z = np.array(guess, dtype=float)
    r = _shape_residual(z, p, shape, mu)
    res = float(np.max(np.abs(r)))
    for _ in range(max_iter):
        if res < tol:
            break
        try:
            step = np.linalg.solve(_shape_jacobian(z, p, shape, mu), -r)
        except np.linalg.LinAlgError as exc:
            raise SolverError("singular Jacobian", res) from exc
        lam = 1.0
        while True:
            zn = z + lam * step
            rn = _shape_residual(zn, p, shape, mu)
            resn = float(np.max(np.abs(rn)))
            if resn < res or lam < 1e-6:
                break
            lam *= 0.5
        z, r, res = zn, rn, resn
    if not res < tol:
        raise SolverError("shaping steady state did not converge", res)
    v, i, u = z[0], z[1:3], z[3:5]
    pt = ShapingPoint(
        mu=mu, b=float(z[5]), q_x=float(0.5 * mu * v * i[0]),
        vx_amp=float(0.5 * mu * v), p_x=float(0.5 * mu * v * i[1]),
        v_dc=float(v), omega=float(p.eta * v),
    )
    return pt, z


def shaping_family(p: ConverterParams, shape, mus) -> list[ShapingPoint]:
    """Steady states for each ``mu`` in ``mus``, solved by continuation."""
    out, z = [], None
    for mu in mus:
        pt, z = shaping_steady_state(p, shape, float(mu), guess=z)
        out.append(pt)
    return out


def shaping_fold(p: ConverterParams, shape, tol: float = 1e-9) -> ShapingPoint:
    """Inductive end of the feasible range: the most negative reachable ``b``.

    Past this load no steady state exists and the amplitude runs away, so
    the ``Q_x`` here is the largest deliverable reactive power.  Located by
    golden-section search on ``b(mu)`` over ``(base, 1]``.
    """
    cache, _z_cache = {}, {}

    def solve(mu):
        if mu not in cache:
            guess = None
            if _z_cache:
                guess = _z_cache[min(_z_cache, key=lambda m: abs(m - mu))]
            pt, z = shaping_steady_state(p, shape, mu, guess=guess)
            cache[mu], _z_cache[mu] = pt, z
        return cache[mu]

    # walk up from base so every solve starts next to a converged point
    for mu in np.linspace(shape.base, 1.0, 41)[1:]:
        solve(float(mu))
    grid = sorted(cache)
    k = min(range(len(grid)), key=lambda j: cache[grid[j]].b)
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, len(grid) - 1)]
    gr = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = hi - gr * (hi - lo), lo + gr * (hi - lo)
    while hi - lo > tol:
        if solve(c).b < solve(d).b:
            hi, d = d, c
            c = hi - gr * (hi - lo)
        else:
            lo, c = c, d
            d = lo + gr * (hi - lo)
    return solve(0.5 * (lo + hi))


# ---------------------------------------------------------------- export


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def to_record(operation: str, inputs: dict, result) -> dict:
    """JSON-ready record ``{"operation", "inputs", "result"}``."""
    if hasattr(result, "_asdict"):
        out = result._asdict()
    elif hasattr(result, "__dataclass_fields__"):
        out = asdict(result)
    elif isinstance(result, dict):
        out = result
    else:
        out = {"value": result}
    return {"operation": operation, "inputs": _jsonable(inputs), "result": _jsonable(out)}


def dumps_record(record: dict) -> str:
    return json.dumps(record, indent=2, sort_keys=True, ensure_ascii=False)

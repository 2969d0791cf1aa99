"""Reference-frame transforms and instantaneous power.

All two-axis quantities use the power-invariant scaling: a balanced phase
amplitude ``A`` shows up as ``A * sqrt(3/2)`` in the alpha-beta plane, and
``v . i`` computed in alpha-beta equals the three-phase power with no extra
factor.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

SQRT_3_2 = math.sqrt(1.5)

# rows: alpha, beta, gamma
T_ALPHA_BETA = math.sqrt(2.0 / 3.0) * np.array(
    [
        [1.0, -0.5, -0.5],
        [0.0, math.sqrt(3.0) / 2.0, -math.sqrt(3.0) / 2.0],
        [1.0 / math.sqrt(2.0), 1.0 / math.sqrt(2.0), 1.0 / math.sqrt(2.0)],
    ]
)

J2 = np.array([[0.0, -1.0], [1.0, 0.0]])


class AbcSignal(NamedTuple):
    a: float
    b: float
    c: float


class AlphaBetaSignal(NamedTuple):
    alpha: float
    beta: float


class DqSignal(NamedTuple):
    d: float
    q: float
    gamma_angle: float = 0.0


def rotation(angle: float) -> np.ndarray:
    """Counter-clockwise rotation matrix R(angle)."""
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def clarke(abc) -> tuple[AlphaBetaSignal, float]:
    """Map phase quantities to (alpha, beta) plus the zero-sequence part."""
    al, be, ga = T_ALPHA_BETA @ np.asarray(abc, dtype=float)
    return AlphaBetaSignal(float(al), float(be)), float(ga)


def inverse_clarke(ab, gamma: float = 0.0) -> AbcSignal:
    """Inverse of :func:`clarke`; the matrix is orthogonal so this is its transpose."""
    a, b, c = T_ALPHA_BETA.T @ np.array([ab[0], ab[1], gamma], dtype=float)
    return AbcSignal(float(a), float(b), float(c))


def park(ab, angle: float) -> DqSignal:
    """Rotate an alpha-beta vector by ``-angle``.

    Picking ``angle`` equal to the phase of a synchronous signal freezes it
    into a constant (d, q) pair.
    """
    c, s = math.cos(angle), math.sin(angle)
    al, be = float(ab[0]), float(ab[1])
    return DqSignal(c * al + s * be, -s * al + c * be, angle)


def inverse_park(dq: DqSignal) -> AlphaBetaSignal:
    c, s = math.cos(dq.gamma_angle), math.sin(dq.gamma_angle)
    return AlphaBetaSignal(c * dq.d - s * dq.q, s * dq.d + c * dq.q)


def instantaneous_pq(v, i) -> tuple[float, float]:
    """Active and reactive power of an alpha-beta voltage/current pair.

    ``Q = v_beta*i_alpha - v_alpha*i_beta``, so an inductive load (current
    lagging the voltage) draws positive Q.
    """
    va, vb = float(v[0]), float(v[1])
    ia, ib = float(i[0]), float(i[1])
    return va * ia + vb * ib, vb * ia - va * ib


def is_balanced(abc, tol: float) -> bool:
    if tol <= 0:
        raise ValueError("tol must be positive")
    a, b, c = (float(z) for z in abc)
    return abs(a + b + c) <= tol * max(1.0, math.sqrt(a * a + b * b + c * c))

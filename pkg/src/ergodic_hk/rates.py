"""Han-Kobayashi rate bounds for ergodic fading interference channels.

Every bound is an expectation of terms ``C(num/den) = log2(den + num) - log2(den)``
in which ``den`` and ``den + num`` are affine in the four per-state quantities
``P1, P2, a1*P1, a2*P2`` (``a`` = private power fraction). Ten such affine
"atoms" cover all seven bounds:

====  ==============================  =====================================
atom  value                           meaning
====  ==============================  =====================================
D1    1 + a2 g12 P2                   noise + private interference at rx 1
D2    1 + a1 g21 P1                   noise + private interference at rx 2
M1    1 + g11 P1 + g12 P2             everything received at rx 1
M2    1 + g21 P1 + g22 P2             everything received at rx 2
N1    1 + g11 P1 + a2 g12 P2          own signal + private interference, rx 1
N2    1 + a1 g21 P1 + g22 P2          own signal + private interference, rx 2
Q1    1 + a1 g11 P1 + a2 g12 P2       both private parts at rx 1
Q2    1 + a1 g21 P1 + a2 g22 P2       both private parts at rx 2
R1    1 + a1 g11 P1 + g12 P2          own private + full interferer at rx 1
R2    1 + g21 P1 + a2 g22 P2          own private + full interferer at rx 2
====  ==============================  =====================================

Working with atoms gives exact gradients for free and keeps each log-difference
nonnegative in floating point (a numerator atom is its denominator atom plus
nonnegative terms).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .channel import FadingLaw, FadingState, PowerMode

__all__ = [
    "RateError",
    "RateBoundSet",
    "SumRateBounds",
    "cap",
    "as_policy",
    "check_power",
    "state_bounds",
    "state_sum_rates",
    "rate_bounds",
    "sum_rate_bounds",
    "sum_rates",
    "sum_rates_and_grad",
    "state_sum_rates_and_grad",
    "per_state_sum_rate",
    "FEAS_TOL",
    "ARGMIN_TOL",
]

FEAS_TOL = 1e-9
ARGMIN_TOL = 1e-9
_LN2 = math.log(2.0)


class RateError(ValueError):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


def cap(x: float) -> float:
    """Gaussian channel capacity ``log2(1 + x)`` in bits per channel use."""
    if x < 0:
        raise RateError("NegativeArgument", f"cap() needs x >= 0, got {x!r}")
    return math.log2(1.0 + x)


# Atom coefficients on (P1, P2, a1*P1, a2*P2); each row picks gain columns
# (g11, g12, g21, g22) -> index, or -1 for "no term".
_ATOM_GAIN_INDEX = np.array(
    [
        # P1  P2  a1P1 a2P2
        [-1, -1, -1, 1],  # D1
        [-1, -1, 2, -1],  # D2
        [0, 1, -1, -1],  # M1
        [2, 3, -1, -1],  # M2
        [0, -1, -1, 1],  # N1
        [-1, 3, 2, -1],  # N2
        [-1, -1, 0, 1],  # Q1
        [-1, -1, 2, 3],  # Q2
        [-1, 1, 0, -1],  # R1
        [2, -1, -1, 3],  # R2
    ]
)
D1, D2, M1, M2, N1, N2, Q1, Q2, R1, R2 = range(10)

# log-difference terms (numerator atom, denominator atom), each >= 0
_TERMS = np.array(
    [
        (N1, D1),  # t0: private rate of user 1
        (N2, D2),  # t1: private rate of user 2
        (M1, D1),  # t2: rx 1 decodes own + other's common
        (Q2, D2),  # t3: rx 2 private of user 2
        (M2, D2),  # t4
        (Q1, D1),  # t5
        (R1, D1),  # t6
        (R2, D2),  # t7
    ]
)

# B_k as sums of terms
_B_FROM_T = np.array(
    [
        [1, 0, 0, 0, 0, 0, 0, 0],  # B1
        [0, 1, 0, 0, 0, 0, 0, 0],  # B2
        [0, 0, 1, 1, 0, 0, 0, 0],  # B3
        [0, 0, 0, 0, 1, 1, 0, 0],  # B4
        [0, 0, 0, 0, 0, 0, 1, 1],  # B5
        [0, 0, 1, 0, 0, 1, 0, 1],  # B6
        [0, 0, 0, 1, 1, 0, 1, 0],  # B7
    ],
    dtype=float,
)

# S_m as combinations of B_k
_S_FROM_B = np.array(
    [
        [1, 1, 0, 0, 0, 0, 0],  # S1 = B1 + B2
        [0, 0, 1, 0, 0, 0, 0],  # S2 = B3
        [0, 0, 0, 1, 0, 0, 0],  # S3 = B4
        [0, 0, 0, 0, 1, 0, 0],  # S4 = B5
        [0, 0.5, 0, 0, 0, 0.5, 0],  # S5 = (B6 + B2) / 2
        [0.5, 0, 0, 0, 0, 0, 0.5],  # S6 = (B7 + B1) / 2
    ]
)
_S_FROM_T = _S_FROM_B @ _B_FROM_T


def _atom_coeffs(gains: np.ndarray) -> np.ndarray:
    """``(..., 4)`` gains -> ``(..., 10, 4)`` atom coefficients."""
    padded = np.concatenate([gains, np.zeros(gains.shape[:-1] + (1,))], axis=-1)
    return padded[..., _ATOM_GAIN_INDEX]


def _atoms(coeffs: np.ndarray, alpha: np.ndarray, power: np.ndarray):
    alpha, power = np.broadcast_arrays(alpha, power)
    p1, p2 = power[..., 0], power[..., 1]
    v = np.stack([p1, p2, alpha[..., 0] * p1, alpha[..., 1] * p2], axis=-1)
    # 1 + c . v, summed in a fixed left-to-right order
    prod = coeffs * v[..., None, :]
    return 1.0 + (((prod[..., 0] + prod[..., 1]) + prod[..., 2]) + prod[..., 3])


def _terms(gains, alpha, power):
    coeffs = _atom_coeffs(np.asarray(gains, dtype=float))
    atoms = _atoms(coeffs, np.asarray(alpha, dtype=float), np.asarray(power, dtype=float))
    logs = np.log2(atoms)
    return logs[..., _TERMS[:, 0]] - logs[..., _TERMS[:, 1]], atoms, coeffs


def state_bounds(gains, alpha, power) -> np.ndarray:
    """Per-state integrands of B1..B7; trailing axis of length 7.

    ``gains`` has trailing shape ``(4,)``, ``alpha`` and ``power`` trailing
    shape ``(2,)``; leading axes broadcast.
    """
    t, _, _ = _terms(gains, alpha, power)
    return t @ _B_FROM_T.T


def state_sum_rates(gains, alpha, power) -> np.ndarray:
    """Per-state versions of S1..S6 (expectation dropped); trailing axis of length 6."""
    return state_bounds(gains, alpha, power) @ _S_FROM_B.T


def as_policy(values, n: int, name: str = "policy") -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.shape == (2,) and n == 1:
        arr = arr.reshape(1, 2)
    if arr.shape != (n, 2):
        raise RateError("PolicyLengthMismatch", f"{name} has shape {arr.shape}, expected ({n}, 2)")
    if not np.all(np.isfinite(arr)):
        raise RateError("PolicyLengthMismatch", f"{name} has non-finite entries")
    return arr


def power_residual(law: FadingLaw, power: np.ndarray) -> float:
    """Largest constraint violation of ``power`` (<= 0 when strictly feasible)."""
    budgets = np.array(law.budgets)
    neg = float(np.max(-power, initial=0.0))
    if law.mode is PowerMode.AVERAGE:
        used = law.prob_array @ power
        over = float(np.max(used - budgets))
    else:
        over = float(np.max(power - budgets))
    return max(neg, over)


def check_power(law: FadingLaw, power) -> np.ndarray:
    p = as_policy(power, law.n, "power")
    if power_residual(law, p) > FEAS_TOL:
        raise RateError("InfeasiblePower", f"power policy violates the {law.mode.value} constraint")
    return p


def check_split(law: FadingLaw, split) -> np.ndarray:
    a = as_policy(split, law.n, "split")
    if np.any(a < 0) or np.any(a > 1):
        raise RateError("InvalidSplit", "private power fractions must lie in [0, 1]")
    return a


@dataclass(frozen=True)
class RateBoundSet:
    B1: float
    B2: float
    B3: float
    B4: float
    B5: float
    B6: float
    B7: float

    def as_array(self) -> np.ndarray:
        return np.array([self.B1, self.B2, self.B3, self.B4, self.B5, self.B6, self.B7])


@dataclass(frozen=True)
class SumRateBounds:
    S1: float
    S2: float
    S3: float
    S4: float
    S5: float
    S6: float
    min_value: float
    argmin_set: tuple[int, ...]

    def as_array(self) -> np.ndarray:
        return np.array([self.S1, self.S2, self.S3, self.S4, self.S5, self.S6])

    @classmethod
    def from_values(cls, s: Sequence[float], tol: float = ARGMIN_TOL) -> "SumRateBounds":
        s = [float(x) for x in s]
        lo = min(s)
        arg = tuple(m + 1 for m, v in enumerate(s) if v - lo <= tol)
        return cls(*s, min_value=lo, argmin_set=arg)


def _expect(law: FadingLaw, per_state: np.ndarray) -> np.ndarray:
    # fixed state-order reduction
    p = law.prob_array
    acc = np.zeros(per_state.shape[1:])
    for s in range(law.n):
        acc = acc + p[s] * per_state[s]
    return acc


def rate_bounds(law: FadingLaw, split, power) -> RateBoundSet:
    """Expected bounds B1..B7 for the given split and power policies."""
    a = check_split(law, split)
    p = check_power(law, power)
    b = _expect(law, state_bounds(law.gains(), a, p))
    return RateBoundSet(*map(float, b))


def sum_rate_bounds(law: FadingLaw, split, power) -> SumRateBounds:
    b = rate_bounds(law, split, power).as_array()
    s = (
        b[0] + b[1],
        b[2],
        b[3],
        b[4],
        (b[5] + b[1]) / 2.0,
        (b[6] + b[0]) / 2.0,
    )
    return SumRateBounds.from_values(s)


def sum_rates(gains: np.ndarray, probs: np.ndarray, alpha, power) -> np.ndarray:
    """S1..S6 for batched policies: ``alpha``/``power`` shaped ``(..., n, 2)``.

    Unchecked fast path for the optimizers.
    """
    per = state_sum_rates(gains, alpha, power)
    return np.einsum("...nm,n->...m", per, probs)


def sum_rates_and_grad(gains: np.ndarray, probs: np.ndarray, alpha: np.ndarray, power: np.ndarray):
    """S1..S6 and their gradients for one policy pair.

    Returns ``(s, d_alpha, d_power)`` with shapes ``(6,)``, ``(6, n, 2)``, ``(6, n, 2)``.
    """
    per_state, d_alpha, d_power = state_sum_rates_and_grad(gains, alpha, power)
    s = probs @ per_state
    w = probs[:, None, None]
    return s, np.einsum("nmx->mnx", d_alpha * w), np.einsum("nmx->mnx", d_power * w)


def state_sum_rates_and_grad(gains: np.ndarray, alpha: np.ndarray, power: np.ndarray):
    """Per-state S1..S6 with gradients in the state's own variables.

    ``alpha`` and ``power`` are shaped ``(..., n, 2)``. Returns ``(s, d_alpha,
    d_power)`` shaped ``(..., n, 6)``, ``(..., n, 6, 2)``, ``(..., n, 6, 2)``.
    """
    alpha, power = np.broadcast_arrays(np.asarray(alpha, float), np.asarray(power, float))
    t, atoms, c = _terms(gains, alpha, power)
    p1, p2 = power[..., 0, None], power[..., 1, None]
    a1, a2 = alpha[..., 0, None], alpha[..., 1, None]
    # d atom / d (a1, a2, P1, P2)
    d_atoms = np.stack(
        [c[..., 2] * p1, c[..., 3] * p2, c[..., 0] + c[..., 2] * a1, c[..., 1] + c[..., 3] * a2],
        axis=-1,
    )
    dlog = d_atoms / (atoms[..., None] * _LN2)
    d_terms = dlog[..., _TERMS[:, 0], :] - dlog[..., _TERMS[:, 1], :]
    per_state = t @ _S_FROM_T.T
    grad = np.einsum("mt,...ntx->...nmx", _S_FROM_T, d_terms)
    return per_state, grad[..., :2], grad[..., 2:]


def per_state_sum_rate(state: FadingState, alpha_pair, p_pair) -> float:
    """HK sum-rate of a single non-fading sub-channel: ``min_m S_m`` without expectation."""
    a = np.asarray(alpha_pair, dtype=float)
    p = np.asarray(p_pair, dtype=float)
    if a.shape != (2,) or p.shape != (2,):
        raise RateError("PolicyLengthMismatch", "alpha_pair and p_pair must have two entries")
    if np.any(a < 0) or np.any(a > 1):
        raise RateError("InvalidSplit", "private power fractions must lie in [0, 1]")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise RateError("InfeasiblePower", "powers must be finite and >= 0")
    return float(np.min(state_sum_rates(np.array(state.as_tuple()), a, p)))

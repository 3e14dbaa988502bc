"""Finite-state ergodic fading laws for the two-user Gaussian interference channel.

A law is a probability-weighted list of fading states. Each state stores the
four squared gain magnitudes ``g[i][j] = |H_ij|^2`` (receiver ``i``, transmitter
``j``). Ergodic expectations over the fading process become weighted sums over
the list, so every rate expression downstream is exactly computable.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "ChannelError",
    "ValidationError",
    "ParseError",
    "UnsupportedSpec",
    "PowerMode",
    "FadingState",
    "FadingLaw",
    "StateClass",
    "Structural",
    "ChannelClass",
    "validate_law",
    "classify_state",
    "classify_channel",
    "sample_law",
    "law_to_dict",
    "law_from_dict",
    "dumps_law",
    "loads_law",
]

PROB_TOL = 1e-9
# sums this close to one are floating-point rounding of exact weights (e.g. 1/n)
_ROUNDING_TOL = 1e-14


class ChannelError(ValueError):
    """Base class for malformed channel descriptions."""


class ValidationError(ChannelError):
    """A law violates one of its invariants.

    ``code`` names the violated rule (``NegativeGain``, ``NonpositiveProbability``,
    ``ProbabilitySumMismatch``, ``EmptyStateList``, ``NegativeBudget``,
    ``LengthMismatch``).
    """

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


class ParseError(ChannelError):
    """A serialized law could not be read."""


class UnsupportedSpec(ChannelError):
    pass


class PowerMode(str, enum.Enum):
    AVERAGE = "average"
    PER_STATE = "per_state"


@dataclass(frozen=True)
class FadingState:
    """Squared gain magnitudes of one sub-channel."""

    g11: float
    g12: float
    g21: float
    g22: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.g11, self.g12, self.g21, self.g22)

    def swapped(self) -> "FadingState":
        """Relabel the users: receiver/transmitter 1 becomes 2 and vice versa."""
        return FadingState(self.g22, self.g21, self.g12, self.g11)


@dataclass(frozen=True)
class FadingLaw:
    """A finite fading distribution together with the power budgets.

    ``mode`` selects between a fading-averaged power constraint
    (``sum_s prob(s) P_k(s) <= budget_k``) and a per-state cap
    (``P_k(s) <= budget_k`` for every state).
    """

    states: tuple[FadingState, ...]
    probs: tuple[float, ...]
    budget1: float = 1.0
    budget2: float = 1.0
    mode: PowerMode = PowerMode.AVERAGE

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))
        object.__setattr__(self, "mode", PowerMode(self.mode))
        object.__setattr__(self, "budget1", float(self.budget1))
        object.__setattr__(self, "budget2", float(self.budget2))

    @property
    def n(self) -> int:
        return len(self.states)

    @property
    def budgets(self) -> tuple[float, float]:
        return (self.budget1, self.budget2)

    @property
    def prob_array(self) -> np.ndarray:
        return np.asarray(self.probs, dtype=float)

    def gains(self) -> np.ndarray:
        """Gains as an ``(n, 4)`` array with columns ``g11, g12, g21, g22``."""
        return np.array([s.as_tuple() for s in self.states], dtype=float).reshape(-1, 4)

    def swapped(self) -> "FadingLaw":
        return FadingLaw(
            tuple(s.swapped() for s in self.states),
            self.probs,
            self.budget2,
            self.budget1,
            self.mode,
        )

    def with_budgets(self, budget1: float, budget2: float) -> "FadingLaw":
        return FadingLaw(self.states, self.probs, budget1, budget2, self.mode)

    def restricted(self, indices: Sequence[int]) -> "FadingLaw":
        """Conditional law on a subset of the states (probabilities renormalized)."""
        probs = [self.probs[i] for i in indices]
        total = math.fsum(probs)
        return FadingLaw(
            tuple(self.states[i] for i in indices),
            tuple(p / total for p in probs),
            self.budget1,
            self.budget2,
            self.mode,
        )


class StateClass(str, enum.Enum):
    STRONG = "Strong"
    WEAK = "Weak"
    MIXED_RX1_WEAK_RX2_STRONG = "MixedRx1WeakRx2Strong"
    MIXED_RX1_STRONG_RX2_WEAK = "MixedRx1StrongRx2Weak"

    @property
    def is_mixed(self) -> bool:
        return self in (StateClass.MIXED_RX1_WEAK_RX2_STRONG, StateClass.MIXED_RX1_STRONG_RX2_WEAK)

    def swapped(self) -> "StateClass":
        if self is StateClass.MIXED_RX1_WEAK_RX2_STRONG:
            return StateClass.MIXED_RX1_STRONG_RX2_WEAK
        if self is StateClass.MIXED_RX1_STRONG_RX2_WEAK:
            return StateClass.MIXED_RX1_WEAK_RX2_STRONG
        return self


class Structural(str, enum.Enum):
    UNIFORMLY_STRONG = "UniformlyStrong"
    UNIFORMLY_WEAK = "UniformlyWeak"
    UNIFORMLY_MIXED = "UniformlyMixed"
    HYBRID = "Hybrid"


@dataclass(frozen=True)
class ChannelClass:
    """Structural sub-class of a law plus the EVS flag.

    ``orientation`` is the common state class of a uniformly mixed law and
    ``None`` otherwise. ``evs`` is only filled in by :func:`ergodic_hk.schemes.check_evs`.
    """

    structural: Structural
    orientation: StateClass | None = None
    evs: bool = False
    state_classes: tuple[StateClass, ...] = field(default=(), compare=False)


def _check_finite_nonneg(value: float, code: str, what: str) -> None:
    if not math.isfinite(value) or value < 0:
        raise ValidationError(code, f"{what} must be finite and >= 0, got {value!r}")


def validate_law(law: FadingLaw) -> FadingLaw:
    """Check every invariant of ``law``.

    Probabilities off from one by more than rounding but at most ``1e-9`` are rescaled
    to sum exactly to one; anything further off is rejected.
    """
    if law.n == 0:
        raise ValidationError("EmptyStateList", "a law needs at least one state")
    if len(law.probs) != law.n:
        raise ValidationError(
            "LengthMismatch", f"{law.n} states but {len(law.probs)} probabilities"
        )
    for i, s in enumerate(law.states):
        for name, g in zip(("g11", "g12", "g21", "g22"), s.as_tuple()):
            _check_finite_nonneg(g, "NegativeGain", f"state {i} {name}")
    for i, p in enumerate(law.probs):
        if not math.isfinite(p) or p <= 0:
            raise ValidationError("NonpositiveProbability", f"prob[{i}] = {p!r}")
    _check_finite_nonneg(law.budget1, "NegativeBudget", "budget1")
    _check_finite_nonneg(law.budget2, "NegativeBudget", "budget2")

    total = math.fsum(law.probs)
    dev = abs(total - 1.0)
    if dev > PROB_TOL:
        raise ValidationError("ProbabilitySumMismatch", f"probabilities sum to {total!r}")
    if dev > _ROUNDING_TOL:
        probs = tuple(p / total for p in law.probs)
        # one more pass absorbs the last-ulp error of the division
        resid = 1.0 - math.fsum(probs)
        if resid != 0.0:
            k = int(np.argmax(probs))
            probs = probs[:k] + (probs[k] + resid,) + probs[k + 1:]
        return FadingLaw(law.states, probs, law.budget1, law.budget2, law.mode)
    return law


def classify_state(s: FadingState) -> StateClass:
    """Quadrant rule; a cross gain equal to the direct gain counts as strong."""
    rx1_strong = s.g12 >= s.g22
    rx2_strong = s.g21 >= s.g11
    if rx1_strong and rx2_strong:
        return StateClass.STRONG
    if not rx1_strong and not rx2_strong:
        return StateClass.WEAK
    if rx2_strong:
        return StateClass.MIXED_RX1_WEAK_RX2_STRONG
    return StateClass.MIXED_RX1_STRONG_RX2_WEAK


def classify_channel(law: FadingLaw) -> ChannelClass:
    tags = tuple(classify_state(s) for s in law.states)
    first = tags[0]
    if all(t is first for t in tags):
        if first is StateClass.STRONG:
            return ChannelClass(Structural.UNIFORMLY_STRONG, state_classes=tags)
        if first is StateClass.WEAK:
            return ChannelClass(Structural.UNIFORMLY_WEAK, state_classes=tags)
        return ChannelClass(Structural.UNIFORMLY_MIXED, orientation=first, state_classes=tags)
    return ChannelClass(Structural.HYBRID, state_classes=tags)


# -- sampling ---------------------------------------------------------------

GENERATOR_NAME = "PCG64"
_DISTRIBUTIONS = ("rayleigh", "lognormal", "explicit")


def _uniforms(seed: int, size: tuple[int, ...]) -> np.ndarray:
    # Raw PCG64 doubles are stream-stable across numpy releases and platforms;
    # the distribution transforms below are done by hand for the same reason.
    gen = np.random.Generator(np.random.PCG64(seed))
    return gen.random(size)


def sample_law(
    spec: Mapping[str, Any],
    n: int,
    seed: int,
    budgets: tuple[float, float] = (1.0, 1.0),
    mode: PowerMode | str = PowerMode.AVERAGE,
) -> FadingLaw:
    """Draw ``n`` equiprobable fading states.

    ``spec`` is a mapping with a ``kind`` key:

    * ``{"kind": "rayleigh", "mean": (m11, m12, m21, m22)}``: each ``g_ij`` is
      exponential with mean ``m_ij`` (the squared magnitude of a Rayleigh gain).
    * ``{"kind": "lognormal", "mean": (...), "sigma_db": s}``: ``g_ij`` is
      log-normal with mean ``m_ij`` and dB spread ``s`` (default 8 dB).
    * ``{"kind": "explicit", "states": [(g11, g12, g21, g22), ...]}``: the listed
      states are used as is; ``n`` must equal their count.

    Draws come from numpy's PCG64 bit generator seeded with ``seed``. Only its raw
    uniform doubles are used, so equal inputs give bit-identical laws.
    """
    if n < 1:
        raise ValidationError("ZeroSamples", f"need n >= 1, got {n}")
    kind = spec.get("kind")
    if kind not in _DISTRIBUTIONS:
        raise UnsupportedSpec(f"unknown fading distribution {kind!r}")

    if kind == "explicit":
        rows = [tuple(float(x) for x in st) for st in spec["states"]]
        if len(rows) != n:
            raise ValidationError(
                "LengthMismatch", f"explicit spec lists {len(rows)} states, n={n}"
            )
        gains = np.array(rows, dtype=float).reshape(-1, 4)
    else:
        mean = np.asarray(spec.get("mean", (1.0, 1.0, 1.0, 1.0)), dtype=float)
        if mean.shape != (4,) or np.any(mean < 0) or not np.all(np.isfinite(mean)):
            raise UnsupportedSpec("mean must be four finite nonnegative numbers")
        if kind == "rayleigh":
            u = _uniforms(seed, (n, 4))
            gains = -mean * np.log1p(-u)
        else:
            sigma = float(spec.get("sigma_db", 8.0)) * math.log(10.0) / 10.0
            u = _uniforms(seed, (n, 4, 2))
            # Box-Muller
            z = np.sqrt(-2.0 * np.log1p(-u[..., 0])) * np.cos(2.0 * math.pi * u[..., 1])
            gains = mean * np.exp(sigma * z - 0.5 * sigma * sigma)

    states = tuple(FadingState(*map(float, row)) for row in gains)
    law = FadingLaw(states, (1.0 / n,) * n, budgets[0], budgets[1], PowerMode(mode))
    return validate_law(law)


# -- serialization ----------------------------------------------------------

_LAW_FIELDS = {"states", "probs", "budget1", "budget2", "mode"}
_STATE_FIELDS = ("g11", "g12", "g21", "g22")


def law_to_dict(law: FadingLaw) -> dict[str, Any]:
    return {
        "states": [dict(zip(_STATE_FIELDS, s.as_tuple())) for s in law.states],
        "probs": list(law.probs),
        "budget1": law.budget1,
        "budget2": law.budget2,
        "mode": law.mode.value,
    }


def _number(value: Any, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"{where}: expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ParseError(f"{where}: non-finite number")
    return value


def law_from_dict(doc: Mapping[str, Any]) -> FadingLaw:
    """Build and validate a law from its key-value form; unknown keys are rejected."""
    if not isinstance(doc, Mapping):
        raise ParseError("law document must be an object")
    unknown = set(doc) - _LAW_FIELDS
    if unknown:
        raise ParseError(f"unknown field(s): {', '.join(sorted(unknown))}")
    missing = {"states", "probs"} - set(doc)
    if missing:
        raise ParseError(f"missing field(s): {', '.join(sorted(missing))}")
    if not isinstance(doc["states"], list) or not isinstance(doc["probs"], list):
        raise ParseError("'states' and 'probs' must be arrays")

    states = []
    for i, st in enumerate(doc["states"]):
        if not isinstance(st, Mapping):
            raise ParseError(f"states[{i}]: expected an object")
        extra = set(st) - set(_STATE_FIELDS)
        if extra:
            raise ParseError(f"states[{i}]: unknown field(s): {', '.join(sorted(extra))}")
        absent = [k for k in _STATE_FIELDS if k not in st]
        if absent:
            raise ParseError(f"states[{i}]: missing field(s): {', '.join(absent)}")
        states.append(FadingState(*(_number(st[k], f"states[{i}].{k}") for k in _STATE_FIELDS)))
    probs = tuple(_number(p, f"probs[{i}]") for i, p in enumerate(doc["probs"]))
    try:
        mode = PowerMode(doc.get("mode", "average"))
    except ValueError:
        raise ParseError(f"mode: expected 'average' or 'per_state', got {doc.get('mode')!r}")
    law = FadingLaw(
        tuple(states),
        probs,
        _number(doc.get("budget1", 1.0), "budget1"),
        _number(doc.get("budget2", 1.0), "budget2"),
        mode,
    )
    return validate_law(law)


def dumps_law(law: FadingLaw) -> str:
    return json.dumps(law_to_dict(law), indent=2) + "\n"


def _reject_constant(token: str):
    raise ParseError(f"non-finite number {token}")


def loads_law(text: str) -> FadingLaw:
    try:
        doc = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return law_from_dict(doc)


def make_law(
    states: Iterable[Sequence[float]],
    probs: Sequence[float] | None = None,
    budgets: tuple[float, float] = (1.0, 1.0),
    mode: PowerMode | str = PowerMode.AVERAGE,
) -> FadingLaw:
    """Convenience constructor from gain tuples; defaults to equiprobable states."""
    sts = tuple(FadingState(*map(float, s)) for s in states)
    if probs is None:
        probs = (1.0 / len(sts),) * len(sts) if sts else ()
    return validate_law(FadingLaw(sts, tuple(probs), budgets[0], budgets[1], PowerMode(mode)))

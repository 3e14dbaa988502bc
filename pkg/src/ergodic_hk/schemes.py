"""Sub-class results: EVS, uniformly strong/mixed/weak and hybrid channels.

Each sub-class pins down the optimal private/common split, which reduces the
joint max-min problem to a power optimization over a subset of the sum-rate
bounds. This module checks the sub-class conditions, runs the reduced
optimizations, and compares joint coding across states with separable
per-state coding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .channel import (
    ChannelClass,
    FadingLaw,
    PowerMode,
    StateClass,
    Structural,
    classify_channel,
)
from .optimize import (
    Method,
    OptimizationResult,
    OptimizerOptions,
    maximize_joint,
    maximize_power,
    maximize_separable,
    waterfill_policy,
)
from .rates import sum_rate_bounds

__all__ = [
    "SchemeError",
    "EVSWitness",
    "UWMargins",
    "SubclassReport",
    "ComparisonReport",
    "check_evs",
    "evs_sum_capacity",
    "us_sum_capacity",
    "um_sum_capacity",
    "um_split",
    "uw_condition_check",
    "uw_sum_rate",
    "compare_joint_vs_separable",
    "subclass_report",
]


class SchemeError(ValueError):
    """A sub-class routine was called on a channel outside its sub-class."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


@dataclass(frozen=True)
class EVSWitness:
    """Sum-rate bounds at the all-common split with waterfilled powers."""

    sum_rates: tuple[float, ...]
    power: np.ndarray
    reduced: bool
    full: bool

    @property
    def margin(self) -> float:
        s = self.sum_rates
        return min(s[1], s[2]) - s[0]


def check_evs(law: FadingLaw) -> tuple[bool, EVSWitness]:
    """Ergodic very strong test: ``S1 < min(S2, S3)`` at ``(alpha=0, P=P_wf)``.

    The witness also records the full condition ``S1 < S_j`` for every ``j > 1``;
    whenever the reduced test passes the full one must pass too.
    """
    power = waterfill_policy(law)
    s = sum_rate_bounds(law, np.zeros((law.n, 2)), power).as_array()
    reduced = bool(s[0] < min(s[1], s[2]))
    full = bool(all(s[0] < s[j] for j in range(1, 6)))
    return reduced, EVSWitness(tuple(float(x) for x in s), power, reduced, full)


def _interference_free_sum(law: FadingLaw, power: np.ndarray) -> float:
    g = law.gains()
    terms = []
    for p, row, pw in zip(law.probs, g, power):
        terms.append(p * math.log2(1.0 + row[0] * pw[0]))
        terms.append(p * math.log2(1.0 + row[3] * pw[1]))
    return math.fsum(terms)


def evs_sum_capacity(law: FadingLaw) -> OptimizationResult:
    """Closed form for EVS channels: all-common split, waterfilled powers.

    The value is the sum of the two interference-free ergodic capacities.
    """
    ok, witness = check_evs(law)
    if not ok:
        raise SchemeError("NotEVS", f"EVS condition fails (margin {witness.margin:.6g})")
    alpha = np.zeros((law.n, 2))
    value = _interference_free_sum(law, witness.power)
    return OptimizationResult(
        split=alpha,
        power=witness.power,
        value=value,
        active_bounds=(1,),
        method=Method.CLOSED_FORM,
        diagnostics={"sum_rates": list(witness.sum_rates), "feasibility_residual": 0.0},
    )


def _require(law: FadingLaw, structural: Structural, code: str) -> ChannelClass:
    cls = classify_channel(law)
    if cls.structural is not structural:
        raise SchemeError(code, f"channel is {cls.structural.value}")
    return cls


def us_sum_capacity(law: FadingLaw, opts: OptimizerOptions | None = None, jobs: int = 1) -> OptimizationResult:
    """Uniformly strong channels: common messages only, ``max_P min(S1, S2, S3)``."""
    _require(law, Structural.UNIFORMLY_STRONG, "NotUniformlyStrong")
    return maximize_power(law, np.zeros((law.n, 2)), (1, 2, 3), opts, jobs=jobs)


def um_split(orientation: StateClass, n: int) -> np.ndarray:
    """Split for a uniformly mixed channel.

    The transmitter whose signal is strong at the other receiver sends only a
    common message; the other sends only a private message.
    """
    if orientation is StateClass.MIXED_RX1_WEAK_RX2_STRONG:
        row = (0.0, 1.0)
    elif orientation is StateClass.MIXED_RX1_STRONG_RX2_WEAK:
        row = (1.0, 0.0)
    else:
        raise SchemeError("NotUniformlyMixed", f"{orientation} is not a mixed state class")
    return np.tile(row, (n, 1))


def um_sum_capacity(law: FadingLaw, opts: OptimizerOptions | None = None, jobs: int = 1) -> OptimizationResult:
    """Uniformly mixed channels: oriented split, ``max_P min(S2, S3)``."""
    cls = _require(law, Structural.UNIFORMLY_MIXED, "NotUniformlyMixed")
    return maximize_power(law, um_split(cls.orientation, law.n), (2, 3), opts, jobs=jobs)


@dataclass(frozen=True)
class UWMargins:
    """Per-state slack of the two weak-interference conditions at worst-case power.

    ``c1[s] = g22 - (1 + g21 P1max) g12`` and ``c2[s] = g11 - (1 + g12 P2max) g21``;
    both must be strictly positive in every state.
    """

    c1: tuple[float, ...]
    c2: tuple[float, ...]
    worst_power: np.ndarray

    @property
    def min_margin(self) -> float:
        return min(min(self.c1), min(self.c2))


def uw_condition_check(law: FadingLaw) -> tuple[bool, UWMargins]:
    """Sufficient conditions for treating interference as noise in a uniformly weak channel.

    The conditions must hold for every feasible power policy. Both are monotone
    in power, so they are checked at the largest per-state power: ``budget /
    prob(s)`` under the average constraint, ``budget`` under the per-state one.
    """
    _require(law, Structural.UNIFORMLY_WEAK, "NotUniformlyWeak")
    b = np.array(law.budgets, dtype=float)
    if law.mode is PowerMode.AVERAGE:
        worst = b[None, :] / law.prob_array[:, None]
    else:
        worst = np.tile(b, (law.n, 1))
    g = law.gains()
    c1 = g[:, 3] - (1.0 + g[:, 2] * worst[:, 0]) * g[:, 1]
    c2 = g[:, 0] - (1.0 + g[:, 1] * worst[:, 1]) * g[:, 2]
    ok = bool(np.all(c1 > 0) and np.all(c2 > 0))
    return ok, UWMargins(tuple(map(float, c1)), tuple(map(float, c2)), worst)


def uw_sum_rate(law: FadingLaw, opts: OptimizerOptions | None = None, jobs: int = 1) -> OptimizationResult:
    """Private messages only (interference treated as noise): ``max_P S1(1, P)``.

    Only valid when :func:`uw_condition_check` passes; this is the best sum-rate
    of the HK family there, not a capacity result.
    """
    ok, margins = uw_condition_check(law)
    if not ok:
        raise SchemeError("UWConditionsFail", f"minimum margin {margins.min_margin:.6g}")
    return maximize_power(law, np.ones((law.n, 2)), (1,), opts, jobs=jobs)


# -- joint vs separable ---------------------------------------------------------


@dataclass
class ComparisonReport:
    joint: OptimizationResult
    separable: OptimizationResult
    channel: ChannelClass
    evs: bool

    @property
    def gap(self) -> float:
        return self.joint.value - self.separable.value

    def split_structure(self) -> list[dict[str, Any]]:
        """Per-state class and the joint optimum's split."""
        rows = []
        for tag, a in zip(self.channel.state_classes, self.joint.split):
            rows.append({"class": tag.value, "alpha1": float(a[0]), "alpha2": float(a[1])})
        return rows


def compare_joint_vs_separable(
    law: FadingLaw, opts: OptimizerOptions | None = None, jobs: int = 1
) -> ComparisonReport:
    """Optimize both coding strategies with the same options.

    The separable optimum is also handed to the joint optimizer as a start:
    at equal policies the joint objective (min of expectations) is never below
    the separable one (expectation of mins), so the reported gap is >= 0 up to
    rounding regardless of how well the heuristics do.
    """
    sep = maximize_separable(law, opts, jobs=jobs)
    joint = maximize_joint(law, opts, initial=[(sep.split, sep.power)], jobs=jobs)
    evs, _ = check_evs(law)
    return ComparisonReport(joint, sep, classify_channel(law), evs)


# -- per-law summary ------------------------------------------------------------------


@dataclass
class SubclassReport:
    channel: ChannelClass
    evs: bool
    evs_witness: EVSWitness
    uw_conditions: bool | None
    uw_margins: UWMargins | None
    recommended_split: np.ndarray
    sum_rate: OptimizationResult
    capacity_certified: bool
    scheme: str
    notes: list[str] = field(default_factory=list)


def subclass_report(law: FadingLaw, opts: OptimizerOptions | None = None, jobs: int = 1) -> SubclassReport:
    """Classify ``law`` and evaluate the sum-rate under its sub-class structure.

    Capacity is certified only for EVS, uniformly strong and uniformly mixed
    channels, where matching outer bounds are known.
    """
    cls = classify_channel(law)
    evs, witness = check_evs(law)
    cls = ChannelClass(cls.structural, cls.orientation, evs, cls.state_classes)
    uw_ok, margins = None, None
    notes: list[str] = []
    if cls.structural is Structural.UNIFORMLY_WEAK:
        uw_ok, margins = uw_condition_check(law)

    if evs:
        res, scheme, certified = evs_sum_capacity(law), "evs", True
    elif cls.structural is Structural.UNIFORMLY_STRONG:
        res, scheme, certified = us_sum_capacity(law, opts, jobs), "uniformly_strong", True
    elif cls.structural is Structural.UNIFORMLY_MIXED:
        res, scheme, certified = um_sum_capacity(law, opts, jobs), "uniformly_mixed", True
    elif uw_ok:
        res, scheme, certified = uw_sum_rate(law, opts, jobs), "uniformly_weak_tin", False
    else:
        res, scheme, certified = maximize_joint(law, opts, jobs=jobs), "joint_search", False
        if cls.structural is Structural.UNIFORMLY_WEAK:
            notes.append("weak-interference conditions fail; split found numerically")
        else:
            notes.append("weak-state splits found numerically")
    return SubclassReport(
        channel=cls,
        evs=evs,
        evs_witness=witness,
        uw_conditions=uw_ok,
        uw_margins=margins,
        recommended_split=res.split,
        sum_rate=res,
        capacity_certified=certified,
        scheme=scheme,
        notes=notes,
    )

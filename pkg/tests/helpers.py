"""Shared test utilities: an independent scalar rate oracle and law generators."""

from __future__ import annotations

import math

import numpy as np

from ergodic_hk.channel import FadingLaw, FadingState, PowerMode


def C(x: float) -> float:
    return math.log2(1.0 + x)


def scalar_bounds(g, a, p):
    """B1..B7 for one state, written out fraction by fraction with plain floats."""
    g11, g12, g21, g22 = g
    a1, a2 = a
    p1, p2 = p
    b1, b2 = 1.0 - a1, 1.0 - a2
    d1 = 1.0 + a2 * g12 * p2
    d2 = 1.0 + a1 * g21 * p1
    B1 = C(g11 * p1 / d1)
    B2 = C(g22 * p2 / d2)
    B3 = C((g11 * p1 + g12 * b2 * p2) / d1) + C(g22 * a2 * p2 / d2)
    B4 = C((g22 * p2 + g21 * b1 * p1) / d2) + C(g11 * a1 * p1 / d1)
    B5 = C((a1 * g11 * p1 + g12 * b2 * p2) / d1) + C((a2 * g22 * p2 + g21 * b1 * p1) / d2)
    B6 = (
        C((g11 * p1 + g12 * b2 * p2) / d1)
        + C(g11 * a1 * p1 / d1)
        + C((a2 * g22 * p2 + g21 * b1 * p1) / d2)
    )
    B7 = (
        C((g22 * p2 + g21 * b1 * p1) / d2)
        + C(g22 * a2 * p2 / d2)
        + C((a1 * g11 * p1 + g12 * b2 * p2) / d1)
    )
    return [B1, B2, B3, B4, B5, B6, B7]


def scalar_law_bounds(law: FadingLaw, alpha, power):
    out = [0.0] * 7
    for prob, s, a, p in zip(law.probs, law.states, alpha, power):
        for k, v in enumerate(scalar_bounds(s.as_tuple(), a, p)):
            out[k] += prob * v
    return out


def scalar_sum_rates(law: FadingLaw, alpha, power):
    B = scalar_law_bounds(law, alpha, power)
    return [B[0] + B[1], B[2], B[3], B[4], (B[5] + B[1]) / 2, (B[6] + B[0]) / 2]


# -- law generators -----------------------------------------------------------------


def _probs(rng, n):
    w = rng.uniform(0.2, 1.0, n)
    return tuple(w / w.sum())


def _budgets(rng):
    return tuple(rng.uniform(0.5, 3.0, 2))


def _mode(rng, mixed_modes):
    if mixed_modes and rng.random() < 0.5:
        return PowerMode.PER_STATE
    return PowerMode.AVERAGE


def _finish(states, probs, budgets, mode):
    return FadingLaw(tuple(FadingState(*map(float, s)) for s in states), probs, *budgets, mode)


def random_law(rng, n, mixed_modes=False):
    """States with independent log-uniform gains over two decades."""
    states = [10 ** rng.uniform(-1, 1, 4) for _ in range(n)]
    return _finish(states, _probs(rng, n), _budgets(rng), _mode(rng, mixed_modes))


def strong_law(rng, n, mixed_modes=False):
    states = []
    for _ in range(n):
        g11, g22 = 10 ** rng.uniform(-1, 1, 2)
        states.append((g11, g22 * rng.uniform(1.0, 4.0), g11 * rng.uniform(1.0, 4.0), g22))
    return _finish(states, _probs(rng, n), _budgets(rng), _mode(rng, mixed_modes))


def mixed_law(rng, n, rx1_weak=True, mixed_modes=False):
    states = []
    for _ in range(n):
        g11, g22 = 10 ** rng.uniform(-1, 1, 2)
        weak_x, strong_x = rng.uniform(0.0, 0.95), rng.uniform(1.0, 4.0)
        if rx1_weak:
            states.append((g11, g22 * weak_x, g11 * strong_x, g22))
        else:
            states.append((g11, g22 * strong_x, g11 * weak_x, g22))
    return _finish(states, _probs(rng, n), _budgets(rng), _mode(rng, mixed_modes))


def weak_law(rng, n, mixed_modes=False, lo=0.0, hi=0.95):
    states = []
    for _ in range(n):
        g11, g22 = 10 ** rng.uniform(-1, 1, 2)
        states.append((g11, g22 * rng.uniform(lo, hi), g11 * rng.uniform(lo, hi), g22))
    return _finish(states, _probs(rng, n), _budgets(rng), _mode(rng, mixed_modes))


def uw_passing_law(rng, n, mixed_modes=False):
    """Uniformly weak law whose cross gains are small enough for the TIN conditions."""
    probs, budgets, mode = _probs(rng, n), _budgets(rng), _mode(rng, mixed_modes)
    states = []
    for prob in probs:
        scale = 1.0 if mode is PowerMode.PER_STATE else 1.0 / prob
        p1max, p2max = budgets[0] * scale, budgets[1] * scale
        g11, g22 = 10 ** rng.uniform(-1, 1, 2)
        g21 = g11 * rng.uniform(0.01, 0.5) / (1.0 + g22 * p2max)
        g12 = g22 * rng.uniform(0.01, 0.5) / (1.0 + g21 * p1max)
        states.append((g11, g12, g21, g22))
    return _finish(states, probs, budgets, mode)


def hybrid_law(rng, n, mixed_modes=False):
    """At least one strong and one weak state, remaining states arbitrary."""
    assert n >= 2
    strong = strong_law(rng, 1).states[0].as_tuple()
    weak = weak_law(rng, 1).states[0].as_tuple()
    rest = [10 ** rng.uniform(-1, 1, 4) for _ in range(n - 2)]
    return _finish([strong, weak, *rest], _probs(rng, n), _budgets(rng), _mode(rng, mixed_modes))


def evs_candidate(rng, n, mixed_modes=False):
    """Random direct gains with cross gains scaled up by one to three decades."""
    states = []
    for _ in range(n):
        g11, g22 = 10 ** rng.uniform(-1, 1, 2)
        c12, c21 = 10 ** rng.uniform(1, 3, 2)
        states.append((g11, g22 * c12, g11 * c21, g22))
    return _finish(states, _probs(rng, n), _budgets(rng), _mode(rng, mixed_modes))


def feasible_power(rng, law: FadingLaw):
    """A random power policy on the boundary-or-inside of the feasible set."""
    raw = rng.random((law.n, 2))
    if law.mode is PowerMode.PER_STATE:
        return raw * np.array(law.budgets)
    fill = rng.uniform(0.0, 1.0, 2)
    spent = law.prob_array @ raw
    return raw * (fill * np.array(law.budgets) / spent)

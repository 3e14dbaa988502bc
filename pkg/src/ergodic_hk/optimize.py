"""Power and message-split optimization for the HK sum-rate.

The joint objective ``min_m S_m(alpha, P)`` is non-concave, so the joint and
separable optimizers are heuristics: multi-start projected supergradient ascent
followed by an SLSQP polish of the epigraph form. Their reported values are
always re-evaluated at the returned policies, so they are achievable sum-rates
even when they are not global optima. :func:`brute_force_oracle` gives an
independent exhaustive check on small grids.
"""

from __future__ import annotations

import enum
import itertools
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Sequence

import numpy as np
from scipy.optimize import minimize

from .channel import FadingLaw, PowerMode, StateClass, classify_state
from .rates import (
    FEAS_TOL,
    as_policy,
    power_residual,
    state_sum_rates,
    state_sum_rates_and_grad,
    sum_rate_bounds,
    sum_rates_and_grad,
)

__all__ = [
    "OptimizeError",
    "Method",
    "OptimizerOptions",
    "OptimizationResult",
    "WaterfillResult",
    "waterfill",
    "project_power",
    "maximize_joint",
    "maximize_power",
    "maximize_separable",
    "separable_value",
    "brute_force_oracle",
    "ACTIVE_TOL",
]

ACTIVE_TOL = 1e-6
SNAP_TOL = 1e-12
ALL_BOUNDS = (1, 2, 3, 4, 5, 6)


class OptimizeError(ValueError):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


class Method(str, enum.Enum):
    CLOSED_FORM = "ClosedForm"
    SUBGRADIENT = "Subgradient"
    GRID_ORACLE = "GridOracle"


@dataclass(frozen=True)
class OptimizerOptions:
    """Knobs of the ascent optimizers.

    ``step_a`` is the initial step in budget-normalized units (power divided by
    the user's budget; split fractions are already unit scale) and the step at
    iteration ``t`` is ``step_a / (1 + t / step_b)``. A start stops early once
    its best value has not improved by ``tol / 100`` for ``patience`` iterations.
    """

    restarts: int = 8
    iters: int = 2000
    step_a: float = 0.25
    step_b: float = 50.0
    tol: float = ACTIVE_TOL
    seed: int = 0
    polish: bool = True
    inner_grid: int = 21
    patience: int = 200

    def validate(self) -> "OptimizerOptions":
        if self.restarts < 0 or self.iters < 1:
            raise OptimizeError("InvalidOptions", "restarts must be >= 0 and iters >= 1")
        if not (self.step_a > 0 and self.step_b > 0 and self.tol > 0):
            raise OptimizeError("InvalidOptions", "step_a, step_b and tol must be positive")
        if self.patience < 1:
            raise OptimizeError("InvalidOptions", "patience must be >= 1")
        if self.inner_grid < 2:
            raise OptimizeError("InvalidOptions", "inner_grid must be >= 2")
        return self


@dataclass
class OptimizationResult:
    split: np.ndarray
    power: np.ndarray
    value: float
    active_bounds: tuple[int, ...]
    method: Method
    diagnostics: dict[str, Any] = field(default_factory=dict)


@dataclass
class WaterfillResult:
    power: np.ndarray
    water_level: float | None
    user: int
    budget_unused: bool = False


# -- single-user waterfilling ------------------------------------------------


def waterfill(law: FadingLaw, user: int, budget: float | None = None) -> WaterfillResult:
    """Single-user optimal power over the fading states of ``law``.

    Solves ``max sum_s p_s log2(1 + g_s P_s)`` under the law's power constraint
    using the direct gains of ``user``. The average-power case uses the exact
    sorted active-set solution; ``water_level`` is ``None`` in per-state mode
    (full power wherever the gain is positive) and when no power is spent.
    """
    if user not in (1, 2):
        raise OptimizeError("InvalidUser", f"user must be 1 or 2, got {user!r}")
    if budget is None:
        budget = law.budgets[user - 1]
    if not (budget >= 0 and math.isfinite(budget)):
        raise OptimizeError("NegativeBudget", f"budget must be >= 0, got {budget!r}")
    g = law.gains()[:, 0 if user == 1 else 3]
    probs = law.prob_array
    power = np.zeros(law.n)
    with np.errstate(divide="ignore", over="ignore"):
        # a gain so small that 1/g overflows can never sit below the water level
        live = (g > 0) & np.isfinite(1.0 / np.where(g > 0, g, 1.0))

    if budget == 0:
        return WaterfillResult(power, None, user)
    if not live.any():
        return WaterfillResult(power, None, user, budget_unused=True)
    if law.mode is PowerMode.PER_STATE:
        power[live] = budget
        return WaterfillResult(power, None, user)

    idx = np.flatnonzero(live)
    inv = 1.0 / g[idx]
    order = np.argsort(inv, kind="stable")
    inv_sorted, p_sorted = inv[order], probs[idx][order]
    k = len(order)
    for m in range(1, len(order) + 1):
        w = (budget + math.fsum(p_sorted[:m] * inv_sorted[:m])) / math.fsum(p_sorted[:m])
        if m == len(order) or w <= inv_sorted[m]:
            k, level = m, w
            break
    # level - 1/g cancels badly when 1/g dwarfs the budget; use the offsets instead
    mass = math.fsum(p_sorted[:k])
    active = np.zeros(len(order))
    for j in range(k):
        active[j] = (budget + math.fsum(p_sorted[:k] * (inv_sorted[:k] - inv_sorted[j]))) / mass
    power[idx[order]] = np.maximum(0.0, active)
    return WaterfillResult(power, float(level), user)


def waterfill_policy(law: FadingLaw) -> np.ndarray:
    return np.column_stack([waterfill(law, 1).power, waterfill(law, 2).power])


# -- projection onto the feasible power set ----------------------------------


def _project_rows(raw: np.ndarray, probs: np.ndarray, budget: float) -> np.ndarray:
    """Weighted projection of each row of ``raw`` onto ``{x >= 0, probs . x <= budget}``."""
    clipped = np.maximum(raw, 0.0)
    over = clipped @ probs > budget
    if not over.any():
        return clipped
    r = raw[over]
    order = np.argsort(-r, axis=1, kind="stable")
    rs = np.take_along_axis(r, order, axis=1)
    ps = probs[order]
    # P = max(raw - lam, 0); lam from the first prefix whose threshold clears the next entry
    lam = (np.cumsum(ps * rs, axis=1) - budget) / np.cumsum(ps, axis=1)
    nxt = np.concatenate([rs[:, 1:], np.full((len(rs), 1), -np.inf)], axis=1)
    k = np.argmax(lam >= nxt, axis=1)
    shift = lam[np.arange(len(k)), k]
    out = clipped.copy()
    out[over] = np.maximum(r - shift[:, None], 0.0)
    return out


def _project_batch(raw: np.ndarray, law: FadingLaw) -> np.ndarray:
    out = np.empty_like(raw)
    for k, budget in enumerate(law.budgets):
        if law.mode is PowerMode.AVERAGE:
            out[..., k] = _project_rows(raw[..., k].reshape(-1, law.n), law.prob_array, budget).reshape(
                raw.shape[:-1]
            )
        else:
            out[..., k] = np.clip(raw[..., k], 0.0, budget)
    return out


def project_power(raw, law: FadingLaw) -> np.ndarray:
    """Nearest feasible power policy in the probability-weighted Euclidean norm.

    In average-power mode each user's powers are shifted down by a common
    amount and clipped at zero (the weighted norm turns the constraint into a
    capped simplex); in per-state mode entries are clamped to ``[0, budget]``.
    """
    raw = as_policy(raw, law.n, "power")
    return _project_batch(raw[None], law)[0]


# -- starting points -----------------------------------------------------------


def _class_split(law: FadingLaw) -> np.ndarray:
    """Split suggested by each state's class: common-only where interference is strong."""
    rows = []
    for s in law.states:
        c = classify_state(s)
        if c is StateClass.STRONG:
            rows.append((0.0, 0.0))
        elif c is StateClass.WEAK:
            rows.append((1.0, 1.0))
        elif c is StateClass.MIXED_RX1_WEAK_RX2_STRONG:
            # transmitter 1 is strong at receiver 2
            rows.append((0.0, 1.0))
        else:
            rows.append((1.0, 0.0))
    return np.array(rows)


def _uniform_power(law: FadingLaw) -> np.ndarray:
    return np.tile(np.array(law.budgets, dtype=float), (law.n, 1))


def _random_power(law: FadingLaw, rng: np.random.Generator) -> np.ndarray:
    factor = 2.0 if law.mode is PowerMode.AVERAGE else 1.0
    return project_power(rng.random((law.n, 2)) * factor * np.array(law.budgets), law)


def _scales(law: FadingLaw) -> np.ndarray:
    b = np.array(law.budgets, dtype=float)
    return np.where(b > 0, b, 1.0)


def _power_upper(law: FadingLaw) -> np.ndarray:
    b = np.array(law.budgets, dtype=float)
    if law.mode is PowerMode.AVERAGE:
        return b[None, :] / law.prob_array[:, None]
    return np.tile(b, (law.n, 1))


def _rngs(seed: int, count: int):
    return [np.random.Generator(np.random.PCG64(ss)) for ss in np.random.SeedSequence(seed).spawn(count)]


def _dedupe(starts):
    seen, unique = set(), []
    for label, a, p in starts:
        k = (a.tobytes(), p.tobytes())
        if k not in seen:
            seen.add(k)
            unique.append((label, a, p))
    return unique


# -- batched projected supergradient ascent --------------------------------------


def _evaluate(kind, s, probs, bidx, tol):
    """Objective and tie-averaged weights on the active bounds.

    ``s`` holds per-state sum-rates ``(B, n, 6)``. Returns ``f`` ``(B,)`` and
    ``w`` ``(B, n, 6)`` such that the supergradient is ``sum_m w * grad s_m``.
    """
    if kind == "joint":
        sums = np.einsum("bnm,n->bm", s, probs)
        sub = sums[:, bidx]
        f = sub.min(axis=1)
        act = sub <= f[:, None] + tol
        wm = np.zeros_like(sums)
        wm[:, bidx] = act / act.sum(axis=1, keepdims=True)
        return f, wm[:, None, :] * probs[None, :, None]
    fs = s.min(axis=2)
    act = s <= fs[..., None] + tol
    w = act / act.sum(axis=2, keepdims=True) * probs[None, :, None]
    return np.einsum("bn,n->b", fs, probs), w


def _ascend(law, alpha, power, free_alpha, kind, bidx, opts):
    """Run the ascent for a batch of starts ``(B, n, 2)``; return per-start bests."""
    gains, probs = law.gains(), law.prob_array
    scale = _scales(law)
    nb = alpha.shape[0]
    best_f = np.full(nb, -np.inf)
    best_a, best_p = alpha.copy(), power.copy()
    last_gain = np.zeros(nb, dtype=int)
    running = np.ones(nb, dtype=bool)
    iters = np.zeros(nb, dtype=int)
    steps = np.full(nb, opts.step_a)
    for it in range(opts.iters + 1):
        s, d_a, d_p = state_sum_rates_and_grad(gains, alpha, power)
        f, w = _evaluate(kind, s, probs, bidx, opts.tol)
        better = f > best_f
        gained = f > best_f + 0.01 * opts.tol
        best_f = np.where(better, f, best_f)
        best_a[better], best_p[better] = alpha[better], power[better]
        last_gain[gained] = it
        running &= it - last_gain < opts.patience
        if it == opts.iters or not running.any():
            break
        g_p = np.einsum("bnm,bnmx->bnx", w, d_p) * scale
        g_a = np.einsum("bnm,bnmx->bnx", w, d_a) if free_alpha else np.zeros_like(alpha)
        norm = np.sqrt(np.einsum("bnx,bnx->b", g_p, g_p) + np.einsum("bnx,bnx->b", g_a, g_a))
        running &= norm > 0
        move = running[:, None, None]
        step = opts.step_a / (1.0 + it / opts.step_b)
        safe = np.where(norm > 0, norm, 1.0)[:, None, None]
        new_p = _project_batch(power + step * g_p / safe * scale, law)
        power = np.where(move, new_p, power)
        if free_alpha:
            alpha = np.where(move, np.clip(alpha + step * g_a / safe, 0.0, 1.0), alpha)
        iters[running] += 1
        steps[running] = step
    return best_f, best_a, best_p, iters, steps


# -- SLSQP polish of the epigraph forms ------------------------------------------


def _slsqp(fun_obj, z0, bounds, cons):
    try:
        with warnings.catch_warnings():
            # SLSQP clips its line-search iterates to the bounds and says so
            warnings.simplefilter("ignore", RuntimeWarning)
            res = minimize(
                fun_obj[0],
                z0,
                jac=fun_obj[1],
                bounds=bounds,
                constraints=cons,
                method="SLSQP",
                options={"maxiter": 200, "ftol": 1e-12},
            )
    except (ValueError, np.linalg.LinAlgError):
        return None
    return res.x if np.all(np.isfinite(res.x)) else None


def _budget_constraint(law, p_off, nz, scale):
    probs = law.prob_array
    budget = np.array(law.budgets)
    a_mat = np.zeros((2, nz))
    for k in range(2):
        a_mat[k, p_off + k:p_off + 2 * law.n:2] = probs * scale[k]
    return {"type": "ineq", "fun": lambda z: budget - a_mat @ z, "jac": lambda z: -a_mat}


def _polish_joint(law, alpha, power, free_alpha, bidx):
    """Maximize ``t`` subject to ``S_m >= t`` (m in the bound subset), locally."""
    n, nv = law.n, 2 * law.n
    gains, probs = law.gains(), law.prob_array
    scale = _scales(law)
    p_off = nv if free_alpha else 0
    nz = p_off + nv + 1

    def unpack(z):
        a = z[:nv].reshape(n, 2) if free_alpha else alpha
        return a, z[p_off:p_off + nv].reshape(n, 2) * scale

    def cons_fun(z):
        a, p = unpack(z)
        s, _, _ = sum_rates_and_grad(gains, probs, a, p)
        return s[bidx] - z[-1]

    def cons_jac(z):
        a, p = unpack(z)
        _, da, dp = sum_rates_and_grad(gains, probs, a, p)
        blocks = [dp[bidx].reshape(len(bidx), -1) * np.tile(scale, n), -np.ones((len(bidx), 1))]
        if free_alpha:
            blocks.insert(0, da[bidx].reshape(len(bidx), -1))
        return np.hstack(blocks)

    cons = [{"type": "ineq", "fun": cons_fun, "jac": cons_jac}]
    if law.mode is PowerMode.AVERAGE:
        cons.append(_budget_constraint(law, p_off, nz, scale))
    bnds = [(0.0, 1.0)] * (nv if free_alpha else 0)
    bnds += [(0.0, float(u)) for u in (_power_upper(law) / scale).ravel()] + [(None, None)]
    s0, _, _ = sum_rates_and_grad(gains, probs, alpha, power)
    parts = [alpha.ravel()] if free_alpha else []
    z0 = np.concatenate(parts + [(power / scale).ravel(), [float(s0[bidx].min())]])
    obj = np.zeros(nz)
    obj[-1] = -1.0
    z = _slsqp((lambda z: -z[-1], lambda z: obj), z0, bnds, cons)
    if z is None:
        return alpha, power
    a, p = unpack(z)
    return np.clip(a, 0.0, 1.0), project_power(p, law)


def _polish_separable(law, alpha, power):
    """Maximize ``sum_s p_s t_s`` subject to ``s_m(alpha_s, P_s) >= t_s``, locally."""
    n, nv = law.n, 2 * law.n
    gains, probs = law.gains(), law.prob_array
    scale = _scales(law)
    nz = 2 * nv + n

    def unpack(z):
        return z[:nv].reshape(n, 2), z[nv:2 * nv].reshape(n, 2) * scale, z[2 * nv:]

    def cons_fun(z):
        a, p, t = unpack(z)
        return (state_sum_rates(gains, a, p) - t[:, None]).ravel()

    def cons_jac(z):
        a, p, _ = unpack(z)
        _, da, dp = state_sum_rates_and_grad(gains, a, p)
        jac = np.zeros((6 * n, nz))
        for s in range(n):
            rows = slice(6 * s, 6 * s + 6)
            jac[rows, 2 * s:2 * s + 2] = da[s]
            jac[rows, nv + 2 * s:nv + 2 * s + 2] = dp[s] * scale
            jac[rows, 2 * nv + s] = -1.0
        return jac

    cons = [{"type": "ineq", "fun": cons_fun, "jac": cons_jac}]
    if law.mode is PowerMode.AVERAGE:
        cons.append(_budget_constraint(law, nv, nz, scale))
    upper = _power_upper(law) / scale
    bnds = [(0.0, 1.0)] * nv + [(0.0, float(u)) for u in upper.ravel()] + [(None, None)] * n
    t0 = state_sum_rates(gains, alpha, power).min(axis=-1)
    z0 = np.concatenate([alpha.ravel(), (power / scale).ravel(), t0])
    obj = np.concatenate([np.zeros(2 * nv), -probs])
    z = _slsqp((lambda z: float(obj @ z), lambda z: obj), z0, bnds, cons)
    if z is None:
        return alpha, power
    a, p, _ = unpack(z)
    return np.clip(a, 0.0, 1.0), project_power(p, law)


# -- drivers ---------------------------------------------------------------------

CHUNK = 8


@dataclass(frozen=True)
class _Chunk:
    law: FadingLaw
    labels: tuple[str, ...]
    alpha: np.ndarray
    power: np.ndarray
    free_alpha: bool
    kind: str
    bounds: tuple[int, ...]
    opts: OptimizerOptions


def _key(value, alpha, power):
    # larger value first; lexicographically smallest policy on exact ties
    return (-value, tuple(alpha.ravel()), tuple(power.ravel()))


def _run_chunk(ch: _Chunk):
    law, opts = ch.law, ch.opts
    bidx = np.array(ch.bounds) - 1
    f, a, p, iters, steps = _ascend(law, ch.alpha, ch.power, ch.free_alpha, ch.kind, bidx, opts)
    out = []
    for i, label in enumerate(ch.labels):
        cand = [(float(f[i]), a[i], p[i])]
        if ch.kind == "joint":
            if opts.polish:
                cand.append(_polished_joint(law, a[i], p[i], ch.free_alpha, bidx))
        else:
            cand.append(_inner_refine(law, a[i], p[i], opts))
            if opts.polish:
                a2, p2 = _polish_separable(law, *cand[-1][1:])
                cand.append((separable_value(law, a2, p2), a2, p2))
                cand.append(_inner_refine(law, a2, p2, opts))
        v, ba, bp = min(cand, key=lambda c: _key(*c))
        out.append((v, ba, bp, int(iters[i]), float(steps[i]), label))
    return out


def _polished_joint(law, a, p, free_alpha, bidx):
    a2, p2 = _polish_joint(law, a, p, free_alpha, bidx)
    s, _, _ = sum_rates_and_grad(law.gains(), law.prob_array, a2, p2)
    return float(s[bidx].min()), a2, p2


def _run(law, starts, free_alpha, kind, bounds, opts, jobs):
    chunks = [
        _Chunk(
            law,
            tuple(lbl for lbl, _, _ in starts[i:i + CHUNK]),
            np.array([a for _, a, _ in starts[i:i + CHUNK]]),
            np.array([p for _, _, p in starts[i:i + CHUNK]]),
            free_alpha,
            kind,
            tuple(bounds),
            opts,
        )
        for i in range(0, len(starts), CHUNK)
    ]
    if jobs <= 1 or len(chunks) == 1:
        parts = [_run_chunk(c) for c in chunks]
    else:
        with ProcessPoolExecutor(max_workers=min(jobs, len(chunks))) as pool:
            parts = list(pool.map(_run_chunk, chunks))
    results = [r for part in parts for r in part]
    return results, min(results, key=lambda r: _key(r[0], r[1], r[2]))


def _check_law(law: FadingLaw):
    if law.n == 0 or any(p <= 0 for p in law.probs):
        raise OptimizeError("InfeasibleLaw", "law has no states or nonpositive probabilities")
    if min(law.budgets) < 0:
        raise OptimizeError("InfeasibleLaw", "negative power budget")


def _diagnostics(law, results, best):
    return {
        "iterations": int(sum(r[3] for r in results)),
        "restarts": len(results),
        "final_step": float(best[4]),
        "feasibility_residual": max(0.0, power_residual(law, best[2])),
        "best_start": best[5],
    }


def _snap(alpha, power):
    """Round rounding debris (|x| ~ 1e-16) at the box edges to the exact edge."""
    alpha = np.where(alpha < SNAP_TOL, 0.0, np.where(alpha > 1.0 - SNAP_TOL, 1.0, alpha))
    return alpha, np.where(power < SNAP_TOL, 0.0, power)


def _maximize(law, opts, free_alpha, fixed_split, bounds, initial, jobs):
    opts = (opts or OptimizerOptions()).validate()
    _check_law(law)
    wf, uni = waterfill_policy(law), _uniform_power(law)
    if free_alpha:
        splits = [("class", _class_split(law)), ("zero", np.zeros((law.n, 2))), ("one", np.ones((law.n, 2)))]
    else:
        splits = [("fixed", fixed_split)]
    starts = [
        (f"{sn}/{pn}", a, p)
        for (sn, a), (pn, p) in itertools.product(splits, [("wf", wf), ("uniform", uni)])
    ]
    for i, (a, p) in enumerate(initial):
        a = np.clip(as_policy(a, law.n, "split"), 0.0, 1.0) if free_alpha else fixed_split
        starts.append((f"seed{i}", a, project_power(p, law)))
    for i, rng in enumerate(_rngs(opts.seed, opts.restarts)):
        a = rng.random((law.n, 2)) if free_alpha else fixed_split
        starts.append((f"random{i}", a, _random_power(law, rng)))
    results, best = _run(law, _dedupe(starts), free_alpha, "joint", bounds, opts, jobs)
    alpha, power = _snap(best[1], best[2])
    if not free_alpha:
        alpha = np.array(fixed_split, dtype=float)
    s = sum_rate_bounds(law, alpha, power).as_array()
    value = float(min(s[m - 1] for m in bounds))
    diag = _diagnostics(law, results, best)
    diag.update(bounds=list(bounds), sum_rates=[float(x) for x in s])
    return OptimizationResult(
        split=alpha,
        power=power,
        value=value,
        active_bounds=tuple(m for m in bounds if s[m - 1] - value <= opts.tol),
        method=Method.SUBGRADIENT,
        diagnostics=diag,
    )


def maximize_joint(
    law: FadingLaw,
    opts: OptimizerOptions | None = None,
    initial: Iterable[tuple[Any, Any]] = (),
    jobs: int = 1,
) -> OptimizationResult:
    """Best found ``max_{alpha, P} min_m S_m(alpha, P)`` with joint coding across states.

    Starts: the class-suggested split, all-common and all-private splits, each
    with waterfilling and uniform power; then ``opts.restarts`` random points.
    ``initial`` adds extra ``(split, power)`` starts, so the result is never
    worse than any of them.
    """
    return _maximize(law, opts, True, None, ALL_BOUNDS, initial, jobs)


def maximize_power(
    law: FadingLaw,
    split,
    bounds: Sequence[int] = ALL_BOUNDS,
    opts: OptimizerOptions | None = None,
    initial: Iterable[Any] = (),
    jobs: int = 1,
) -> OptimizationResult:
    """Maximize ``min_{m in bounds} S_m`` over power only, with the split held fixed."""
    split = as_policy(split, law.n, "split")
    bounds = tuple(sorted(set(int(b) for b in bounds)))
    if not bounds or not set(bounds) <= set(ALL_BOUNDS):
        raise OptimizeError("InvalidOptions", f"bounds must be a subset of 1..6, got {bounds}")
    return _maximize(law, opts, False, split, bounds, [(split, p) for p in initial], jobs)


# -- separable coding --------------------------------------------------------------


def _alpha_grid(g: int) -> np.ndarray:
    t = np.linspace(0.0, 1.0, g)
    return np.array(list(itertools.product(t, t)))


def _inner_best(gains, power, grid):
    """Per state, the grid split maximizing that state's HK sum-rate at ``power``."""
    vals = state_sum_rates(gains[:, None, :], grid[None, :, :], power[:, None, :]).min(axis=-1)
    k = np.argmax(vals, axis=1)
    return grid[k], vals[np.arange(len(k)), k]


def _refine_alpha(gains, power, alpha, value, step, rounds=12):
    """Pattern search on each state's split from a starting point."""
    moves = np.array([(dx, dy) for dx in (-1, 0, 1) for dy in (-1, 0, 1) if dx or dy], dtype=float)
    alpha, value = alpha.copy(), value.copy()
    rows = np.arange(len(alpha))
    for _ in range(rounds):
        cand = np.clip(alpha[:, None, :] + step * moves[None], 0.0, 1.0)
        vals = state_sum_rates(gains[:, None, :], cand, power[:, None, :]).min(axis=-1)
        k = np.argmax(vals, axis=1)
        top = vals[rows, k]
        better = top > value
        alpha[better] = cand[rows, k][better]
        value[better] = top[better]
        step /= 2.0
    return alpha, value


def _inner_refine(law, alpha, power, opts):
    """Per-state split maximization at fixed power: grid, pattern search, keep the better."""
    gains = law.gains()
    grid = _alpha_grid(opts.inner_grid)
    current = state_sum_rates(gains, alpha, power).min(axis=-1)
    ga, gv = _inner_best(gains, power, grid)
    take = gv > current
    a0 = np.where(take[:, None], ga, alpha)
    v0 = np.where(take, gv, current)
    a1, _ = _refine_alpha(gains, power, a0, v0, 1.0 / (opts.inner_grid - 1))
    return separable_value(law, a1, power), a1, power


def separable_value(law: FadingLaw, split, power) -> float:
    """``sum_s p_s min_m s_m(alpha_s, P_s)``: per-state coding at the given policies."""
    a = as_policy(split, law.n, "split")
    p = as_policy(power, law.n, "power")
    per = state_sum_rates(law.gains(), a, p).min(axis=-1)
    acc = 0.0
    for prob, v in zip(law.probs, per):
        acc += prob * float(v)
    return acc


def maximize_separable(
    law: FadingLaw,
    opts: OptimizerOptions | None = None,
    jobs: int = 1,
) -> OptimizationResult:
    """Best found ``max_P sum_s p_s max_{alpha_s} min_m s_m(alpha_s, P_s)``.

    Each state is coded on its own, so the states are coupled only through the
    power constraint. Power and per-state splits ascend together; at the end each
    state's split is re-maximized on a grid with local refinement.
    """
    opts = (opts or OptimizerOptions()).validate()
    _check_law(law)
    gains = law.gains()
    grid = _alpha_grid(opts.inner_grid)
    powers = [("wf", waterfill_policy(law)), ("uniform", _uniform_power(law))]
    for i, rng in enumerate(_rngs(opts.seed, opts.restarts)):
        powers.append((f"random{i}", _random_power(law, rng)))
    starts = [(label, _inner_best(gains, p, grid)[0], p) for label, p in powers]
    results, best = _run(law, _dedupe(starts), True, "separable", ALL_BOUNDS, opts, jobs)
    alpha, power = _snap(best[1], best[2])
    per = state_sum_rates(gains, alpha, power)
    diag = _diagnostics(law, results, best)
    diag.update(
        per_state_values=[float(v) for v in per.min(axis=-1)],
        per_state_active=[[m + 1 for m in range(6) if row[m] - row.min() <= opts.tol] for row in per],
    )
    return OptimizationResult(
        split=alpha,
        power=power,
        value=separable_value(law, alpha, power),
        active_bounds=(),
        method=Method.SUBGRADIENT,
        diagnostics=diag,
    )


# -- exhaustive grid oracle ---------------------------------------------------

DEFAULT_GRID_CAP = 10**7


def _user_power_grid(law: FadingLaw, user: int, g: int) -> np.ndarray:
    """All per-state power vectors of one user on the oracle grid, shape ``(k, n)``."""
    budget = law.budgets[user]
    n = law.n
    if g == 1 or budget == 0:
        return np.zeros((1, n))
    if law.mode is PowerMode.PER_STATE:
        levels = budget * np.arange(g) / (g - 1)
        return np.array(list(itertools.product(levels, repeat=n)))
    rows = [
        js
        for js in itertools.product(range(g), repeat=n)
        if sum(js) <= g - 1
    ]
    js = np.array(rows, dtype=float)
    return budget * js / (g - 1) / law.prob_array[None, :]


def _pareto(vectors: np.ndarray) -> np.ndarray:
    """Indices (ascending) of rows not dominated by another row; ties keep the first.

    Rows are scanned by decreasing sum. A row can only be dominated by one with
    a sum at least as large, so comparing against the rows kept so far suffices.
    """
    order = np.argsort(-vectors.sum(axis=1), kind="stable")
    kept: list[int] = []
    for i in order:
        if kept and np.any(np.all(vectors[kept] >= vectors[i], axis=1)):
            continue
        kept.append(int(i))
    return np.sort(np.array(kept, dtype=int))


def brute_force_oracle(
    law: FadingLaw,
    alpha_grid: int = 5,
    power_grid: int | None = None,
    split=None,
    bounds: Sequence[int] = ALL_BOUNDS,
    cap: int = DEFAULT_GRID_CAP,
) -> OptimizationResult:
    """Exhaustive search of ``min_{m in bounds} S_m`` over a product grid.

    Each user's split takes values ``0, 1/(G-1), ..., 1`` per state (or is held at
    ``split``), and each user's per-state power takes values
    ``budget * j / (G_p - 1) / prob(s)`` restricted to the average-power
    constraint (``budget * j / (G_p - 1)`` in per-state mode), which includes
    the policies putting the whole budget in one state.

    The maximum is exact over the grid. Split vectors dominated componentwise
    (for the sum-rate vector of a state at a given power pair) are skipped,
    which cannot change the maximum.
    """
    if power_grid is None:
        power_grid = alpha_grid
    if alpha_grid < 1 or power_grid < 1:
        raise OptimizeError("InvalidOptions", "grid sizes must be >= 1")
    _check_law(law)
    n = law.n
    bidx = np.array(sorted(set(bounds))) - 1
    if split is None:
        levels = np.linspace(0.0, 1.0, alpha_grid) if alpha_grid > 1 else np.zeros(1)
        a_cands = np.array(list(itertools.product(levels, levels)))
        a_per_state = [a_cands] * n
    else:
        split = as_policy(split, n, "split")
        a_per_state = [split[s][None, :] for s in range(n)]
    pw1 = _user_power_grid(law, 0, power_grid)
    pw2 = _user_power_grid(law, 1, power_grid)
    total = math.prod(len(a) for a in a_per_state) * len(pw1) * len(pw2)
    if total > cap:
        raise OptimizeError("GridTooLarge", f"{total} grid points exceed the cap of {cap}")

    gains = law.gains()
    probs = law.prob_array
    # per-state tables keyed by (state, P1, P2) -> (pareto indices, weighted vectors)
    cache: dict[tuple[int, float, float], tuple[np.ndarray, np.ndarray]] = {}

    def table(s, p1, p2):
        key = (s, p1, p2)
        if key not in cache:
            a = a_per_state[s]
            vec = state_sum_rates(gains[s], a, np.array([p1, p2]))[:, bidx] * probs[s]
            keep = _pareto(vec) if len(a) > 1 else np.arange(1)
            cache[key] = (keep, vec[keep])
        return cache[key]

    best_val, best_key, best = -math.inf, None, None
    evaluated = 0

    def consider(vals, shape, decode):
        nonlocal best_val, best_key, best
        top = float(vals.max())
        if top < best_val - 1e-12:
            return
        for flat in np.flatnonzero(vals >= top - 1e-12):
            alpha, power = decode(np.unravel_index(flat, shape))
            key = (tuple(alpha.ravel()), tuple(power.ravel()))
            v = float(vals[flat])
            if v > best_val + 1e-12:
                best_val, best_key, best = v, key, (alpha, power)
            elif v >= best_val - 1e-12 and key < best_key:
                best_val, best_key, best = max(best_val, v), key, (alpha, power)

    def combine(vecs):
        acc = np.zeros((1, len(bidx)))
        for vec in vecs:
            acc = (acc[:, None, :] + vec[None, :, :]).reshape(-1, len(bidx))
        return acc.min(axis=1)

    if law.mode is PowerMode.PER_STATE:
        # states decouple: prune each state's (split, P1, P2) choices jointly
        lv1, lv2 = np.unique(pw1[:, 0]), np.unique(pw2[:, 0])
        choices = []
        for st in range(n):
            a = a_per_state[st]
            rows = np.array(
                [(*ai, q1, q2) for ai in a for q1 in lv1 for q2 in lv2], dtype=float
            )
            vec = state_sum_rates(gains[st], rows[:, :2], rows[:, 2:])[:, bidx] * probs[st]
            keep = _pareto(vec)
            choices.append((rows[keep], vec[keep]))
        vals = combine([v for _, v in choices])
        evaluated = len(vals)

        def decode(picks):
            rows = np.array([choices[st][0][picks[st]] for st in range(n)])
            return rows[:, :2], rows[:, 2:]

        consider(vals, [len(c[0]) for c in choices], decode)
        pw1 = pw2 = np.zeros((0, n))  # skip the coupled search below

    for i1, i2 in itertools.product(range(len(pw1)), range(len(pw2))):
        p1v, p2v = pw1[i1], pw2[i2]
        tabs = [table(s, float(p1v[s]), float(p2v[s])) for s in range(n)]
        vals = combine([vec for _, vec in tabs])
        evaluated += len(vals)

        def decode(picks, tabs=tabs, p1v=p1v, p2v=p2v):
            alpha = np.array([a_per_state[st][tabs[st][0][picks[st]]] for st in range(n)])
            return alpha, np.column_stack([p1v, p2v])

        consider(vals, [len(k) for k, _ in tabs], decode)
    alpha, power = best
    s = sum_rate_bounds(law, alpha, power).as_array()
    value = float(np.min(s[bidx]))
    active = tuple(int(m) + 1 for m in bidx if s[m] - value <= ACTIVE_TOL)
    return OptimizationResult(
        split=alpha,
        power=power,
        value=value,
        active_bounds=active,
        method=Method.GRID_ORACLE,
        diagnostics={
            "grid_points": int(total),
            "evaluated": int(evaluated),
            "alpha_grid": alpha_grid if split is None else None,
            "power_grid": power_grid,
            "feasibility_residual": max(0.0, power_residual(law, power)),
            "sum_rates": [float(x) for x in s],
        },
    )


def with_seed(opts: OptimizerOptions, seed: int) -> OptimizerOptions:
    return replace(opts, seed=seed)

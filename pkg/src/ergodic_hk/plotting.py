"""Figures written next to the CSV tables of a CLI run."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed metadata keeps repeated renders byte-stable
_PNG_META = {"Software": None}


def _style(ax):
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    ax.grid(True, alpha=0.3, linewidth=0.6)


def plot_sweep(rows: Sequence[dict], param: str, path: Path) -> Path:
    """Joint and separable sum-rates against the sweep multiplier."""
    k = np.array([r["kappa"] for r in rows])
    joint = np.array([r["joint_value"] for r in rows])
    sep = np.array([r["separable_value"] for r in rows])
    fig, ax = plt.subplots(figsize=(6.0, 3.8))
    ax.plot(k, joint, "o-", label="joint coding", color="C0")
    ax.plot(k, sep, "s--", label="separable coding", color="C1", markersize=4)
    evs = np.array([bool(r["evs"]) for r in rows])
    if evs.any():
        ax.scatter(k[evs], joint[evs], s=80, facecolors="none", edgecolors="k", label="EVS")
    ax.set_xlabel(f"{param} multiplier")
    ax.set_ylabel("sum-rate [bits/use]")
    _style(ax)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)
    return path


def plot_policy(probs, classes, policies: dict[str, tuple[np.ndarray, np.ndarray]], path: Path) -> Path:
    """Per-state powers and private fractions of one or more optimized policies."""
    n = len(probs)
    x = np.arange(n)
    fig, (ax_p, ax_a) = plt.subplots(1, 2, figsize=(8.0, 3.6))
    width = 0.8 / (2 * max(1, len(policies)))
    for i, (name, (split, power)) in enumerate(policies.items()):
        off = (2 * i) * width - 0.4 + width / 2
        ax_p.bar(x + off, power[:, 0], width, label=f"{name} P1", color=f"C{2 * i}")
        ax_p.bar(x + off + width, power[:, 1], width, label=f"{name} P2", color=f"C{2 * i + 1}")
        ax_a.plot(x, split[:, 0], "o", color=f"C{2 * i}", label=f"{name} a1")
        ax_a.plot(x, split[:, 1], "x", color=f"C{2 * i + 1}", label=f"{name} a2")
    labels = [f"{s}\n{c}\np={p:.2g}" for s, (c, p) in enumerate(zip(classes, probs))]
    for ax in (ax_p, ax_a):
        ax.set_xticks(x)
        ax.set_xticklabels(labels, fontsize=7)
        _style(ax)
    ax_p.set_ylabel("power")
    ax_a.set_ylabel("private fraction")
    ax_a.set_ylim(-0.05, 1.05)
    ax_p.legend(frameon=False, fontsize=7)
    ax_a.legend(frameon=False, fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)
    return path

"""Command-line experiment runner.

Every run writes ``report.json`` (versioned schema, full resolved config, all
bound values at the reported optima), ``law.json`` (the law actually used),
CSV tables for plotting and, unless ``--no-plot`` is given, PNG figures.
Identical configs give byte-identical reports apart from the ``runtime``
section, whatever ``--jobs`` is.

Exit codes::

    0  success
    1  unexpected internal error
    2  command-line usage error
    3  law file could not be parsed
    4  law failed validation
    5  invalid optimizer options
    6  law outside the sub-class a task requires
    7  output could not be written
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .channel import (
    FadingLaw,
    FadingState,
    ParseError,
    UnsupportedSpec,
    ValidationError,
    classify_channel,
    dumps_law,
    law_to_dict,
    loads_law,
    sample_law,
    validate_law,
)
from .optimize import (
    OptimizationResult,
    OptimizeError,
    OptimizerOptions,
    brute_force_oracle,
    maximize_joint,
    maximize_separable,
)
from .rates import rate_bounds, sum_rate_bounds
from .schemes import (
    SchemeError,
    check_evs,
    compare_joint_vs_separable,
    subclass_report,
)

SCHEMA_VERSION = 1
TASKS = ("classify", "optimize-joint", "optimize-separable", "compare", "subclass-report", "sweep")
SWEEP_PARAMS = ("cross", "direct", "g11", "g12", "g21", "g22", "budget1", "budget2", "budgets")

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_VALIDATION = 4
EXIT_OPTIONS = 5
EXIT_SUBCLASS = 6
EXIT_IO = 7


class UsageError(Exception):
    pass


def parse_law_file(path: str | os.PathLike) -> FadingLaw:
    """Read a law file; raises :class:`ParseError` or :class:`ValidationError`."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror}") from None
    try:
        return loads_law(text)
    except ParseError as exc:
        raise ParseError(f"{path}: {exc}") from None


@dataclass
class ExperimentConfig:
    task: str
    law_file: str | None = None
    dist: str | None = None
    n: int | None = None
    gains: tuple[float, float, float, float] | None = None
    sigma_db: float | None = None
    seed: int = 0
    budgets: tuple[float, float] | None = None
    mode: str | None = None
    options: OptimizerOptions = field(default_factory=OptimizerOptions)
    oracle_grid: int | None = None
    sweep: str | None = None
    sweep_values: tuple[float, ...] = ()
    out: str = "."
    jobs: int = 1
    plot: bool = True

    def validate(self) -> "ExperimentConfig":
        if self.task not in TASKS:
            raise UsageError(f"unknown task {self.task!r}")
        if (self.law_file is None) == (self.dist is None):
            raise UsageError("give exactly one law source: --law FILE or --dist")
        if self.dist is not None:
            if self.n is None:
                raise UsageError("--dist needs --n")
            if self.gains is None:
                raise UsageError("--dist needs --gains g11,g12,g21,g22")
        if self.task == "sweep":
            if self.sweep is None or not self.sweep_values:
                raise UsageError("task sweep needs --sweep PARAM and --sweep-values")
        elif self.sweep is not None:
            raise UsageError("--sweep is only valid with --task sweep")
        if self.oracle_grid is not None and self.oracle_grid < 1:
            raise OptimizeError("InvalidOptions", "--oracle-grid must be >= 1")
        if self.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        self.options.validate()
        return self

    def resolved(self) -> dict[str, Any]:
        """Config as recorded in the report: everything that affects the numbers."""
        doc = {
            "task": self.task,
            "law_source": (
                {"file": self.law_file}
                if self.law_file
                else {
                    "dist": self.dist,
                    "n": self.n,
                    "gains": list(self.gains),
                    "sigma_db": self.sigma_db,
                    "seed": self.seed,
                    "generator": "PCG64",
                }
            ),
            "budgets": list(self.budgets) if self.budgets else None,
            "mode": self.mode,
            "optimizer": asdict(self.options),
            "oracle_grid": self.oracle_grid,
        }
        if self.task == "sweep":
            doc["sweep"] = {"param": self.sweep, "values": list(self.sweep_values)}
        return doc


def load_law(cfg: ExperimentConfig) -> FadingLaw:
    if cfg.law_file:
        law = parse_law_file(cfg.law_file)
        if cfg.budgets is not None or cfg.mode is not None:
            law = validate_law(FadingLaw(
                law.states,
                law.probs,
                *(cfg.budgets or law.budgets),
                cfg.mode or law.mode,
            ))
        return law
    spec: dict[str, Any] = {"kind": cfg.dist, "mean": cfg.gains}
    if cfg.sigma_db is not None:
        spec["sigma_db"] = cfg.sigma_db
    return sample_law(spec, cfg.n, cfg.seed, cfg.budgets or (1.0, 1.0), cfg.mode or "average")


# -- serialization helpers ------------------------------------------------------


def _floats(a) -> Any:
    return np.asarray(a, dtype=float).tolist()


def result_to_dict(law: FadingLaw, res: OptimizationResult) -> dict[str, Any]:
    doc = {
        "method": res.method.value,
        "value": float(res.value),
        "active_bounds": list(res.active_bounds),
        "split": _floats(res.split),
        "power": _floats(res.power),
        "B": _floats(rate_bounds(law, res.split, res.power).as_array()),
        "S": _floats(sum_rate_bounds(law, res.split, res.power).as_array()),
        "diagnostics": {k: v for k, v in res.diagnostics.items() if k not in ("sum_rates",)},
    }
    return doc


def _channel_doc(law: FadingLaw) -> dict[str, Any]:
    cls = classify_channel(law)
    evs, witness = check_evs(law)
    return {
        "structural": cls.structural.value,
        "orientation": cls.orientation.value if cls.orientation else None,
        "evs": evs,
        "state_classes": [c.value for c in cls.state_classes],
        "evs_witness": {
            "S_at_zero_split_waterfill": list(witness.sum_rates),
            "reduced": witness.reduced,
            "full": witness.full,
            "margin": witness.margin,
            "waterfill_power": _floats(witness.power),
        },
    }


def _subclass_doc(law: FadingLaw, rep) -> dict[str, Any]:
    doc = _channel_doc(law)
    doc.update(
        scheme=rep.scheme,
        capacity_certified=rep.capacity_certified,
        uw_conditions=rep.uw_conditions,
        uw_margins=(
            None
            if rep.uw_margins is None
            else {"c1": list(rep.uw_margins.c1), "c2": list(rep.uw_margins.c2)}
        ),
        recommended_split=_floats(rep.recommended_split),
        sum_rate=result_to_dict(law, rep.sum_rate),
        notes=rep.notes,
    )
    return doc


# -- tasks ---------------------------------------------------------------------------


def _scaled_law(law: FadingLaw, param: str, kappa: float) -> FadingLaw:
    if param.startswith("budget"):
        b1, b2 = law.budgets
        if param in ("budget1", "budgets"):
            b1 *= kappa
        if param in ("budget2", "budgets"):
            b2 *= kappa
        return law.with_budgets(b1, b2)
    cols = {"cross": (1, 2), "direct": (0, 3), "g11": (0,), "g12": (1,), "g21": (2,), "g22": (3,)}[param]
    states = []
    for s in law.states:
        g = list(s.as_tuple())
        for c in cols:
            g[c] *= kappa
        states.append(FadingState(*g))
    return FadingLaw(tuple(states), law.probs, law.budget1, law.budget2, law.mode)


def _sweep_point(args) -> dict[str, Any]:
    law, param, kappa, opts = args
    scaled = _scaled_law(law, param, kappa)
    cmp = compare_joint_vs_separable(scaled, opts)
    return {
        "kappa": kappa,
        "class": cmp.channel.structural.value,
        "evs": cmp.evs,
        "joint_value": cmp.joint.value,
        "separable_value": cmp.separable.value,
        "gap": cmp.gap,
    }


def _fmt(x: Any) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.12g}"
    return str(x)


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> Path:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(x) for x in r])
    return path


def _state_rows(law: FadingLaw, policies: dict[str, OptimizationResult]):
    classes = classify_channel(law).state_classes
    header = ["state", "prob", "g11", "g12", "g21", "g22", "class"]
    for name in policies:
        header += [f"{name}_alpha1", f"{name}_alpha2", f"{name}_P1", f"{name}_P2"]
    rows = []
    for i, (s, p, c) in enumerate(zip(law.states, law.probs, classes)):
        row = [i, p, *s.as_tuple(), c.value]
        for res in policies.values():
            row += [res.split[i, 0], res.split[i, 1], res.power[i, 0], res.power[i, 1]]
        rows.append(row)
    return header, rows


def run(cfg: ExperimentConfig) -> dict[str, Any]:
    """Execute one configured experiment and write its files; returns the report."""
    cfg.validate()
    t0 = time.perf_counter()
    law = load_law(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    opts = cfg.options
    results: dict[str, Any] = {}
    files: list[str] = ["report.json", "law.json"]
    policies: dict[str, OptimizationResult] = {}

    if cfg.task == "classify":
        results = _channel_doc(law)
    elif cfg.task == "optimize-joint":
        res = maximize_joint(law, opts, jobs=cfg.jobs)
        policies["joint"] = res
        results = {"joint": result_to_dict(law, res)}
        if cfg.oracle_grid:
            orc = brute_force_oracle(law, cfg.oracle_grid)
            results["oracle"] = result_to_dict(law, orc)
            results["oracle_gap"] = res.value - orc.value
    elif cfg.task == "optimize-separable":
        res = maximize_separable(law, opts, jobs=cfg.jobs)
        policies["separable"] = res
        results = {"separable": result_to_dict(law, res)}
    elif cfg.task == "compare":
        cmp = compare_joint_vs_separable(law, opts, jobs=cfg.jobs)
        policies = {"joint": cmp.joint, "separable": cmp.separable}
        results = _channel_doc(law)
        results.update(
            joint=result_to_dict(law, cmp.joint),
            separable=result_to_dict(law, cmp.separable),
            gap=cmp.gap,
            split_structure=cmp.split_structure(),
        )
    elif cfg.task == "subclass-report":
        rep = subclass_report(law, opts, jobs=cfg.jobs)
        policies["subclass"] = rep.sum_rate
        results = _subclass_doc(law, rep)
    else:
        tasks = [(law, cfg.sweep, float(k), opts) for k in cfg.sweep_values]
        if cfg.jobs > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=min(cfg.jobs, len(tasks))) as pool:
                rows = list(pool.map(_sweep_point, tasks))
        else:
            rows = [_sweep_point(t) for t in tasks]
        results = {"param": cfg.sweep, "rows": rows}
        header = ["kappa", "class", "evs", "joint_value", "separable_value", "gap"]
        write_csv(out / "sweep.csv", header, [[r[h] for h in header] for r in rows])
        files.append("sweep.csv")
        if cfg.plot:
            from .plotting import plot_sweep

            plot_sweep(rows, cfg.sweep, out / "sweep.png")
            files.append("sweep.png")

    if cfg.task != "sweep":
        header, rows = _state_rows(law, policies)
        write_csv(out / "states.csv", header, rows)
        files.append("states.csv")
        if cfg.plot and policies:
            from .plotting import plot_policy

            plot_policy(
                law.probs,
                [c.value for c in classify_channel(law).state_classes],
                {k: (v.split, v.power) for k, v in policies.items()},
                out / "policy.png",
            )
            files.append("policy.png")

    report = {
        "schema_version": SCHEMA_VERSION,
        "library": {"name": "ergodic-hk", "version": __version__},
        "config": cfg.resolved(),
        "law": law_to_dict(law),
        "results": results,
        "files": sorted(files),
        "runtime": {"wall_seconds": time.perf_counter() - t0, "jobs": cfg.jobs},
    }
    (out / "law.json").write_text(dumps_law(law), encoding="utf-8")
    (out / "report.json").write_text(dump_report(report), encoding="utf-8")
    return report


def dump_report(report: dict[str, Any]) -> str:
    return json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n"


# -- argument parsing -------------------------------------------------------------------


def _csv_floats(text: str, count: int | None = None) -> tuple[float, ...]:
    try:
        vals = tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if count is not None and len(vals) != count:
        raise argparse.ArgumentTypeError(f"expected {count} numbers, got {len(vals)}")
    return vals


def _sweep_values(text: str) -> tuple[float, ...]:
    """``a,b,c`` lists values; ``start:stop:count`` is an inclusive linear range."""
    if ":" in text:
        try:
            start, stop, count = text.split(":")
            return tuple(float(x) for x in np.linspace(float(start), float(stop), int(count)))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad range {text!r}; use start:stop:count")
    return _csv_floats(text)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(
        prog="ergodic-hk",
        description="Han-Kobayashi sum-rates for two-user ergodic fading interference channels.",
    )
    src = p.add_argument_group("law source")
    src.add_argument("--law", metavar="FILE", help="law file (JSON)")
    src.add_argument("--dist", choices=("rayleigh", "lognormal"), help="sample a law")
    src.add_argument("--n", type=int, help="number of sampled states")
    src.add_argument("--gains", type=lambda s: _csv_floats(s, 4), metavar="G11,G12,G21,G22",
                     help="mean squared gains of the sampled links")
    src.add_argument("--sigma-db", type=float, help="log-normal spread in dB (default 8)")
    src.add_argument("--seed", type=int, default=0, help="seed for sampling and random restarts")
    src.add_argument("--budgets", type=lambda s: _csv_floats(s, 2), metavar="B1,B2")
    src.add_argument("--mode", choices=("average", "per_state"))

    p.add_argument("--task", required=True, choices=TASKS)
    opt = p.add_argument_group("optimizer")
    d = OptimizerOptions()
    opt.add_argument("--restarts", type=int, default=d.restarts)
    opt.add_argument("--iters", type=int, default=d.iters)
    opt.add_argument("--step-a", type=float, default=d.step_a)
    opt.add_argument("--step-b", type=float, default=d.step_b)
    opt.add_argument("--tol", type=float, default=d.tol)
    opt.add_argument("--patience", type=int, default=d.patience)
    opt.add_argument("--inner-grid", type=int, default=d.inner_grid)
    opt.add_argument("--no-polish", action="store_true", help="skip the SLSQP polish")
    opt.add_argument("--oracle-grid", type=int, metavar="G", help="also run the grid oracle")

    sw = p.add_argument_group("sweep")
    sw.add_argument("--sweep", choices=SWEEP_PARAMS, help="quantity multiplied by kappa")
    sw.add_argument("--sweep-values", type=_sweep_values, default=(), metavar="K1,K2,...|START:STOP:COUNT")

    p.add_argument("--out", default=".", metavar="DIR")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--no-plot", action="store_true", help="skip PNG figures")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def config_from_args(argv: Sequence[str] | None = None) -> ExperimentConfig:
    a = build_parser().parse_args(argv)
    opts = OptimizerOptions(
        restarts=a.restarts,
        iters=a.iters,
        step_a=a.step_a,
        step_b=a.step_b,
        tol=a.tol,
        seed=a.seed,
        polish=not a.no_polish,
        inner_grid=a.inner_grid,
        patience=a.patience,
    )
    return ExperimentConfig(
        task=a.task,
        law_file=a.law,
        dist=a.dist,
        n=a.n,
        gains=a.gains,
        sigma_db=a.sigma_db,
        seed=a.seed,
        budgets=a.budgets,
        mode=a.mode,
        options=opts,
        oracle_grid=a.oracle_grid,
        sweep=a.sweep,
        sweep_values=a.sweep_values,
        out=a.out,
        jobs=a.jobs,
        plot=not a.no_plot,
    )


def _fail(code: int, name: str, message: str) -> int:
    print(f"error: {name}: {message}".replace("\n", " "), file=sys.stderr)
    return code


def main(argv: Sequence[str] | None = None) -> int:
    try:
        cfg = config_from_args(argv)
        report = run(cfg)
    except UsageError as exc:
        return _fail(EXIT_USAGE, "UsageError", str(exc))
    except ParseError as exc:
        return _fail(EXIT_PARSE, "ParseError", str(exc))
    except (ValidationError, UnsupportedSpec) as exc:
        code = getattr(exc, "code", "UnsupportedSpec")
        return _fail(EXIT_VALIDATION, f"ValidationError[{code}]", str(exc))
    except OptimizeError as exc:
        return _fail(EXIT_OPTIONS, f"OptimizeError[{exc.code}]", str(exc))
    except SchemeError as exc:
        return _fail(EXIT_SUBCLASS, f"SchemeError[{exc.code}]", str(exc))
    except OSError as exc:
        return _fail(EXIT_IO, "IOError", str(exc))
    except Exception as exc:  # pragma: no cover
        return _fail(EXIT_INTERNAL, type(exc).__name__, str(exc))
    print(f"ok: task={cfg.task} out={cfg.out} files={','.join(report['files'])}")
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

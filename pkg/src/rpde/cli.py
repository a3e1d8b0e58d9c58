"""Command line entry point: ``rpde run <config> [--seed S] [--out DIR] [--threads T] [--preset NAME]``.

Configuration files are flat YAML mappings of typed scalars (``levels`` and
``allocation`` may be lists of integers). Unknown keys are rejected.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import shutil
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import diagnostics as diag
from .errors import ConfigError, RpdeError
from .estimator import Baseline, LevelDistribution, default_threads, estimate_baseline, run_estimate
from .fem import ConstantFunctional, H1SeminormSquared
from .fields import GrfLognormal, ScalarLognormal
from .mesh import MAX_LEVEL


EXPERIMENTS = ("estimate", "mse_study", "cost_study", "baseline", "mlmc_ref")


@dataclass
class RunConfig:
    experiment: str = "estimate"
    model: str = "scalar"
    correlation: float = 0.03
    forcing: float = 1.0
    pad_factor: int = 4
    functional: str = "h1_seminorm_sq"
    functional_value: float = 0.0
    M: int = 1000
    M0: int = 1000
    baseline: str = "baseline"
    levels: list = field(default_factory=lambda: [1, 2, 3, 4, 5])
    replicates: int = 1000
    repeats: int = 3
    fit_min: int = 1
    n_min: int = 1
    n_max: int = 10
    ratio: float = 0.125
    level_offset: int = 0
    truncation: int = 4
    allocation: list = field(default_factory=lambda: [1000])
    seed: int = 0
    tol: float = 1e-10
    threads: int = 0
    bins: int = 50
    max_level: int = MAX_LEVEL
    out: str = "rpde-out"
    preset: str = ""


PRESETS = {
    "example41": dict(
        experiment="estimate",
        model="scalar",
        functional="h1_seminorm_sq",
        M=10000,
        M0=10000,
        baseline="baseline",
        level_offset=1,
    ),
    "example42": dict(
        experiment="estimate",
        model="grf",
        correlation=0.03,
        forcing=1.0,
        functional="h1_seminorm_sq",
        M=10000,
        M0=10000,
        baseline="baseline",
        level_offset=1,
    ),
}

_CHOICES = {
    "experiment": EXPERIMENTS,
    "model": ("scalar", "grf"),
    "functional": ("h1_seminorm_sq", "constant"),
    "baseline": ("baseline", "plain"),
    "preset": ("",) + tuple(PRESETS),
}

# key -> (lowest allowed, highest allowed, inclusive low, inclusive high)
_RANGES = {
    "correlation": (0.0, None, False, True),
    "pad_factor": (2, None, True, True),
    "M": (2, None, True, True),
    "M0": (2, None, True, True),
    "replicates": (1, None, True, True),
    "repeats": (1, None, True, True),
    "n_min": (1, None, True, True),
    "n_max": (1, None, True, True),
    "ratio": (0.0, 1.0, False, False),
    "level_offset": (0, None, True, True),
    "truncation": (1, None, True, True),
    "seed": (0, None, True, True),
    "tol": (0.0, 1.0, False, False),
    "threads": (0, None, True, True),
    "bins": (1, None, True, True),
    "max_level": (0, 16, True, True),
}

_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _check_type(key, value):
    kind = type(RunConfig.__dataclass_fields__[key].default)
    if _FIELDS[key].default_factory is not dataclasses.MISSING:
        if isinstance(value, int) and not isinstance(value, bool):
            value = [value]
        if not isinstance(value, list) or not all(
            isinstance(v, int) and not isinstance(v, bool) for v in value
        ):
            raise ConfigError(f"{key}: expected a list of integers, got {value!r}")
        return list(value)
    if isinstance(value, bool):
        raise ConfigError(f"{key}: expected {kind.__name__}, got bool")
    if kind is float and isinstance(value, int):
        return float(value)
    if not isinstance(value, kind):
        raise ConfigError(f"{key}: expected {kind.__name__}, got {type(value).__name__} {value!r}")
    return value


def _validate(cfg: RunConfig) -> RunConfig:
    for key, choices in _CHOICES.items():
        if getattr(cfg, key) not in choices:
            raise ConfigError(f"{key}: {getattr(cfg, key)!r} is not one of {list(choices)}")
    for key, (lo, hi, lo_inc, hi_inc) in _RANGES.items():
        v = getattr(cfg, key)
        bad = (lo is not None and (v < lo if lo_inc else v <= lo)) or (
            hi is not None and (v > hi if hi_inc else v >= hi)
        )
        if bad:
            lo_s = "" if lo is None else ("[" if lo_inc else "(") + str(lo)
            hi_s = "inf)" if hi is None else str(hi) + ("]" if hi_inc else ")")
            raise ConfigError(f"{key}: {v!r} out of range {lo_s}, {hi_s}")
    if cfg.n_max < cfg.n_min:
        raise ConfigError(f"n_max: {cfg.n_max} is below n_min {cfg.n_min}")
    if cfg.n_max + cfg.level_offset > cfg.max_level:
        raise ConfigError(f"n_max: level {cfg.n_max} + offset {cfg.level_offset} exceeds max_level")
    if not cfg.levels or min(cfg.levels) < 1 or max(cfg.levels) > cfg.max_level:
        raise ConfigError(f"levels: {cfg.levels} must lie in [1, max_level]")
    if min(cfg.allocation) < 1:
        raise ConfigError("allocation: counts must be positive")
    return cfg


def parse_config(text: str, preset: str | None = None) -> RunConfig:
    """Parse and validate a configuration document; missing keys take defaults.

    A preset (from the ``preset`` key or the argument) supplies defaults that
    explicit keys override.
    """
    try:
        data = yaml.safe_load(text) if text and text.strip() else {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed configuration: {exc}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping of keys to values")
    for key in data:
        if key not in _FIELDS:
            raise ConfigError(f"{key}: unknown key")
    values = {k: _check_type(k, v) for k, v in data.items()}
    name = preset or values.get("preset", "")
    if name and name not in PRESETS:
        raise ConfigError(f"preset: {name!r} is not one of {list(PRESETS)}")
    merged = {**PRESETS.get(name, {}), **values}
    if name:
        merged["preset"] = name
    return _validate(RunConfig(**merged))


def emit_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(dataclasses.asdict(cfg), sort_keys=True, default_flow_style=None)


def build_model(cfg: RunConfig):
    if cfg.model == "scalar":
        return ScalarLognormal()
    return GrfLognormal(correlation=cfg.correlation, forcing=cfg.forcing, pad_factor=cfg.pad_factor)


def build_functional(cfg: RunConfig):
    if cfg.functional == "constant":
        return ConstantFunctional(cfg.functional_value)
    return H1SeminormSquared()


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _run_estimate(cfg, model, fnl, threads, out):
    dist = LevelDistribution(ratio=cfg.ratio, n_min=cfg.n_min, n_max=cfg.n_max)
    report = run_estimate(
        model,
        fnl,
        dist,
        cfg.M,
        Baseline(cfg.baseline, cfg.M0),
        seed=cfg.seed,
        level_offset=cfg.level_offset,
        tol=cfg.tol,
        threads=threads,
    )
    result = report.to_dict()
    _write_csv(
        out / "levels.csv",
        ["level", "count", "p_n", "mean_diff_sq", "variance_term"],
        [
            [
                n,
                report.level_counts[n],
                repr(report.level_pmf[n]),
                repr(report.level_mean_diff_sq[n]),
                repr(report.level_mean_diff_sq[n] / report.level_pmf[n]),
            ]
            for n in sorted(report.level_counts)
        ],
    )
    edges, counts = diag.histogram(report.z_tilde, cfg.bins)
    diag.write_histogram_csv(out / "histogram.csv", edges, counts)
    return result, report.mean, report.stderr


def _run_mlmc(cfg, model, fnl, out):
    levels = range(cfg.n_min, cfg.truncation + 1)
    alloc = cfg.allocation[0] if len(cfg.allocation) == 1 else cfg.allocation
    res = diag.truncated_mlmc(
        model,
        fnl,
        cfg.truncation,
        alloc,
        seed=cfg.seed,
        baseline_mode=cfg.baseline,
        baseline_count=cfg.M0,
        n_min=cfg.n_min,
        level_offset=cfg.level_offset,
        tol=cfg.tol,
    )
    _write_csv(
        out / "levels.csv",
        ["level", "count", "delta", "variance"],
        [[n, c, repr(d), repr(v)] for n, c, d, v in zip(levels, res.counts, res.deltas, res.variances)],
    )
    result = {
        "estimate": res.estimate,
        "stderr": res.stderr,
        "baseline_mean": res.baseline_mean,
        "levels": {str(n): {"count": c, "delta": d, "variance": v}
                   for n, c, d, v in zip(levels, res.counts, res.deltas, res.variances)},
    }
    return result, res.estimate, res.stderr


def execute(cfg: RunConfig, out_dir: Path, threads: int | None = None) -> dict:
    """Run the configured experiment and write its artifacts into ``out_dir``."""
    threads = threads or cfg.threads or default_threads()
    model = build_model(cfg)
    fnl = build_functional(cfg)
    out_dir = Path(out_dir)
    staging = Path(tempfile.mkdtemp(prefix=".rpde-", dir=out_dir.parent if out_dir.parent.exists() else None))
    try:
        if cfg.experiment == "estimate":
            result, mean, se = _run_estimate(cfg, model, fnl, threads, staging)
        elif cfg.experiment == "baseline":
            mean, se = estimate_baseline(
                model, fnl, cfg.n_min - 1 + cfg.level_offset, cfg.M0, cfg.seed, cfg.tol, threads
            )
            result = {"mean": mean, "stderr": se}
        elif cfg.experiment == "mlmc_ref":
            result, mean, se = _run_mlmc(cfg, model, fnl, staging)
        else:
            if cfg.experiment == "mse_study":
                study = diag.mse_study(model, cfg.levels, cfg.replicates, cfg.seed, cfg.tol, cfg.fit_min)
                slope, slope_se = study.mse_slope, study.mse_slope_stderr
            else:
                study = diag.cost_study(
                    model, cfg.levels, cfg.replicates, cfg.seed, cfg.repeats, fnl, cfg.tol,
                    fit_min=cfg.fit_min,
                )
                slope, slope_se = study.cost_slope, study.cost_slope_stderr
            diag.write_rates_csv(staging / "rates.csv", study)
            result = {"levels": study.levels, "mse": study.mse, "cost": study.cost,
                      "slope": slope, "slope_stderr": slope_se}
            mean, se = slope, slope_se
        report = {"schema": 1, "experiment": cfg.experiment, "config": dataclasses.asdict(cfg), **result}
        with open(staging / "report.json", "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True, allow_nan=True)
            fh.write("\n")
        out_dir.mkdir(parents=True, exist_ok=True)
        for item in staging.iterdir():
            shutil.move(str(item), out_dir / item.name)
    finally:
        shutil.rmtree(staging, ignore_errors=True)
    label = "slope" if cfg.experiment in ("mse_study", "cost_study") else "mean"
    print(f"{cfg.experiment}: {label} = {mean:.6g} +/- {se:.3g}")
    return report


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="rpde", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run an experiment")
    run_p.add_argument("config", nargs="?", help="configuration file (flat YAML)")
    run_p.add_argument("--seed", type=int)
    run_p.add_argument("--out")
    run_p.add_argument("--threads", type=int)
    run_p.add_argument("--preset", choices=sorted(PRESETS))
    run_p.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    try:
        text = Path(args.config).read_text() if args.config else ""
        cfg = parse_config(text, preset=args.preset)
        env_seed = os.environ.get("RPDE_SEED")
        if env_seed is not None:
            try:
                cfg.seed = int(env_seed)
            except ValueError:
                raise ConfigError(f"RPDE_SEED: not an integer: {env_seed!r}") from None
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out:
            cfg.out = args.out
        if args.threads is not None:
            cfg.threads = args.threads
        _validate(cfg)
    except ConfigError as exc:
        print(f"rpde: config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"rpde: cannot read config: {exc}", file=sys.stderr)
        return 4

    sys.stderr.write(emit_config(cfg))
    try:
        execute(cfg, Path(cfg.out))
    except RpdeError as exc:
        print(f"rpde: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"rpde: I/O error: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Rate studies, constraint audits and the truncated multilevel reference estimator."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import UnsupportedModelError
from .estimator import (
    BASELINE,
    AUDIT_STREAM,
    MLMC_STREAM,
    PLAIN,
    STUDY_STREAM,
    LevelDistribution,
    coupled_pair,
    level_functional,
    level_system,
    stream,
)
from .fem import Functional, H1SeminormSquared
from .fields import FieldModel


def ols_slope(x, y):
    """Ordinary least squares fit ``y = slope * x + intercept``.

    Returns ``(slope, intercept, slope_stderr)``; the standard error is nan
    when there are only two points.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = np.isfinite(x) & np.isfinite(y)
    x, y = x[ok], y[ok]
    if x.size < 2:
        raise ValueError("need at least two finite points for a slope")
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    slope = np.sum((x - xm) * (y - ym)) / sxx
    intercept = ym - slope * xm
    if x.size > 2:
        resid = y - (slope * x + intercept)
        se = float(np.sqrt(np.sum(resid**2) / (x.size - 2) / sxx))
    else:
        se = float("nan")
    return float(slope), float(intercept), se


@dataclass
class RateStudy:
    levels: list
    mse: list | None = None
    cost: list | None = None
    mse_slope: float | None = None
    mse_slope_stderr: float | None = None
    cost_slope: float | None = None
    cost_slope_stderr: float | None = None

    def rows(self):
        for i, n in enumerate(self.levels):
            yield (
                n,
                None if self.mse is None else self.mse[i],
                None if self.cost is None else self.cost[i],
            )


def _fit_window(levels, values, fit_min):
    levels = np.asarray(levels)
    sel = levels >= fit_min
    if sel.sum() < 3:
        raise ValueError("slope fit needs at least 3 levels")
    return ols_slope(levels[sel], np.log2(np.asarray(values)[sel]))


def mse_study(
    model: FieldModel,
    levels,
    replicates: int = 1000,
    seed: int = 0,
    tol: float = 1e-10,
    fit_min: int = 1,
) -> RateStudy:
    """Monte Carlo ``E(Q(u_n) - Q(u))^2`` per mesh level with the exact ``Q(u)`` per realization.

    Replicate ``j`` reuses the same random stream on every level, so the
    levels are compared on common realizations.
    """
    if not model.has_exact_oracle:
        raise UnsupportedModelError(f"model {model.name!r} has no exact-solution oracle")
    levels = sorted(int(n) for n in levels)
    fnl = H1SeminormSquared()
    mse = []
    for n in levels:
        sq = 0.0
        for j in range(replicates):
            real = model.sample(n, stream(seed, STUDY_STREAM, j))
            err = level_functional(fnl, real, tol) - model.exact_h1_seminorm_sq(real)
            sq += err * err
        mse.append(sq / replicates)
    slope, _, se = _fit_window(levels, mse, fit_min)
    return RateStudy(levels=levels, mse=mse, mse_slope=slope, mse_slope_stderr=se)


def cost_study(
    model: FieldModel,
    levels,
    replicates: int = 20,
    seed: int = 0,
    repeats: int = 3,
    fnl: Functional | None = None,
    tol: float = 1e-10,
    fit_min: int | None = None,
) -> RateStudy:
    """Median over ``repeats`` of the mean wall time to produce ``Z_n - Z_{n-1}``."""
    if repeats < 1 or replicates < 1:
        raise ValueError("repeats and replicates must be positive")
    fnl = fnl or H1SeminormSquared()
    levels = sorted(int(n) for n in levels)
    cost = []
    for n in levels:
        level_system(n, 2)
        level_system(n - 1, 2)
        coupled_pair(model, fnl, n, stream(seed, STUDY_STREAM, n, 0, 0), tol)  # warm caches
        per_repeat = []
        for r in range(repeats):
            start = time.perf_counter()
            for j in range(replicates):
                coupled_pair(model, fnl, n, stream(seed, STUDY_STREAM, n, r + 1, j), tol)
            per_repeat.append((time.perf_counter() - start) / replicates)
        cost.append(float(np.median(per_repeat)))
    slope, _, se = _fit_window(levels, cost, levels[0] if fit_min is None else fit_min)
    return RateStudy(levels=levels, cost=cost, cost_slope=slope, cost_slope_stderr=se)


@dataclass
class TruncatedMlmc:
    truncation: int
    counts: list
    deltas: list
    variances: list
    baseline_mean: float = 0.0
    baseline_var: float = 0.0
    baseline_count: int = 0
    estimate: float = field(init=False)
    stderr: float = field(init=False)

    def __post_init__(self):
        self.estimate = float(self.baseline_mean + np.sum(self.deltas))
        var = sum(v / n for v, n in zip(self.variances, self.counts))
        if self.baseline_count:
            var += self.baseline_var / self.baseline_count
        self.stderr = float(np.sqrt(var))


def truncated_mlmc(
    model: FieldModel,
    fnl: Functional,
    truncation: int,
    allocation,
    seed: int = 0,
    baseline_mode: str = PLAIN,
    baseline_count: int = 0,
    n_min: int = 1,
    level_offset: int = 0,
    tol: float = 1e-10,
) -> TruncatedMlmc:
    """Sum of independent per-level means of coupled differences, levels ``n_min..truncation``.

    ``allocation`` is one count for every level or a sequence with one count
    per level. In ``baseline`` mode the coarsest level ``n_min - 1`` is
    estimated separately with ``baseline_count`` samples; in ``plain`` mode it
    is taken as zero.
    """
    if truncation < n_min:
        raise ValueError("truncation must be >= n_min")
    levels = list(range(n_min, truncation + 1))
    counts = [int(allocation)] * len(levels) if np.isscalar(allocation) else [int(c) for c in allocation]
    if len(counts) != len(levels) or min(counts) < 1:
        raise ValueError("allocation must give a positive count for every level")

    deltas, variances = [], []
    for n, count in zip(levels, counts):
        coarse = not (baseline_mode == PLAIN and n == n_min)
        y = np.empty(count)
        for j in range(count):
            zf, zc, _ = coupled_pair(
                model, fnl, n + level_offset, stream(seed, MLMC_STREAM, n, j), tol, coarse
            )
            y[j] = zf - zc
        deltas.append(float(y.mean()))
        variances.append(float(y.var(ddof=1)) if count > 1 else 0.0)

    base_mean = base_var = 0.0
    if baseline_mode == BASELINE:
        if baseline_count < 1:
            raise ValueError("baseline mode needs baseline_count >= 1")
        z0 = np.array(
            [
                level_functional(
                    fnl, model.sample(n_min - 1 + level_offset, stream(seed, MLMC_STREAM, 0, j)), tol
                )
                for j in range(baseline_count)
            ]
        )
        base_mean = float(z0.mean())
        base_var = float(z0.var(ddof=1)) if baseline_count > 1 else 0.0
    else:
        baseline_count = 0
    return TruncatedMlmc(
        truncation=truncation,
        counts=counts,
        deltas=deltas,
        variances=variances,
        baseline_mean=base_mean,
        baseline_var=base_var,
        baseline_count=baseline_count,
    )


@dataclass
class LevelAudit:
    level: int
    p_n: float
    second_moment: float  # E(Z_n - Z_{n-1})^2
    mean_cost: float

    @property
    def lower(self) -> float:
        return self.level * self.second_moment

    @property
    def upper(self) -> float:
        return 1.0 / self.level

    @property
    def satisfied(self) -> bool:
        """``1/n > p_n > n E(Z_n - Z_{n-1})^2``."""
        return self.upper > self.p_n > self.lower

    @property
    def variance_term(self) -> float:
        """Contribution ``E(Z_n - Z_{n-1})^2 / p_n`` to the second moment of the estimator."""
        return self.second_moment / self.p_n


def constraint_audit(
    model: FieldModel,
    fnl: Functional,
    dist: LevelDistribution,
    levels,
    replicates: int = 200,
    seed: int = 0,
    level_offset: int = 0,
    tol: float = 1e-10,
) -> list[LevelAudit]:
    """Measured second moments and costs of coupled differences against ``p_n``.

    Replicate ``j`` uses the same random stream on every level, so ratios
    between levels are not swamped by the spread of the field law.
    """
    out = []
    for n in levels:
        sq, cost = 0.0, 0.0
        for j in range(replicates):
            start = time.perf_counter()
            zf, zc, _ = coupled_pair(
                model, fnl, n + level_offset, stream(seed, AUDIT_STREAM, j), tol
            )
            cost += time.perf_counter() - start
            sq += (zf - zc) ** 2
        out.append(LevelAudit(int(n), dist.pmf(n), sq / replicates, cost / replicates))
    return out


def expected_cost_partial_sums(audit: list[LevelAudit]) -> list[float]:
    """Running sums of ``p_n c_n`` over the audited levels."""
    return list(np.cumsum([a.p_n * a.mean_cost for a in audit]))


def histogram(values, bin_count: int = 50):
    """Equal-width histogram over ``[min, max]`` of the finite values; returns ``(edges, counts)``."""
    if bin_count < 1:
        raise ValueError("bin_count must be >= 1")
    v = np.asarray(values, dtype=float).ravel()
    v = v[np.isfinite(v)]
    if v.size == 0:
        raise ValueError("histogram of empty input")
    counts, edges = np.histogram(v, bins=bin_count)
    return edges, counts


def _fmt(x):
    return "" if x is None else repr(float(x))


def write_rates_csv(path, study: RateStudy) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["level", "mse", "cost"])
        for n, mse, cost in study.rows():
            w.writerow([n, _fmt(mse), _fmt(cost)])


def write_histogram_csv(path, edges, counts) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_lo", "bin_hi", "count"])
        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
            w.writerow([repr(float(lo)), repr(float(hi)), int(c)])

"""Randomized single-term estimator built on coupled level differences.

One replicate draws a level ``N`` from a geometric law, samples a single field
realization on the level-``N`` mesh and evaluates ``Z_N - Z_{N-1}`` on that
realization and on its restriction. Dividing by ``P(N = n)`` gives an unbiased
estimate of the telescoping sum.
"""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import EstimationError, RpdeError
from .fem import Functional, evaluate_functional, level_system, solve_tilde_u
from .fields import FieldModel, restrict

log = logging.getLogger(__name__)

ORDER = 2
PLAIN = "plain"
BASELINE = "baseline"

# first spawn-key component, one per independent use of the root seed
ESTIMATE_STREAM = 0
BASELINE_STREAM = 1
MLMC_STREAM = 2
STUDY_STREAM = 3
AUDIT_STREAM = 4


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator addressed by ``(seed, key)``, independent of call order."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


@dataclass(frozen=True)
class LevelDistribution:
    """Geometric law ``p_n = (1 - r) r**(n - n_min)`` with the tail beyond ``n_max`` folded onto ``n_max``."""

    ratio: float = 0.125
    n_min: int = 1
    n_max: int = 10

    def __post_init__(self):
        if not 0.0 < self.ratio < 1.0:
            raise ValueError(f"ratio must lie in (0, 1), got {self.ratio}")
        if self.n_min < 1:
            raise ValueError("n_min must be >= 1")
        if self.n_max < self.n_min:
            raise ValueError("n_max must be >= n_min")

    @classmethod
    def for_dimension(cls, d: int = 2, **kw):
        return cls(ratio=2.0 ** (-(4 + d) / 2), **kw)

    def pmf(self, n: int) -> float:
        if n < self.n_min or n > self.n_max:
            return 0.0
        k = n - self.n_min
        if n == self.n_max:
            return self.ratio**k
        return (1.0 - self.ratio) * self.ratio**k

    @property
    def support(self) -> range:
        return range(self.n_min, self.n_max + 1)

    @property
    def truncation_mass(self) -> float:
        """Probability folded onto ``n_max`` from the untruncated tail beyond it."""
        return self.ratio ** (self.n_max - self.n_min + 1)

    def cdf(self, n: int) -> float:
        return sum(self.pmf(k) for k in range(self.n_min, min(n, self.n_max) + 1))

    def inverse_cdf(self, u: float) -> int:
        acc = 0.0
        for n in range(self.n_min, self.n_max):
            acc += self.pmf(n)
            if u <= acc:
                return n
        return self.n_max


def sample_level(dist: LevelDistribution, rng: np.random.Generator) -> int:
    return dist.inverse_cdf(rng.random())


@dataclass(frozen=True)
class Baseline:
    """How the coarsest term ``E[Z_{n_min - 1}]`` is handled.

    ``plain`` takes ``Z_{n_min - 1} = 0``. ``baseline`` estimates its mean by
    ordinary Monte Carlo with ``m0`` samples and adds it to every replicate.
    """

    mode: str = BASELINE
    m0: int = 10000

    def __post_init__(self):
        if self.mode not in (PLAIN, BASELINE):
            raise ValueError(f"unknown baseline mode {self.mode!r}")
        if self.mode == BASELINE and self.m0 < 2:
            raise ValueError("m0 must be >= 2")


@dataclass(frozen=True)
class ReplicateOutcome:
    level: int
    z_diff: float
    z_tilde: float
    wall_cost: float
    failed: bool = False
    error: str | None = None


def level_functional(fnl, real, tol=1e-10) -> float:
    system = level_system(real.level, ORDER)
    sol = solve_tilde_u(system.mesh, system.dofmap, real, tol=tol)
    return evaluate_functional(fnl, sol, system.mesh)


def coupled_pair(model, fnl, mesh_level, rng, tol=1e-10, coarse=True):
    """``(Z_fine, Z_coarse)`` from one realization on ``mesh_level`` and its restriction."""
    real = model.sample(mesh_level, rng)
    z_fine = level_functional(fnl, real, tol)
    z_coarse = level_functional(fnl, restrict(real, mesh_level - 1), tol) if coarse else 0.0
    return z_fine, z_coarse, real


def run_replicate(
    model: FieldModel,
    fnl: Functional,
    dist: LevelDistribution,
    baseline_mode: str,
    rng_level: np.random.Generator,
    rng_field: np.random.Generator,
    baseline_mean: float = 0.0,
    level_offset: int = 0,
    tol: float = 1e-10,
    level: int | None = None,
) -> ReplicateOutcome:
    """One draw of ``Zhat_0 + (Z_N - Z_{N-1}) / p_N``.

    ``level`` forces ``N`` (the level stream is then not consumed).
    """
    start = time.perf_counter()
    n = sample_level(dist, rng_level) if level is None else int(level)
    p_n = dist.pmf(n)
    if p_n <= 0.0:
        raise ValueError(f"level {n} has zero probability")
    coarse = not (baseline_mode == PLAIN and n - 1 < dist.n_min)
    try:
        z_fine, z_coarse, _ = coupled_pair(model, fnl, n + level_offset, rng_field, tol, coarse)
    except (RpdeError, FloatingPointError) as exc:
        return ReplicateOutcome(n, np.nan, np.nan, time.perf_counter() - start, True, repr(exc))
    z_diff = z_fine - z_coarse
    base = baseline_mean if baseline_mode == BASELINE else 0.0
    return ReplicateOutcome(
        level=n,
        z_diff=z_diff,
        z_tilde=base + z_diff / p_n,
        wall_cost=time.perf_counter() - start,
    )


def _baseline_chunk(args):
    model, fnl, level, seed, start, stop, tol = args
    out = np.empty(stop - start)
    for j in range(start, stop):
        real = model.sample(level, stream(seed, BASELINE_STREAM, j))
        out[j - start] = level_functional(fnl, real, tol)
    return out


def _chunks(m: int, workers: int):
    workers = max(1, min(workers, m))
    bounds = np.linspace(0, m, workers + 1).astype(int)
    return list(zip(bounds[:-1], bounds[1:]))


def _map(fn, tasks, threads):
    if threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tasks))


def default_threads() -> int:
    return os.cpu_count() or 1


def estimate_baseline(model, fnl, level, m0, seed, tol=1e-10, threads=1):
    """Plain Monte Carlo mean and standard error of ``Q(u_level)``."""
    if m0 < 2:
        raise ValueError("m0 must be >= 2")
    tasks = [(model, fnl, level, seed, a, b, tol) for a, b in _chunks(m0, threads)]
    values = np.concatenate(_map(_baseline_chunk, tasks, threads))
    return float(values.mean()), float(values.std(ddof=1) / np.sqrt(m0))


@dataclass
class EstimateReport:
    m: int
    mean: float
    stderr: float
    baseline_mean: float
    baseline_stderr: float
    baseline_mode: str
    level_counts: dict
    level_mean_diff_sq: dict
    level_mean_cost: dict
    level_pmf: dict
    total_cost: float
    n_failed: int
    truncation_mass: float
    level_offset: int
    z_tilde: np.ndarray = field(repr=False)
    levels: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "M": self.m,
            "mean": self.mean,
            "stderr": self.stderr,
            "baseline": {
                "mode": self.baseline_mode,
                "mean": self.baseline_mean,
                "stderr": self.baseline_stderr,
            },
            "levels": {
                str(n): {
                    "count": self.level_counts[n],
                    "p_n": self.level_pmf[n],
                    "mean_diff_sq": self.level_mean_diff_sq[n],
                    "mean_cost": self.level_mean_cost[n],
                }
                for n in sorted(self.level_counts)
            },
            "total_cost": self.total_cost,
            "n_failed": self.n_failed,
            "truncation_mass": self.truncation_mass,
            "level_offset": self.level_offset,
        }


def _estimate_chunk(args):
    model, fnl, dist, mode, base_mean, offset, seed, start, stop, tol = args
    rows = []
    for i in range(start, stop):
        out = run_replicate(
            model,
            fnl,
            dist,
            mode,
            stream(seed, ESTIMATE_STREAM, i, 0),
            stream(seed, ESTIMATE_STREAM, i, 1),
            baseline_mean=base_mean,
            level_offset=offset,
            tol=tol,
        )
        rows.append((out.level, out.z_diff, out.z_tilde, out.wall_cost, out.failed))
    return rows


def run_estimate(
    model: FieldModel,
    fnl: Functional,
    dist: LevelDistribution,
    m: int,
    baseline: Baseline = Baseline(),
    seed: int = 0,
    level_offset: int = 0,
    tol: float = 1e-10,
    threads: int = 1,
    max_failure_rate: float = 0.01,
) -> EstimateReport:
    if m < 2:
        raise ValueError("M must be >= 2")
    if baseline.mode == BASELINE:
        base_level = dist.n_min - 1 + level_offset
        base_mean, base_se = estimate_baseline(model, fnl, base_level, baseline.m0, seed, tol, threads)
    else:
        base_mean, base_se = 0.0, 0.0

    tasks = [
        (model, fnl, dist, baseline.mode, base_mean, level_offset, seed, a, b, tol)
        for a, b in _chunks(m, threads)
    ]
    rows = [r for chunk in _map(_estimate_chunk, tasks, threads) for r in chunk]
    levels = np.array([r[0] for r in rows], dtype=int)
    z_diff = np.array([r[1] for r in rows])
    z_tilde = np.array([r[2] for r in rows])
    cost = np.array([r[3] for r in rows])
    failed = np.array([r[4] for r in rows], dtype=bool)

    n_failed = int(failed.sum())
    if n_failed > max_failure_rate * m:
        raise EstimationError(f"{n_failed} of {m} replicates failed")
    if n_failed:
        log.warning("%d replicates failed and were excluded", n_failed)

    ok = ~failed
    zt = z_tilde[ok]
    diff_var = float(np.var(zt, ddof=1)) if zt.size > 1 else 0.0
    stderr = float(np.sqrt(diff_var / zt.size + base_se**2))

    counts, diff_sq, mean_cost, pmf = {}, {}, {}, {}
    for n in np.unique(levels):
        sel = levels == n
        good = sel & ok
        n = int(n)
        counts[n] = int(sel.sum())
        diff_sq[n] = float(np.mean(z_diff[good] ** 2)) if good.any() else float("nan")
        mean_cost[n] = float(cost[sel].mean())
        pmf[n] = dist.pmf(n)

    return EstimateReport(
        m=m,
        mean=float(zt.mean()),
        stderr=stderr,
        baseline_mean=base_mean,
        baseline_stderr=base_se,
        baseline_mode=baseline.mode,
        level_counts=counts,
        level_mean_diff_sq=diff_sq,
        level_mean_cost=mean_cost,
        level_pmf=pmf,
        total_cost=float(cost.sum()),
        n_failed=n_failed,
        truncation_mass=dist.truncation_mass,
        level_offset=level_offset,
        z_tilde=zt,
        levels=levels[ok],
    )

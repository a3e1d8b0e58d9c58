"""Random coefficient and forcing models sampled on mesh vertices.

A realization is drawn once on the finest vertex grid a replicate needs and
coarser levels are obtained by index restriction, which keeps the solutions on
different levels coupled through the same ``(a, f)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any

import numpy as np

from .errors import EmbeddingError, UnsupportedModelError
from .mesh import MAX_LEVEL, build_mesh, vertex_restriction


@dataclass(frozen=True, eq=False)
class FieldRealization:
    level: int
    a_vertex: np.ndarray
    f_vertex: np.ndarray
    latent: Any = None


class FieldModel:
    """Base class for joint laws of ``(a, f)``.

    Subclasses implement :meth:`sample`. Models whose functional has a closed
    form per realization override :meth:`exact_h1_seminorm_sq`.
    """

    name = "custom"

    def sample(self, level: int, rng: np.random.Generator) -> FieldRealization:
        raise NotImplementedError

    def exact_h1_seminorm_sq(self, real: FieldRealization) -> float:
        raise UnsupportedModelError(f"model {self.name!r} has no exact-solution oracle")

    @property
    def has_exact_oracle(self) -> bool:
        return type(self).exact_h1_seminorm_sq is not FieldModel.exact_h1_seminorm_sq


def _sin_forcing(points: np.ndarray) -> np.ndarray:
    return np.sin(np.pi * points[:, 0]) * np.sin(np.pi * points[:, 1])


@dataclass(frozen=True)
class ScalarLognormal(FieldModel):
    """``a = exp(W)`` with a single standard normal ``W``; ``f = sin(pi x1) sin(pi x2)``.

    ``fixed_w`` pins ``W`` for deterministic checks. The exact solution is
    ``exp(-W) sin(pi x1) sin(pi x2) / (2 pi^2)``.
    """

    fixed_w: float | None = None
    name = "scalar"

    def sample(self, level, rng):
        w = float(rng.standard_normal()) if self.fixed_w is None else float(self.fixed_w)
        mesh = build_mesh(level)
        n = mesh.n_vertices
        return FieldRealization(
            level=level,
            a_vertex=np.full(n, np.exp(w)),
            f_vertex=_sin_forcing(mesh.vertices),
            latent=w,
        )

    def exact_h1_seminorm_sq(self, real):
        return float(np.exp(-2.0 * real.latent) / (8.0 * np.pi**2))


@dataclass(frozen=True)
class GrfLognormal(FieldModel):
    """``log a`` centred Gaussian with covariance ``exp(-|x-y|^2 / correlation)``; constant ``f``."""

    correlation: float = 0.03
    forcing: float = 1.0
    pad_factor: int = 4
    clip_rtol: float = 1e-9
    name = "grf"

    def __post_init__(self):
        if self.correlation <= 0:
            raise ValueError("correlation must be positive")
        if self.pad_factor < 2:
            raise ValueError("pad_factor must be >= 2")

    def sample(self, level, rng):
        sampler = grid_sampler(2**level + 1, self.correlation, self.pad_factor, self.clip_rtol)
        log_a = sampler.sample(rng).ravel()
        n = log_a.size
        return FieldRealization(
            level=level,
            a_vertex=np.exp(log_a),
            f_vertex=np.full(n, float(self.forcing)),
            latent=log_a,
        )


def sample_realization(model: FieldModel, level: int, rng, max_level: int = MAX_LEVEL):
    build_mesh(level, max_level)  # validates the level
    return model.sample(level, rng)


def restrict(real: FieldRealization, to_level: int) -> FieldRealization:
    """Vertex values of ``real`` on the nested coarser mesh ``to_level``."""
    if to_level > real.level:
        raise ValueError(f"cannot restrict level {real.level} realization to finer level {to_level}")
    if to_level == real.level:
        return real
    idx = vertex_restriction(real.level, to_level)
    latent = real.latent
    if isinstance(latent, np.ndarray) and latent.shape == real.a_vertex.shape:
        latent = latent[idx]
    return FieldRealization(
        level=to_level,
        a_vertex=real.a_vertex[idx],
        f_vertex=real.f_vertex[idx],
        latent=latent,
    )


def gaussian_kernel(dist_sq, correlation):
    return np.exp(-np.asarray(dist_sq) / correlation)


def embed_covariance(m: int, correlation: float, pad_factor: int = 4, clip_rtol: float = 1e-9):
    """Eigenvalues of the periodic embedding of the kernel on an ``m x m`` unit-square grid.

    The torus has ``M = pad_factor * (m - 1)`` points per side. Returns the
    ``(M, M)`` eigenvalue array with tiny negatives clipped to zero and the
    number of clipped entries.
    """
    if m < 2:
        raise ValueError("grid side m must be >= 2")
    if pad_factor < 2:
        raise ValueError("pad_factor must be >= 2")
    big = pad_factor * (m - 1)
    h = 1.0 / (m - 1)
    k = np.arange(big)
    lag = np.minimum(k, big - k) * h
    row = gaussian_kernel(lag**2, correlation)
    first_column = np.outer(row, row)  # the kernel factorises over coordinates
    spectrum = np.fft.fft2(first_column)
    if np.abs(spectrum.imag).max() > 1e-9 * max(1.0, np.abs(spectrum.real).max()):
        raise EmbeddingError("embedded kernel is not symmetric")
    eig = spectrum.real
    eps = clip_rtol * eig.max()
    if eig.min() < -eps:
        raise EmbeddingError(
            f"circulant embedding has eigenvalue {eig.min():.3e} < -{eps:.3e}; "
            "increase pad_factor"
        )
    negative = eig < 0
    eig = np.where(negative, 0.0, eig)
    return eig, int(np.count_nonzero(negative))


@dataclass(frozen=True, eq=False)
class GridGaussianSampler:
    m: int
    padded: int
    multipliers: np.ndarray = field(repr=False)
    n_clipped: int = 0

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """One field on the ``m x m`` grid, indexed ``[ix, iy]``."""
        big = self.padded
        xi = rng.standard_normal((2, big, big))
        y = np.fft.fft2(self._scale * (xi[0] + 1j * xi[1]))
        return y.real[: self.m, : self.m]

    def __post_init__(self):
        object.__setattr__(self, "_scale", np.sqrt(self.multipliers) / self.padded)


@lru_cache(maxsize=32)
def grid_sampler(m: int, correlation: float, pad_factor: int = 4, clip_rtol: float = 1e-9):
    eig, n_clipped = embed_covariance(m, correlation, pad_factor, clip_rtol)
    eig.setflags(write=False)
    return GridGaussianSampler(m=m, padded=pad_factor * (m - 1), multipliers=eig, n_clipped=n_clipped)

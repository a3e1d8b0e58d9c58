"""Quadrature rules on the reference triangle (0,0), (1,0), (0,1).

Points are stored in barycentric form ``(l0, l1, l2)``, with Cartesian
reference coordinates ``(l1, l2)``. Weights sum to the reference area 1/2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    name: str
    barycentric: np.ndarray  # (n_points, 3)
    weights: np.ndarray  # (n_points,)
    degree: int

    @property
    def points(self) -> np.ndarray:
        """Cartesian coordinates on the reference triangle."""
        return self.barycentric[:, 1:]

    def __len__(self) -> int:
        return len(self.weights)


def _rule(name, bary, weights, degree):
    bary = np.asarray(bary, dtype=float)
    weights = np.asarray(weights, dtype=float)
    bary.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(name, bary, weights, degree)


# Edge midpoints, exact for quadratics.
EDGE_MIDPOINT = _rule(
    "edge-midpoint-3",
    [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]],
    [1 / 6, 1 / 6, 1 / 6],
    2,
)

# Strang-Fix 4-point rule, exact for cubics. The centroid weight is negative.
STRANG_FIX_4 = _rule(
    "strang-fix-4",
    [[1 / 3, 1 / 3, 1 / 3], [0.6, 0.2, 0.2], [0.2, 0.6, 0.2], [0.2, 0.2, 0.6]],
    [-27 / 96, 25 / 96, 25 / 96, 25 / 96],
    3,
)


def collapsed_gauss(n_points: int) -> QuadratureRule:
    """Tensor Gauss-Legendre rule mapped onto the triangle by the Duffy collapse.

    Uses ``n_points**2`` nodes and integrates polynomials of total degree
    ``2 * n_points - 2`` exactly.
    """
    if n_points < 1:
        raise ValueError("n_points must be >= 1")
    t, w = np.polynomial.legendre.leggauss(n_points)
    t = 0.5 * (t + 1.0)
    w = 0.5 * w
    xi, eta = np.meshgrid(t, t, indexing="ij")
    wx, we = np.meshgrid(w, w, indexing="ij")
    x = xi.ravel()
    y = (eta * (1.0 - xi)).ravel()
    weights = (wx * we * (1.0 - xi)).ravel()
    bary = np.column_stack([1.0 - x - y, x, y])
    return _rule(f"collapsed-gauss-{n_points}", bary, weights, 2 * n_points - 2)


def monomial_integral(p: int, q: int) -> float:
    """Exact integral of ``x**p * y**q`` over the reference triangle."""
    from math import factorial

    return factorial(p) * factorial(q) / factorial(p + q + 2)

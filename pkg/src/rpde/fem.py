"""Galerkin assembly and solution with P1/P2 Lagrange elements.

The coefficient ``a`` and the forcing ``f`` enter only through their
piecewise linear vertex interpolants. On each triangle the stiffness entries
are then ``sum_v a_v * int_K lambda_v grad(phi_i) . grad(phi_j)`` and the load
entries ``sum_v f_v * int_K lambda_v phi_i``; both integrands are polynomials
of degree at most 3 and are integrated exactly by :data:`STRANG_FIX_4`. The
per-vertex element tensors only depend on the triangle shape, so they are
computed once per distinct shape and reused for every realization.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import InvalidCoefficientError, NumericError
from .fields import FieldRealization
from .mesh import DofMap, TriMesh, build_dofmap, build_mesh
from .quadrature import EDGE_MIDPOINT, STRANG_FIX_4, QuadratureRule, collapsed_gauss
from .sparse import SparseSpd, cg_solve, sparsity_pattern

# reference gradients of the barycentric coordinates
_GRAD_LAMBDA = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
_EDGE_VERTS = ((1, 2), (2, 0), (0, 1))


def shape_values(order: int, bary: np.ndarray) -> np.ndarray:
    """Basis values at barycentric points, shape ``(n_points, n_basis)``."""
    lam = np.atleast_2d(bary)
    if order == 1:
        return lam.copy()
    if order == 2:
        vert = lam * (2.0 * lam - 1.0)
        edge = np.column_stack([4.0 * lam[:, a] * lam[:, b] for a, b in _EDGE_VERTS])
        return np.concatenate([vert, edge], axis=1)
    raise ValueError(f"unsupported order {order}")


def shape_grads(order: int, bary: np.ndarray) -> np.ndarray:
    """Reference-coordinate basis gradients, shape ``(n_points, n_basis, 2)``."""
    lam = np.atleast_2d(bary)
    nq = len(lam)
    if order == 1:
        return np.broadcast_to(_GRAD_LAMBDA, (nq, 3, 2)).copy()
    if order == 2:
        out = np.empty((nq, 6, 2))
        for i in range(3):
            out[:, i] = (4.0 * lam[:, i] - 1.0)[:, None] * _GRAD_LAMBDA[i]
        for k, (a, b) in enumerate(_EDGE_VERTS):
            out[:, 3 + k] = 4.0 * (
                lam[:, a, None] * _GRAD_LAMBDA[b] + lam[:, b, None] * _GRAD_LAMBDA[a]
            )
        return out
    raise ValueError(f"unsupported order {order}")


def _geometry(coords: np.ndarray):
    """Jacobian inverse-transpose and |det J| for triangles ``(E, 3, 2)``."""
    jac = np.stack([coords[:, 1] - coords[:, 0], coords[:, 2] - coords[:, 0]], axis=2)
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    if np.any(det == 0):
        raise NumericError("degenerate triangle")
    inv_t = np.empty_like(jac)
    inv_t[:, 0, 0] = jac[:, 1, 1] / det
    inv_t[:, 0, 1] = -jac[:, 1, 0] / det
    inv_t[:, 1, 0] = -jac[:, 0, 1] / det
    inv_t[:, 1, 1] = jac[:, 0, 0] / det
    return inv_t, np.abs(det)


def _physical_grads(coords, order, rule):
    inv_t, det = _geometry(coords)
    ref = shape_grads(order, rule.barycentric)  # (q, b, 2)
    return np.einsum("ekl,qbl->eqbk", inv_t, ref), det


def stiffness_tensor(coords, order, rule: QuadratureRule = STRANG_FIX_4) -> np.ndarray:
    """``T[e, v, i, j] = int_K lambda_v grad(phi_i) . grad(phi_j)``."""
    coords = np.asarray(coords, dtype=float).reshape(-1, 3, 2)
    grads, det = _physical_grads(coords, order, rule)
    wl = rule.weights[:, None] * rule.barycentric  # (q, v)
    return np.einsum("e,qv,eqik,eqjk->evij", det, wl, grads, grads)


def load_tensor(coords, order, rule: QuadratureRule = STRANG_FIX_4) -> np.ndarray:
    """``T[e, v, i] = int_K lambda_v phi_i``."""
    coords = np.asarray(coords, dtype=float).reshape(-1, 3, 2)
    _, det = _geometry(coords)
    phi = shape_values(order, rule.barycentric)
    wl = rule.weights[:, None] * rule.barycentric
    return np.einsum("e,qv,qi->evi", det, wl, phi)


def local_stiffness(coords, a_vertex, order, rule: QuadratureRule = STRANG_FIX_4):
    """Element stiffness with the linearly interpolated coefficient ``a_vertex``."""
    t = stiffness_tensor(coords, order, rule)
    a = np.asarray(a_vertex, dtype=float).reshape(len(t), 3)
    out = np.einsum("ev,evij->eij", a, t)
    return out[0] if np.ndim(coords) == 2 else out


def local_load(coords, f_vertex, order, rule: QuadratureRule = STRANG_FIX_4):
    """Element load vector with the linearly interpolated forcing ``f_vertex``."""
    t = load_tensor(coords, order, rule)
    f = np.asarray(f_vertex, dtype=float).reshape(len(t), 3)
    out = np.einsum("ev,evi->ei", f, t)
    return out[0] if np.ndim(coords) == 2 else out


@dataclass(frozen=True, eq=False)
class LevelSystem:
    """Everything about one (level, order) pair that does not depend on the realization."""

    mesh: TriMesh
    dofmap: DofMap
    shape_id: np.ndarray = field(repr=False)  # element -> distinct shape index
    stiff: np.ndarray = field(repr=False)  # (n_shapes, 3, nb*nb)
    load: np.ndarray = field(repr=False)  # (n_shapes, 3, nb)
    shape_members: tuple = field(repr=False)  # element indices per shape
    pattern: object = field(repr=False)
    matrix_slot: np.ndarray = field(repr=False)  # (E*nb*nb,), nnz for dropped entries
    load_slot: np.ndarray = field(repr=False)  # (E*nb,), n_interior for dropped entries

    @property
    def n_interior(self) -> int:
        return self.dofmap.n_interior

    def assemble(self, a_vertex, f_vertex):
        a_vertex = np.asarray(a_vertex, dtype=float)
        f_vertex = np.asarray(f_vertex, dtype=float)
        if not (np.all(np.isfinite(a_vertex)) and np.all(np.isfinite(f_vertex))):
            raise NumericError("coefficient or forcing contains NaN or Inf")
        if a_vertex.size and a_vertex.min() <= 0.0:
            raise InvalidCoefficientError(
                f"coefficient must be positive at every vertex (min {a_vertex.min():g})"
            )
        tri = self.mesh.triangles
        n_el = len(tri)
        nb = self.load.shape[-1]
        k_el = np.empty((n_el, nb * nb))
        f_el = np.empty((n_el, nb))
        for s, members in enumerate(self.shape_members):
            verts = tri[members]
            k_el[members] = a_vertex[verts] @ self.stiff[s]
            f_el[members] = f_vertex[verts] @ self.load[s]
        nnz = self.pattern.nnz
        values = np.bincount(self.matrix_slot, weights=k_el.ravel(), minlength=nnz + 1)[:nnz]
        rhs = np.bincount(self.load_slot, weights=f_el.ravel(), minlength=self.n_interior + 1)
        matrix = SparseSpd(self.pattern.n, self.pattern.row_ptr, self.pattern.col_idx, values)
        return matrix, rhs[: self.n_interior]

    def load_exact(self, f, rule: QuadratureRule | None = None) -> np.ndarray:
        """Load vector ``int f phi_i`` for a callable ``f(x, y)`` using a high-order rule."""
        rule = rule or collapsed_gauss(6)
        coords = self.mesh.vertices[self.mesh.triangles]
        _, det = _geometry(coords)
        xq = np.einsum("qv,evk->eqk", rule.barycentric, coords)
        fq = f(xq[..., 0], xq[..., 1])
        phi = shape_values(self.dofmap.order, rule.barycentric)
        f_el = np.einsum("e,q,eq,qi->ei", det, rule.weights, fq, phi)
        rhs = np.bincount(self.load_slot, weights=f_el.ravel(), minlength=self.n_interior + 1)
        return rhs[: self.n_interior]


@lru_cache(maxsize=None)
def level_system(level: int, order: int) -> LevelSystem:
    mesh = build_mesh(level)
    dofmap = build_dofmap(mesh, order)
    nb = dofmap.cell_dofs.shape[1]
    coords = mesh.vertices[mesh.triangles]

    # distinct element shapes, keyed by exact edge vectors in lattice units
    lat = mesh.lattice[mesh.triangles]
    key = np.concatenate([lat[:, 1] - lat[:, 0], lat[:, 2] - lat[:, 0]], axis=1)
    shapes, shape_id = np.unique(key, axis=0, return_inverse=True)
    shape_id = shape_id.ravel()
    members = tuple(np.flatnonzero(shape_id == s) for s in range(len(shapes)))
    reps = np.array([m[0] for m in members])
    stiff = stiffness_tensor(coords[reps], order).reshape(len(reps), 3, nb * nb)
    load = load_tensor(coords[reps], order)

    interior = dofmap.interior_index[dofmap.cell_dofs]  # (E, nb)
    rows = np.repeat(interior, nb, axis=1).ravel()
    cols = np.tile(interior, (1, nb)).ravel()
    keep = (rows >= 0) & (cols >= 0)
    n = dofmap.n_interior
    pattern = sparsity_pattern(rows[keep], cols[keep], n)
    matrix_slot = np.full(rows.size, pattern.nnz, dtype=np.int64)
    matrix_slot[keep] = pattern.slot
    load_slot = np.where(interior >= 0, interior, n).ravel()

    return LevelSystem(
        mesh=mesh,
        dofmap=dofmap,
        shape_id=shape_id,
        stiff=stiff,
        load=load,
        shape_members=members,
        pattern=pattern,
        matrix_slot=matrix_slot,
        load_slot=load_slot,
    )


@dataclass(frozen=True, eq=False)
class FemSolution:
    dofmap: DofMap
    coeffs: np.ndarray
    iterations: int | None = None

    @property
    def level(self) -> int:
        return self.dofmap.level

    @property
    def order(self) -> int:
        return self.dofmap.order


def assemble(mesh: TriMesh, dofmap: DofMap, real: FieldRealization):
    """Interior-dof Galerkin matrix and load vector for one realization."""
    if real.level != mesh.level or dofmap.level != mesh.level:
        raise ValueError("realization, mesh and dofmap must share a level")
    return level_system(mesh.level, dofmap.order).assemble(real.a_vertex, real.f_vertex)


def solve_tilde_u(mesh, dofmap, real, tol=1e-10, max_iter=None, forcing=None) -> FemSolution:
    """Solve the interpolated-coefficient Galerkin system.

    ``forcing`` replaces the interpolated load by ``int f phi_i`` for a
    callable ``f(x, y)``; this is the exact-load variant for constant ``a``.
    """
    system = level_system(mesh.level, dofmap.order)
    if real.level != mesh.level:
        raise ValueError("realization level does not match mesh level")
    matrix, rhs = system.assemble(real.a_vertex, real.f_vertex)
    if forcing is not None:
        rhs = system.load_exact(forcing)
    coeffs = np.zeros(dofmap.n_dofs)
    iterations = 0
    if system.n_interior:
        counter = [0]

        def count(k, x):
            counter[0] = k

        x = cg_solve(matrix, rhs, tol=tol, max_iter=max_iter, callback=count)
        coeffs[~dofmap.boundary] = x
        iterations = counter[0]
    if not np.all(np.isfinite(coeffs)):
        raise NumericError("solution contains NaN or Inf")
    return FemSolution(dofmap=dofmap, coeffs=coeffs, iterations=iterations)


@lru_cache(maxsize=None)
def _seminorm_data(level: int, order: int):
    mesh = build_mesh(level)
    rule = EDGE_MIDPOINT if order == 1 else STRANG_FIX_4
    coords = mesh.vertices[mesh.triangles]
    grads, det = _physical_grads(coords, order, rule)
    return grads, det[:, None] * rule.weights[None, :]


def h1_seminorm_sq(sol: FemSolution, mesh: TriMesh) -> float:
    """``int |grad u_h|^2`` over the square, integrated exactly element by element."""
    if sol.level != mesh.level:
        raise ValueError("solution and mesh levels differ")
    grads, wdet = _seminorm_data(mesh.level, sol.order)
    u_el = sol.coeffs[sol.dofmap.cell_dofs]
    g = np.einsum("eb,eqbk->eqk", u_el, grads)
    return float(np.einsum("eq,eqk,eqk->", wdet, g, g))


def h1_error(sol: FemSolution, mesh: TriMesh, grad_exact, u_exact=None, n_points=6):
    """H1 seminorm of ``u_h - u`` (full H1 norm if ``u_exact`` is given)."""
    rule = collapsed_gauss(n_points)
    coords = mesh.vertices[mesh.triangles]
    grads, det = _physical_grads(coords, sol.order, rule)
    u_el = sol.coeffs[sol.dofmap.cell_dofs]
    xq = np.einsum("qv,evk->eqk", rule.barycentric, coords)
    gx, gy = grad_exact(xq[..., 0], xq[..., 1])
    g = np.einsum("eb,eqbk->eqk", u_el, grads)
    err = (g[..., 0] - gx) ** 2 + (g[..., 1] - gy) ** 2
    if u_exact is not None:
        vals = u_el @ shape_values(sol.order, rule.barycentric).T
        err = err + (vals - u_exact(xq[..., 0], xq[..., 1])) ** 2
    return float(np.sqrt(np.einsum("e,q,eq->", det, rule.weights, err)))


class Functional:
    """Output functional ``Q(u_h)``.

    ``lipschitz`` holds ``(kappa_q, p_prime)`` of the local Lipschitz bound
    ``|Q(w1) - Q(w2)| <= kappa_q max(|w1|, |w2|)**p_prime |w1 - w2|`` in H1.
    """

    name = "custom"
    lipschitz: tuple[float, float] | None = None

    def evaluate(self, sol: FemSolution, mesh: TriMesh) -> float:
        raise NotImplementedError


class H1SeminormSquared(Functional):
    name = "h1_seminorm_sq"
    lipschitz = (2.0, 1.0)

    def evaluate(self, sol, mesh):
        return h1_seminorm_sq(sol, mesh)


@dataclass(frozen=True)
class ConstantFunctional(Functional):
    value: float = 0.0
    name = "constant"
    lipschitz = (0.0, 0.0)

    def evaluate(self, sol, mesh):
        return float(self.value)


def evaluate_functional(fnl: Functional, sol: FemSolution, mesh: TriMesh) -> float:
    out = float(fnl.evaluate(sol, mesh))
    if not np.isfinite(out):
        raise NumericError(f"functional {fnl.name!r} returned {out}")
    return out

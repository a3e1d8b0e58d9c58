"""Nested uniform triangulations of the unit square and Lagrange dof maps.

Level ``n`` has ``2**n`` cells per side. Every cell is cut along its
anti-diagonal (top-left to bottom-right corner), so a level-``n`` triangle is
exactly the union of four level-``n+1`` triangles.

Coordinates are kept as integers on the ``2**n`` lattice; floating point
coordinates are derived on demand.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ResourceLimitError

MAX_LEVEL = 12


@dataclass(frozen=True, eq=False)
class TriMesh:
    level: int
    lattice: np.ndarray  # (n_vertices, 2) integer coordinates, scale 2**level
    triangles: np.ndarray  # (n_triangles, 3) vertex indices, counterclockwise
    edges: np.ndarray  # (n_edges, 2) vertex indices, smaller index first
    boundary_vertex: np.ndarray
    boundary_edge: np.ndarray
    triangle_edges: np.ndarray = field(repr=False)  # (n_triangles, 3), edge opposite local vertex i

    @property
    def cells_per_side(self) -> int:
        return 2**self.level

    @property
    def h(self) -> float:
        return 2.0**-self.level

    @property
    def vertices(self) -> np.ndarray:
        return self.lattice / float(self.cells_per_side)

    @property
    def n_vertices(self) -> int:
        return len(self.lattice)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def vertex_index(self, i, j):
        """Index of the vertex at lattice position ``(i, j)``."""
        return np.asarray(i) * (self.cells_per_side + 1) + np.asarray(j)


@dataclass(frozen=True, eq=False)
class DofMap:
    """Continuous Lagrange degrees of freedom of order 1 or 2 over a mesh.

    Nodes live on the lattice of scale ``order * 2**level``; for P2 this is the
    vertex lattice of the next finer mesh. Dofs are numbered lexicographically
    by node coordinate, and interior dofs keep that relative order in the
    reduced system.
    """

    level: int
    order: int
    lattice: np.ndarray  # (n_dofs, 2) integer node coordinates, scale order * 2**level
    cell_dofs: np.ndarray  # (n_triangles, 3 or 6) dof indices per triangle
    boundary: np.ndarray
    interior_index: np.ndarray  # row in reduced system, -1 for boundary dofs

    @property
    def scale(self) -> int:
        return self.order * 2**self.level

    @property
    def n_dofs(self) -> int:
        return len(self.lattice)

    @property
    def n_interior(self) -> int:
        return int(np.count_nonzero(~self.boundary))

    @property
    def dof_node(self) -> np.ndarray:
        return self.lattice / float(self.scale)

    @property
    def interior_dofs(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary)


def _check_level(level: int, max_level: int) -> None:
    if level < 0:
        raise ValueError(f"level must be nonnegative, got {level}")
    if level > max_level:
        raise ResourceLimitError(f"level {level} exceeds configured maximum {max_level}")


def _grid_lattice(side: int) -> np.ndarray:
    i, j = np.meshgrid(np.arange(side + 1), np.arange(side + 1), indexing="ij")
    return np.column_stack([i.ravel(), j.ravel()]).astype(np.int64)


def build_mesh(level: int, max_level: int = MAX_LEVEL) -> TriMesh:
    _check_level(level, max_level)
    return _build_mesh(level)


@lru_cache(maxsize=None)
def _build_mesh(level: int) -> TriMesh:
    s = 2**level
    lattice = _grid_lattice(s)

    ci, cj = np.meshgrid(np.arange(s), np.arange(s), indexing="ij")
    ci, cj = ci.ravel(), cj.ravel()

    def vid(i, j):
        return i * (s + 1) + j

    bl, br = vid(ci, cj), vid(ci + 1, cj)
    tl, tr = vid(ci, cj + 1), vid(ci + 1, cj + 1)
    lower = np.column_stack([bl, br, tl])
    upper = np.column_stack([tr, tl, br])
    triangles = np.empty((2 * s * s, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    # local edge k is opposite local vertex k
    local = np.stack(
        [triangles[:, [1, 2]], triangles[:, [2, 0]], triangles[:, [0, 1]]], axis=1
    ).reshape(-1, 2)
    local = np.sort(local, axis=1)
    edges, inverse = np.unique(local, axis=0, return_inverse=True)
    triangle_edges = inverse.reshape(-1, 3)

    on_bnd = (lattice == 0) | (lattice == s)
    boundary_vertex = on_bnd.any(axis=1)
    a, b = lattice[edges[:, 0]], lattice[edges[:, 1]]
    boundary_edge = ((a == b) & ((a == 0) | (a == s))).any(axis=1)

    for arr in (lattice, triangles, edges, boundary_vertex, boundary_edge, triangle_edges):
        arr.setflags(write=False)
    return TriMesh(
        level=level,
        lattice=lattice,
        triangles=triangles,
        edges=edges,
        boundary_vertex=boundary_vertex,
        boundary_edge=boundary_edge,
        triangle_edges=triangle_edges,
    )


def build_dofmap(mesh: TriMesh, order: int) -> DofMap:
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order}")
    return _build_dofmap(mesh.level, order)


@lru_cache(maxsize=None)
def _build_dofmap(level: int, order: int) -> DofMap:
    mesh = _build_mesh(level)
    scale = order * 2**level
    lattice = _grid_lattice(scale)

    def node_id(xy):
        return xy[..., 0] * (scale + 1) + xy[..., 1]

    corners = mesh.lattice[mesh.triangles] * order
    if order == 1:
        cell_dofs = node_id(corners)
    else:
        # P2 local order: 3 vertices, then midpoints of the edges opposite vertices 0, 1, 2
        mids = np.stack(
            [
                (corners[:, 1] + corners[:, 2]) // 2,
                (corners[:, 2] + corners[:, 0]) // 2,
                (corners[:, 0] + corners[:, 1]) // 2,
            ],
            axis=1,
        )
        cell_dofs = np.concatenate([node_id(corners), node_id(mids)], axis=1)

    boundary = ((lattice == 0) | (lattice == scale)).any(axis=1)
    interior_index = np.full(len(lattice), -1, dtype=np.int64)
    interior_index[~boundary] = np.arange(np.count_nonzero(~boundary))

    for arr in (lattice, cell_dofs, boundary, interior_index):
        arr.setflags(write=False)
    return DofMap(
        level=level,
        order=order,
        lattice=lattice,
        cell_dofs=cell_dofs.astype(np.int64),
        boundary=boundary,
        interior_index=interior_index,
    )


def parent_vertex_indices(fine: TriMesh, coarse: TriMesh) -> np.ndarray:
    """Fine-mesh index of every coarse vertex, for meshes one level apart."""
    if fine.level != coarse.level + 1:
        raise ValueError(
            f"expected fine.level == coarse.level + 1, got {fine.level} and {coarse.level}"
        )
    return vertex_restriction(fine.level, coarse.level)


@lru_cache(maxsize=None)
def vertex_restriction(fine_level: int, coarse_level: int) -> np.ndarray:
    """Map coarse vertex index -> fine vertex index between any two nested levels."""
    if coarse_level > fine_level or coarse_level < 0:
        raise ValueError(f"cannot restrict level {fine_level} to level {coarse_level}")
    factor = 2 ** (fine_level - coarse_level)
    coarse = _build_mesh(coarse_level)
    fine_side = 2**fine_level
    idx = coarse.lattice[:, 0] * factor * (fine_side + 1) + coarse.lattice[:, 1] * factor
    idx.setflags(write=False)
    return idx


def dump_mesh(mesh: TriMesh, path) -> None:
    """Write the debugging text format: ``v x y`` per vertex, ``t i j k`` per triangle."""
    with open(path, "w") as fh:
        for x, y in mesh.vertices:
            fh.write(f"v {x!r} {y!r}\n")
        for i, j, k in mesh.triangles:
            fh.write(f"t {i} {j} {k}\n")

"""Conforming triangulations of the square (-1, 1)^2.

Meshes are immutable; the refinement routines build and return new meshes.
Midpoint vertices are keyed by the index of the parent edge, so refinement
never hashes floating-point coordinates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "Mesh",
    "MeshStats",
    "initial_square_mesh",
    "red_refine",
    "rgb_refine",
    "mark_circle_intersecting",
    "mesh_stats",
    "uniform_mesh",
    "graded_sequence",
    "write_vtk",
]


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangulation with counterclockwise triangles.

    ``dirichlet`` flags the vertices on the boundary of the domain (the whole
    boundary is Dirichlet in this package).
    """

    vertices: np.ndarray
    triangles: np.ndarray
    dirichlet: np.ndarray = field(default=None)

    def __post_init__(self):
        vertices = np.ascontiguousarray(self.vertices, dtype=float)
        triangles = np.ascontiguousarray(self.triangles, dtype=np.int64)
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "triangles", triangles)
        if self.dirichlet is None:
            mask = np.zeros(len(vertices), dtype=bool)
            mask[np.unique(self.boundary_edges)] = True
            object.__setattr__(self, "dirichlet", mask)
        vertices.flags.writeable = False
        triangles.flags.writeable = False

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def _edge_data(self):
        # local edge k joins local vertices k and (k + 1) % 3
        tri = self.triangles
        pairs = np.stack([tri, np.roll(tri, -1, axis=1)], axis=2).reshape(-1, 2)
        pairs = np.sort(pairs, axis=1)
        edges, inverse, counts = np.unique(
            pairs, axis=0, return_inverse=True, return_counts=True
        )
        return edges, inverse.reshape(-1, 3), counts

    @property
    def edges(self) -> np.ndarray:
        """Unique edges as sorted vertex pairs, ordered lexicographically."""
        return self._edge_data[0]

    @property
    def triangle_edges(self) -> np.ndarray:
        """(T, 3) edge indices; column k is the edge from local vertex k to k+1."""
        return self._edge_data[1]

    @property
    def edge_use_count(self) -> np.ndarray:
        return self._edge_data[2]

    @property
    def boundary_edges(self) -> np.ndarray:
        return self.edges[self.edge_use_count == 1]

    @cached_property
    def free(self) -> np.ndarray:
        """Indices of the non-Dirichlet vertices."""
        return np.flatnonzero(~self.dirichlet)

    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @property
    def areas(self) -> np.ndarray:
        return np.abs(self.signed_areas)

    @cached_property
    def grads(self) -> np.ndarray:
        """(T, 3, 2) constant gradients of the nodal basis functions."""
        p = self.vertices[self.triangles]
        # gradient of barycentric coordinate i is rot90(opposite edge) / (2|T|)
        opp = np.roll(p, -2, axis=1) - np.roll(p, -1, axis=1)
        g = np.stack([-opp[..., 1], opp[..., 0]], axis=-1)
        return g / (2.0 * self.signed_areas)[:, None, None]

    @cached_property
    def diameters(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        lengths = np.linalg.norm(p - np.roll(p, -1, axis=1), axis=2)
        return lengths.max(axis=1)

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    def min_angle(self) -> float:
        """Smallest interior angle in radians."""
        p = self.vertices[self.triangles]
        a = np.roll(p, -1, axis=1) - p
        b = np.roll(p, -2, axis=1) - p
        cos = np.einsum("tkd,tkd->tk", a, b) / (
            np.linalg.norm(a, axis=2) * np.linalg.norm(b, axis=2)
        )
        return float(np.arccos(np.clip(cos, -1.0, 1.0)).min())

    def is_conforming(self) -> bool:
        """True when no edge is shared by more than two triangles and no
        vertex lies in the interior of an edge it does not belong to."""
        if self.edge_use_count.max(initial=0) > 2:
            return False
        # a hanging node shows up as an interior edge used only once
        pts = self.vertices[self.boundary_edges]
        x, y = pts[..., 0], pts[..., 1]
        on_side = ((np.abs(x) == 1.0).all(axis=1) & (x[:, 0] == x[:, 1])) | (
            (np.abs(y) == 1.0).all(axis=1) & (y[:, 0] == y[:, 1])
        )
        return bool(on_side.all())


@dataclass(frozen=True)
class MeshStats:
    h_max: float
    h_min: float
    h_avg: float
    beta: float
    n_triangles: int
    n_vertices: int


def initial_square_mesh() -> Mesh:
    """Two triangles split along the diagonal from (-1,-1) to (1,1)."""
    vertices = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
    triangles = np.array([[0, 1, 2], [0, 2, 3]])
    return Mesh(vertices, triangles)


def _midpoints(mesh: Mesh, edge_ids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Append midpoints of the given edges; returns (vertices, edge -> vertex map)."""
    edge_vertex = np.full(len(mesh.edges), -1, dtype=np.int64)
    edge_vertex[edge_ids] = mesh.n_vertices + np.arange(len(edge_ids))
    e = mesh.edges[edge_ids]
    mids = 0.5 * (mesh.vertices[e[:, 0]] + mesh.vertices[e[:, 1]])
    return np.vstack([mesh.vertices, mids]), edge_vertex


def _new_dirichlet(mesh: Mesh, edge_ids: np.ndarray) -> np.ndarray:
    on_boundary = mesh.edge_use_count[edge_ids] == 1
    return np.concatenate([mesh.dirichlet, on_boundary])


def red_refine(mesh: Mesh) -> Mesh:
    """Split every triangle into four congruent children."""
    all_edges = np.arange(len(mesh.edges))
    vertices, edge_vertex = _midpoints(mesh, all_edges)
    m = edge_vertex[mesh.triangle_edges]
    a, b, c = mesh.triangles.T
    mab, mbc, mca = m.T
    children = np.stack(
        [
            np.stack([a, mab, mca], axis=1),
            np.stack([mab, b, mbc], axis=1),
            np.stack([mca, mbc, c], axis=1),
            np.stack([mab, mbc, mca], axis=1),
        ],
        axis=1,
    ).reshape(-1, 3)
    return Mesh(vertices, children, _new_dirichlet(mesh, all_edges))


def _reference_edges(mesh: Mesh) -> np.ndarray:
    """Local index of the longest edge of each triangle (first on ties)."""
    p = mesh.vertices[mesh.triangles]
    lengths = np.linalg.norm(np.roll(p, -1, axis=1) - p, axis=2)
    # round away floating noise so congruent edges tie deterministically
    return np.argmax(np.round(lengths, 12), axis=1)


def rgb_refine(mesh: Mesh, marked) -> Mesh:
    """Red-refine the marked triangles and close with green/blue bisections.

    The reference edge of every triangle is its longest edge. Any triangle
    with a refined edge also has its reference edge refined, which is what
    makes the green and blue patterns available.
    """
    marked = np.asarray(sorted(set(int(t) for t in marked)), dtype=np.int64)
    if marked.size == 0:
        return mesh
    t2e = mesh.triangle_edges
    ref = _reference_edges(mesh)
    rows = np.arange(mesh.n_triangles)
    edge_marked = np.zeros(len(mesh.edges), dtype=bool)
    edge_marked[t2e[marked].ravel()] = True
    while True:
        touched = edge_marked[t2e].any(axis=1)
        ref_ids = t2e[rows[touched], ref[touched]]
        if edge_marked[ref_ids].all():
            break
        edge_marked[ref_ids] = True

    edge_ids = np.flatnonzero(edge_marked)
    vertices, edge_vertex = _midpoints(mesh, edge_ids)
    new_tris = []
    for t, tri in enumerate(mesh.triangles):
        flags = edge_marked[t2e[t]]
        n_marked = int(flags.sum())
        if n_marked == 0:
            new_tris.append(tri)
            continue
        # rotate so that the reference edge joins local vertices 0 and 1
        r = int(ref[t])
        a, b, c = (int(tri[(r + i) % 3]) for i in range(3))
        eab, ebc, eca = (int(t2e[t, (r + i) % 3]) for i in range(3))
        mab = edge_vertex[eab]
        if n_marked == 3:
            mbc, mca = edge_vertex[ebc], edge_vertex[eca]
            new_tris += [(a, mab, mca), (mab, b, mbc), (mca, mbc, c), (mab, mbc, mca)]
        elif n_marked == 1:
            new_tris += [(a, mab, c), (mab, b, c)]
        elif edge_marked[ebc]:
            mbc = edge_vertex[ebc]
            new_tris += [(a, mab, c), (mab, b, mbc), (mab, mbc, c)]
        else:
            mca = edge_vertex[eca]
            new_tris += [(a, mab, mca), (mca, mab, c), (mab, b, c)]
    return Mesh(vertices, np.array(new_tris, dtype=np.int64), _new_dirichlet(mesh, edge_ids))


def _point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    s = np.clip(np.einsum("td,td->t", p - a, ab) / np.einsum("td,td->t", ab, ab), 0.0, 1.0)
    return np.linalg.norm(a + s[:, None] * ab - p, axis=1)


def mark_circle_intersecting(mesh: Mesh, r: float, center=(0.0, 0.0)) -> set[int]:
    """Triangles whose closed hull meets the circle of radius ``r``.

    A closed triangle meets the circle exactly when its minimal distance to
    the center is at most ``r`` and its maximal (vertex) distance at least ``r``.
    """
    center = np.asarray(center, dtype=float)
    p = mesh.vertices[mesh.triangles] - center
    dmax = np.linalg.norm(p, axis=2).max(axis=1)
    origin = np.zeros((mesh.n_triangles, 2))
    dmin = np.min(
        [_point_segment_distance(origin, p[:, k], p[:, (k + 1) % 3]) for k in range(3)],
        axis=0,
    )
    # the center inside the triangle makes the minimal distance zero
    cross = [
        p[:, k, 0] * p[:, (k + 1) % 3, 1] - p[:, k, 1] * p[:, (k + 1) % 3, 0]
        for k in range(3)
    ]
    inside = np.all(np.array(cross) >= 0.0, axis=0)
    dmin = np.where(inside, 0.0, dmin)
    hit = (dmin <= r) & (dmax >= r)
    return set(np.flatnonzero(hit).tolist())


def mesh_stats(mesh: Mesh) -> MeshStats:
    diam = mesh.diameters
    h_min = float(diam.min())
    h_avg = mesh.n_triangles ** -0.5
    return MeshStats(
        h_max=float(diam.max()),
        h_min=h_min,
        h_avg=h_avg,
        beta=math.log(h_min) / math.log(h_avg),
        n_triangles=mesh.n_triangles,
        n_vertices=mesh.n_vertices,
    )


def uniform_mesh(level: int) -> Mesh:
    """The ``level``-fold red refinement of the initial square mesh."""
    mesh = initial_square_mesh()
    for _ in range(level):
        mesh = red_refine(mesh)
    return mesh


def graded_sequence(levels: int, r: float = 0.5, rounds_per_level: int = 1) -> list[Mesh]:
    """Meshes T_0, ..., T_levels refined towards the circle of radius ``r``."""
    meshes = [initial_square_mesh()]
    for _ in range(levels):
        mesh = meshes[-1]
        for _ in range(rounds_per_level):
            mesh = rgb_refine(mesh, mark_circle_intersecting(mesh, r))
        meshes.append(mesh)
    return meshes


def write_vtk(path, mesh: Mesh, point_data=None, cell_data=None, title="proxtv") -> None:
    """Write a legacy ASCII VTK unstructured grid.

    ``point_data`` and ``cell_data`` map names to arrays with one scalar or
    one 2-vector per vertex/triangle.
    """
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {mesh.n_vertices} double")
    lines += [f"{x:.17g} {y:.17g} 0" for x, y in mesh.vertices]
    lines.append(f"CELLS {mesh.n_triangles} {4 * mesh.n_triangles}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    lines.append(f"CELL_TYPES {mesh.n_triangles}")
    lines += ["5"] * mesh.n_triangles

    def _block(data):
        out = []
        for name, values in data.items():
            values = np.asarray(values, dtype=float)
            if values.ndim == 1:
                out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
                out += [f"{v:.17g}" for v in values]
            else:
                out.append(f"VECTORS {name} double")
                out += [f"{v[0]:.17g} {v[1]:.17g} 0" for v in values]
        return out

    if point_data:
        lines.append(f"POINT_DATA {mesh.n_vertices}")
        lines += _block(point_data)
    if cell_data:
        lines.append(f"CELL_DATA {mesh.n_triangles}")
        lines += _block(cell_data)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")

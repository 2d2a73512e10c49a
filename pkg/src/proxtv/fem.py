"""P1 and elementwise-constant vector spaces on a triangulation.

Scalar fields are nodal coefficient vectors of length ``n_vertices`` with
zeros pinned on Dirichlet vertices; vector fields are ``(n_triangles, 2)``
arrays.  Systems are assembled over the free vertices only.
"""
from __future__ import annotations

from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .linalg import CholeskyFactor
from .mesh import Mesh

__all__ = ["FESpace", "dunavant6", "barycentric_coordinates", "circle_interface"]

_LOCAL_MASS = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0


def dunavant6():
    """Six-point rule of degree 4 on the reference triangle.

    Returns ``(barycentric points (6, 3), weights (6,))``; weights sum to 1.
    """
    a, b = 0.445948490915965, 0.091576213509771
    wa, wb = 0.223381589678011, 0.109951743655322
    pts = np.array(
        [
            [1 - 2 * a, a, a], [a, 1 - 2 * a, a], [a, a, 1 - 2 * a],
            [1 - 2 * b, b, b], [b, 1 - 2 * b, b], [b, b, 1 - 2 * b],
        ]
    )
    w = np.array([wa, wa, wa, wb, wb, wb])
    return pts, w / w.sum()


# barycentric corners of the four red children of the reference triangle
_RED_CHILDREN = np.array(
    [
        [[1, 0, 0], [0.5, 0.5, 0], [0.5, 0, 0.5]],
        [[0.5, 0.5, 0], [0, 1, 0], [0, 0.5, 0.5]],
        [[0.5, 0, 0.5], [0, 0.5, 0.5], [0, 0, 1]],
        [[0.5, 0.5, 0], [0, 0.5, 0.5], [0.5, 0, 0.5]],
    ]
)


def _quadrature_rule(subdivisions: int):
    """Barycentric points and weights of the degree-4 rule on 4**subdivisions children."""
    pts, w = dunavant6()
    for _ in range(subdivisions):
        pts = np.einsum("cij,qi->cqj", _RED_CHILDREN, pts).reshape(-1, 3)
        w = np.tile(w, 4) / 4.0
    return pts, w


def barycentric_coordinates(mesh: Mesh, tri_ids, points) -> np.ndarray:
    p = mesh.vertices[mesh.triangles[tri_ids]]
    v1 = p[:, 1] - p[:, 0]
    v2 = p[:, 2] - p[:, 0]
    d = np.asarray(points) - p[:, 0]
    det = v1[:, 0] * v2[:, 1] - v1[:, 1] * v2[:, 0]
    l1 = (d[:, 0] * v2[:, 1] - d[:, 1] * v2[:, 0]) / det
    l2 = (v1[:, 0] * d[:, 1] - v1[:, 1] * d[:, 0]) / det
    return np.stack([1 - l1 - l2, l1, l2], axis=1)


class FESpace:
    """Assembly and inner products for P1 (Dirichlet) and P0-vector fields."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        self.areas = mesh.areas
        self.grads = mesh.grads
        self.free = mesh.free

    # -- assembly ---------------------------------------------------------
    def _scatter(self, local: np.ndarray) -> sp.csr_matrix:
        tri = self.mesh.triangles
        rows = np.repeat(tri, 3, axis=1).ravel()
        cols = np.tile(tri, (1, 3)).ravel()
        n = self.mesh.n_vertices
        return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))

    def restrict(self, A) -> sp.csr_matrix:
        f = self.free
        return sp.csr_matrix(A)[f][:, f]

    def mass_matrix(self, restrict_dirichlet: bool = False) -> sp.csr_matrix:
        M = self._scatter(self.areas[:, None, None] * _LOCAL_MASS)
        return self.restrict(M) if restrict_dirichlet else M

    @cached_property
    def M(self) -> sp.csr_matrix:
        return self.mass_matrix()

    @cached_property
    def M_free(self) -> sp.csr_matrix:
        return self.restrict(self.M)

    @cached_property
    def mass_factor(self) -> CholeskyFactor:
        return CholeskyFactor(self.M_free)

    def weighted_stiffness(self, C=None, scale: float = 1.0, restrict_dirichlet: bool = False):
        """``scale * sum_T |T| (C_T grad phi_j) . grad phi_i``; ``C=None`` is the identity."""
        g = self.grads
        if C is None:
            local = np.einsum("tid,tjd->tij", g, g)
        else:
            C = np.asarray(C, dtype=float)
            if C.shape != (self.mesh.n_triangles, 2, 2):
                raise ValueError("expected one 2x2 matrix per triangle")
            if np.abs(C - np.swapaxes(C, 1, 2)).max(initial=0.0) > 1e-14 * max(1.0, np.abs(C).max()):
                raise ValueError("coefficient matrices must be symmetric")
            local = np.einsum("tid,tde,tje->tij", g, C, g)
        K = self._scatter(scale * self.areas[:, None, None] * local)
        return self.restrict(K) if restrict_dirichlet else K

    # -- fields -----------------------------------------------------------
    def gradient(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        return np.einsum("tid,ti->td", self.grads, v[self.mesh.triangles])

    def gradient_transpose(self, y) -> np.ndarray:
        """Vector with entries ``sum_T |T| y_T . grad phi_i|_T`` over all vertices."""
        y = np.asarray(y, dtype=float)
        local = self.areas[:, None] * np.einsum("tid,td->ti", self.grads, y)
        return np.bincount(self.mesh.triangles.ravel(), local.ravel(), self.mesh.n_vertices)

    def extend(self, v_free) -> np.ndarray:
        """Embed free-vertex coefficients into a full vector with zero Dirichlet values."""
        v = np.zeros(self.mesh.n_vertices)
        v[self.free] = v_free
        return v

    def solve_mass(self, rhs_free) -> np.ndarray:
        return self.extend(self.mass_factor.solve(rhs_free))

    def divergence(self, y) -> np.ndarray:
        """Discrete divergence: the negative L2-adjoint of ``gradient`` on V_h."""
        return self.solve_mass(-self.gradient_transpose(y)[self.free])

    def load_vector(self, g, interface=None, subdivisions: int = 1, degree: int = 4) -> np.ndarray:
        """``b_i = int g phi_i`` with the degree-4 rule.

        ``interface(mesh) -> boolean mask`` selects triangles integrated on
        ``4**subdivisions`` children (used for discontinuous ``g``).
        """
        if degree < 1:
            raise ValueError("quadrature degree must be at least 1")
        mesh = self.mesh
        mask = np.zeros(mesh.n_triangles, dtype=bool) if interface is None else np.asarray(interface(mesh))
        b = np.zeros(mesh.n_vertices)
        for ids, level in ((np.flatnonzero(~mask), 0), (np.flatnonzero(mask), subdivisions)):
            if ids.size == 0:
                continue
            lam, w = _quadrature_rule(level)
            p = mesh.vertices[mesh.triangles[ids]]
            x = np.einsum("qi,tid->tqd", lam, p)
            gx = np.asarray(g(x.reshape(-1, 2)), dtype=float).reshape(len(ids), -1)
            local = self.areas[ids, None] * np.einsum("q,tq,qi->ti", w, gx, lam)
            b += np.bincount(mesh.triangles[ids].ravel(), local.ravel(), mesh.n_vertices)
        return b

    def l2_project(self, g, constrained: bool = False, **quad) -> np.ndarray:
        """L2 projection of a pointwise function onto P1.

        ``constrained=True`` projects onto the Dirichlet space V_h (the
        coefficients on Dirichlet vertices are zero), otherwise onto the full
        P1 space.
        """
        b = self.load_vector(g, **quad)
        if constrained:
            return self.solve_mass(b[self.free])
        return CholeskyFactor(self.M).solve(b)

    def interpolate(self, f) -> np.ndarray:
        return np.asarray(f(self.mesh.vertices), dtype=float)

    # -- norms ------------------------------------------------------------
    def inner_scalar(self, v, w) -> float:
        return float(np.asarray(v) @ (self.M @ np.asarray(w)))

    def inner_vector(self, y, x) -> float:
        return float(np.sum(self.areas * np.einsum("td,td->t", y, x)))

    def norm_scalar(self, v) -> float:
        return float(np.sqrt(max(self.inner_scalar(v, v), 0.0)))

    def norm_vector(self, y) -> float:
        return float(np.sqrt(self.inner_vector(y, y)))

    def product_norm(self, y, v) -> float:
        return float(np.hypot(self.norm_vector(y), self.norm_scalar(v)))

    def evaluate(self, v, tri_ids, points) -> np.ndarray:
        lam = barycentric_coordinates(self.mesh, tri_ids, points)
        return np.einsum("ti,ti->t", lam, np.asarray(v)[self.mesh.triangles[tri_ids]])

    def l2_distance(self, v, f, interface=None, subdivisions: int = 1) -> float:
        """``||v - f||_{L2}`` for P1 ``v`` and a pointwise function ``f``."""
        mesh = self.mesh
        mask = np.zeros(mesh.n_triangles, dtype=bool) if interface is None else np.asarray(interface(mesh))
        total = 0.0
        v = np.asarray(v)
        for ids, level in ((np.flatnonzero(~mask), 0), (np.flatnonzero(mask), subdivisions)):
            if ids.size == 0:
                continue
            lam, w = _quadrature_rule(level)
            p = mesh.vertices[mesh.triangles[ids]]
            x = np.einsum("qi,tid->tqd", lam, p)
            fx = np.asarray(f(x.reshape(-1, 2)), dtype=float).reshape(len(ids), -1)
            vx = np.einsum("qi,ti->tq", lam, v[mesh.triangles[ids]])
            total += float(np.sum(self.areas[ids] * ((vx - fx) ** 2 @ w)))
        return float(np.sqrt(total))


def circle_interface(r: float, center=(0.0, 0.0)):
    """Mask factory for triangles crossing the circle of radius ``r``."""
    from .mesh import mark_circle_intersecting

    def mask(mesh: Mesh) -> np.ndarray:
        out = np.zeros(mesh.n_triangles, dtype=bool)
        out[list(mark_circle_intersecting(mesh, r, center))] = True
        return out

    return mask

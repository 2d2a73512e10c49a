"""Problem data for the discrete regularized ROF model."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Union

import numpy as np

from .fem import FESpace, circle_interface
from .mesh import Mesh
from .prox import HuberParams

__all__ = ["ProblemParams", "ROFProblem", "PrimalDualState", "disc_indicator"]


def disc_indicator(r: float = 0.5):
    """The characteristic function of the open disc of radius ``r`` at the origin."""

    def g(x):
        x = np.asarray(x, dtype=float)
        return (np.linalg.norm(x, axis=-1) < r).astype(float)

    g.radius = r
    return g


@dataclass(frozen=True)
class ProblemParams:
    """``alpha`` weights the fidelity term, ``epsilon`` the Huber smoothing,
    ``gamma`` is the proximity parameter.

    ``datum`` is either a pointwise function or P1 coefficients.  A function
    with a ``radius`` attribute (see :func:`disc_indicator`) gets refined
    quadrature on the triangles crossing that circle.
    """

    alpha: float
    epsilon: float
    gamma: float = 1.0
    datum: Union[Callable, np.ndarray, None] = field(default=None, compare=False)

    def __post_init__(self):
        if not (self.alpha > 0 and self.epsilon > 0 and self.gamma > 0):
            raise ValueError("alpha, epsilon and gamma must be positive")

    @property
    def huber(self) -> HuberParams:
        return HuberParams(self.epsilon, self.gamma)

    def replace(self, **changes) -> "ProblemParams":
        from dataclasses import replace

        return replace(self, **changes)


@dataclass
class PrimalDualState:
    u: np.ndarray
    z: np.ndarray

    def __add__(self, other: "PrimalDualState") -> "PrimalDualState":
        return PrimalDualState(self.u + other.u, self.z + other.z)

    def scaled(self, s: float) -> "PrimalDualState":
        return PrimalDualState(s * self.u, s * self.z)

    def copy(self) -> "PrimalDualState":
        return PrimalDualState(self.u.copy(), self.z.copy())


class ROFProblem:
    """A mesh, its FE space, the parameters and the projected datum ``g_h``.

    ``g_h`` is the L2 projection onto the Dirichlet space V_h, i.e. it solves
    the restricted mass system with right-hand side ``int g phi_i``.
    """

    def __init__(self, mesh: Mesh, params: ProblemParams, space: Optional[FESpace] = None):
        self.mesh = mesh
        self.params = params
        self.space = space if space is not None else FESpace(mesh)

    def with_params(self, **changes) -> "ROFProblem":
        new = ROFProblem(self.mesh, self.params.replace(**changes), self.space)
        if "datum" not in changes and "g_h" in self.__dict__:
            new.__dict__["load"] = self.load
            new.__dict__["g_h"] = self.g_h
        return new

    @cached_property
    def load(self) -> np.ndarray:
        """``int g phi_i`` over all vertices."""
        g = self.params.datum
        if g is None:
            return np.zeros(self.mesh.n_vertices)
        if callable(g):
            radius = getattr(g, "radius", None)
            interface = circle_interface(radius) if radius is not None else None
            return self.space.load_vector(g, interface=interface)
        return self.space.M @ np.asarray(g, dtype=float)

    @cached_property
    def g_h(self) -> np.ndarray:
        return self.space.solve_mass(self.load[self.space.free])

    def zero_state(self) -> PrimalDualState:
        return PrimalDualState(np.zeros(self.mesh.n_vertices), np.zeros((self.mesh.n_triangles, 2)))

    @property
    def h(self) -> float:
        return float(self.mesh.diameters.max())

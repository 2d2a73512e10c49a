"""Closed-form solution of the disc benchmark and error norms against it."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..fem import FESpace, circle_interface

__all__ = ["ExactSolution", "exact_u", "exact_z", "l2_error_u"]


def exact_u(x, r: float = 0.5, alpha: float = 10.0, d: int = 2):
    """``max(0, 1 - d/(alpha r))`` on the open disc of radius ``r``, zero outside."""
    _check(r, alpha)
    x = np.asarray(x, dtype=float)
    height = max(0.0, 1.0 - d / (alpha * r))
    return np.where(np.linalg.norm(x, axis=-1) < r, height, 0.0)


def exact_z(x, r: float = 0.5, alpha: float = 10.0, d: int = 2):
    """``-(r / max(r, |x|)^2) min(1, alpha r / d) x``."""
    _check(r, alpha)
    x = np.asarray(x, dtype=float)
    s = np.maximum(r, np.linalg.norm(x, axis=-1))
    return -(r / s**2 * min(1.0, alpha * r / d))[..., None] * x


def _check(r, alpha):
    if not 0.0 < r < 1.0:
        raise ValueError("radius must lie in (0, 1)")
    if not alpha > 0.0:
        raise ValueError("alpha must be positive")


@dataclass(frozen=True)
class ExactSolution:
    r: float = 0.5
    alpha: float = 10.0
    d: int = 2

    def __post_init__(self):
        _check(self.r, self.alpha)

    def u(self, x):
        return exact_u(x, self.r, self.alpha, self.d)

    def z(self, x):
        return exact_z(x, self.r, self.alpha, self.d)


def l2_error_u(space: FESpace, u_h, exact: ExactSolution) -> float:
    """``||u_h - u||_{L2}`` with one level of subdivision on triangles crossing the disc boundary."""
    return space.l2_distance(u_h, exact.u, interface=circle_interface(exact.r), subdivisions=1)

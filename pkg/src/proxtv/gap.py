"""Discrete primal/dual energies and the primal-dual gap estimator.

All integrals are exact: the Huber density of an elementwise constant
gradient is integrated by the area, quadratic terms use the consistent mass
matrix.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .problem import PrimalDualState, ROFProblem
from .prox import huber_gradient, huber_value

__all__ = [
    "GapReport",
    "primal_energy",
    "dual_energy",
    "eta_gap_squared",
    "rho_primal_squared",
    "rho_dual_squared",
    "gap_report",
    "project_admissible",
    "dual_from_primal",
    "ADMISSIBILITY_TOL",
]

ADMISSIBILITY_TOL = 1e-12


@dataclass(frozen=True)
class GapReport:
    primal: float
    dual: float
    eta_squared: float
    admissibility: float
    rho_primal_squared: Optional[float] = None
    rho_dual_squared: Optional[float] = None

    @property
    def feasible(self) -> bool:
        return math.isfinite(self.dual)


def _fenchel_young(problem: ROFProblem, gv, y) -> float:
    """``int |gv|_eps - gv . y + eps/2 |y|^2``, nonnegative whenever ``|y| <= 1``."""
    eps = problem.params.epsilon
    dens = huber_value(gv, eps) - np.einsum("td,td->t", gv, y) + 0.5 * eps * np.einsum("td,td->t", y, y)
    return float(problem.space.areas @ dens)


def primal_energy(problem: ROFProblem, v) -> float:
    sp_, p = problem.space, problem.params
    tv = float(sp_.areas @ huber_value(sp_.gradient(v), p.epsilon))
    d = np.asarray(v) - problem.g_h
    return tv + 0.5 * p.alpha * sp_.inner_scalar(d, d)


def dual_energy(problem: ROFProblem, y, div=None) -> float:
    """Dual energy; ``-inf`` when some ``|y_T|`` exceeds 1 (beyond round-off)."""
    sp_, p = problem.space, problem.params
    y = np.asarray(y, dtype=float)
    if np.linalg.norm(y, axis=1).max(initial=0.0) > 1.0 + ADMISSIBILITY_TOL:
        return -math.inf
    div = sp_.divergence(y) if div is None else div
    w = div + p.alpha * problem.g_h
    return (
        -0.5 * p.epsilon * sp_.inner_vector(y, y)
        - sp_.inner_scalar(w, w) / (2.0 * p.alpha)
        + 0.5 * p.alpha * sp_.inner_scalar(problem.g_h, problem.g_h)
    )


def eta_gap_squared(problem: ROFProblem, v, y, div=None) -> float:
    """Gap estimator in its finite integral form; equals ``I(v) - D(y)`` for admissible ``y``."""
    sp_, p = problem.space, problem.params
    div = sp_.divergence(y) if div is None else div
    w = div - p.alpha * (np.asarray(v) - problem.g_h)
    return _fenchel_young(problem, sp_.gradient(v), y) + sp_.inner_scalar(w, w) / (2.0 * p.alpha)


def rho_primal_squared(problem: ROFProblem, v, reference: PrimalDualState) -> float:
    sp_, p = problem.space, problem.params
    d = np.asarray(v) - reference.u
    return _fenchel_young(problem, sp_.gradient(v), reference.z) + 0.5 * p.alpha * sp_.inner_scalar(d, d)


def rho_dual_squared(problem: ROFProblem, y, reference: PrimalDualState) -> float:
    sp_, p = problem.space, problem.params
    w = sp_.divergence(np.asarray(y) - reference.z)
    grad_u = sp_.gradient(reference.u)
    return _fenchel_young(problem, grad_u, y) + sp_.inner_scalar(w, w) / (2.0 * p.alpha)


def project_admissible(y) -> np.ndarray:
    """Radial projection ``y / max(1, |y|)`` onto the unit ball, per triangle."""
    y = np.asarray(y, dtype=float)
    return y / np.maximum(1.0, np.linalg.norm(y, axis=1))[:, None]


def gap_report(problem: ROFProblem, v, y, reference: Optional[PrimalDualState] = None,
               project: bool = False) -> GapReport:
    y = project_admissible(y) if project else np.asarray(y, dtype=float)
    div = problem.space.divergence(y)
    report = dict(
        primal=primal_energy(problem, v),
        dual=dual_energy(problem, y, div),
        eta_squared=eta_gap_squared(problem, v, y, div),
        admissibility=float(np.linalg.norm(y, axis=1).max(initial=0.0) - 1.0),
    )
    if reference is not None:
        report["rho_primal_squared"] = rho_primal_squared(problem, v, reference)
        report["rho_dual_squared"] = rho_dual_squared(problem, y, reference)
    return GapReport(**report)


def dual_from_primal(problem: ROFProblem, v) -> np.ndarray:
    """``D|.|_eps(grad v)`` per triangle; attains equality in Fenchel-Young."""
    return huber_gradient(problem.space.gradient(v), problem.params.epsilon)


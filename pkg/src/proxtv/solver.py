"""Semi-smooth Newton solvers for the discrete regularized ROF problem.

The prox-based method works on the primal-dual residual

    F(y, v) = (grad v - prox(grad v + gamma y),  alpha (v - g_h) - div_h y),

and computes each Newton direction from one SPD elliptic problem for the
primal increment followed by an explicit elementwise dual update.  The
gradient flow provides initial iterates and the primal method is the
canonical baseline Newton iteration on the Euler-Lagrange equation.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import gap as gapmod
from .linalg import DIRECT_SIZE_LIMIT, spd_solve
from .problem import PrimalDualState, ROFProblem
from .prox import huber_gradient, huber_newton_derivative, jacobian_algebra, prox_huber, prox_newton_derivative

log = logging.getLogger(__name__)

__all__ = [
    "Residual",
    "IterationRecord",
    "IterationHistory",
    "GradFlowConfig",
    "StrategyThresholds",
    "InvariantViolation",
    "residual",
    "newton_step",
    "apply_newton_derivative",
    "newton_consistency",
    "ssn_solve",
    "gradient_flow",
    "primal_ssn_solve",
    "primal_gradient",
    "flow_energy",
    "strategy_run",
    "flow_handoff",
    "STRATEGIES",
]

CG_OPTIONS = dict(rel_tol=1e-10, abs_tol=1e-14, max_iter=1000, preconditioner="jacobi")


class InvariantViolation(RuntimeError):
    pass


@dataclass
class Residual:
    first: np.ndarray
    second: np.ndarray
    norm: float
    div: Optional[np.ndarray] = field(default=None, repr=False)


@dataclass
class IterationRecord:
    k: int
    residual: float
    gap: float
    step: float = 1.0
    cg_iters: int = 0
    time_ms: float = 0.0
    phase: str = "ssn"
    consistency: float = float("nan")


CSV_COLUMNS = ["k", "residual", "gap", "step", "cg_iters", "time_ms"]


@dataclass
class IterationHistory:
    records: list = field(default_factory=list)
    converged: bool = False
    k0: Optional[int] = None
    label: str = ""
    message: str = ""

    def append(self, record: IterationRecord) -> None:
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def phase(self, name: str) -> list:
        return [r for r in self.records if r.phase == name]

    @property
    def residuals(self) -> np.ndarray:
        return np.array([r.residual for r in self.records])

    @property
    def final_residual(self) -> float:
        return self.records[-1].residual if self.records else float("nan")

    @property
    def newton_iterations(self) -> int:
        return sum(r.phase in ("ssn", "primal") and r.k > 0 for r in self.records)

    def to_csv(self, path=None, extra_columns=("phase",)) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        cols = CSV_COLUMNS + list(extra_columns)
        writer.writerow(cols)
        for r in self.records:
            row = asdict(r)
            writer.writerow([_fmt(row[c]) for c in cols])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "converged": self.converged,
            "k0": self.k0,
            "message": self.message,
            "records": [asdict(r) for r in self.records],
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, default=_json_default)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return value


def _json_default(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    raise TypeError(type(value))


def _sanitize(x: float):
    return x if math.isfinite(x) else None


# -- residual and Newton derivative ------------------------------------------

def residual(problem: ROFProblem, state: PrimalDualState) -> Residual:
    sp_, p = problem.space, problem.params
    grad_u = sp_.gradient(state.u)
    first = grad_u - prox_huber(grad_u + p.gamma * state.z, p.huber)
    div = sp_.divergence(state.z)
    second = p.alpha * (state.u - problem.g_h) - div
    return Residual(first, second, sp_.product_norm(first, second), div)


def apply_newton_derivative(problem: ROFProblem, state: PrimalDualState, direction: PrimalDualState):
    """Apply the Newton derivative of ``F`` at ``state`` to ``direction``."""
    sp_, p = problem.space, problem.params
    a = sp_.gradient(state.u) + p.gamma * state.z
    J = prox_newton_derivative(a, p.huber)
    grad_du = sp_.gradient(direction.u)
    first = grad_du - np.einsum("tij,tj->ti", J, grad_du) - p.gamma * np.einsum("tij,tj->ti", J, direction.z)
    second = p.alpha * direction.u - sp_.divergence(direction.z)
    return first, second


def newton_consistency(problem, state, direction, res: Optional[Residual] = None) -> float:
    """Product norm of ``J_F(state) direction + F(state)``."""
    res = residual(problem, state) if res is None else res
    first, second = apply_newton_derivative(problem, state, direction)
    return problem.space.product_norm(first + res.first, second + res.second)


def _solver_method(problem: ROFProblem, method: str) -> str:
    if method != "auto":
        return method
    return "direct" if len(problem.space.free) < DIRECT_SIZE_LIMIT else "cg"


def newton_step(problem: ROFProblem, state: PrimalDualState, res: Optional[Residual] = None,
                linear_solver: str = "auto"):
    """Newton direction via the reduced SPD problem for the primal increment.

    Returns ``(direction, SolveReport)``.
    """
    sp_, p = problem.space, problem.params
    free = sp_.free
    res = residual(problem, state) if res is None else res
    a = sp_.gradient(state.u) + p.gamma * state.z
    J_inv, J_inv_compl = jacobian_algebra(a, p.huber)
    A = sp_.weighted_stiffness(J_inv_compl, 1.0 / p.gamma, restrict_dirichlet=True) + p.alpha * sp_.M_free
    J_inv_f1 = np.einsum("tij,tj->ti", J_inv, res.first)
    rhs = -(
        sp_.gradient_transpose(J_inv_f1 / p.gamma + state.z)[free]
        + p.alpha * (sp_.M @ (state.u - problem.g_h))[free]
    )
    du_free, report = spd_solve(A, rhs, _solver_method(problem, linear_solver), **CG_OPTIONS)
    du = sp_.extend(du_free)
    grad_du = sp_.gradient(du)
    dz = (np.einsum("tij,tj->ti", J_inv_compl, grad_du) + J_inv_f1) / p.gamma
    return PrimalDualState(du, dz), report


# -- prox-based semi-smooth Newton -------------------------------------------

def _armijo(problem, state, direction, res, c=1e-4, factor=0.5, min_step=2.0 ** -30):
    m0 = 0.5 * res.norm**2
    s = 1.0
    while s >= min_step:
        trial = state + direction.scaled(s)
        trial_res = residual(problem, trial)
        if 0.5 * trial_res.norm**2 <= m0 - c * s * res.norm**2:
            return s, trial, trial_res
        s *= factor
    log.warning("Armijo backtracking failed down to step %g; taking the full step", min_step)
    trial = state + direction
    return 1.0, trial, residual(problem, trial)


def ssn_solve(
    problem: ROFProblem,
    initial: PrimalDualState,
    stop: float = 1e-12,
    max_iter: int = 250,
    line_search: str = "none",
    check_consistency: bool = False,
    monitor_gap: bool = True,
    linear_solver: str = "auto",
    history: Optional[IterationHistory] = None,
):
    """Prox-based semi-smooth Newton iteration, optionally with Armijo backtracking.

    Stops when the product-norm residual drops below ``stop``.  Returns
    ``(state, history)``; ``history.converged`` flags success.
    """
    if stop <= 0:
        raise ValueError("stop must be positive")
    if line_search not in ("none", "armijo"):
        raise ValueError(f"unknown line search {line_search!r}")
    history = IterationHistory(label="ssn") if history is None else history
    state = initial.copy()
    t0 = time.perf_counter()
    res = residual(problem, state)

    def _record(k, step, iters, consistency):
        eta = gapmod.eta_gap_squared(problem, state.u, state.z, res.div) if monitor_gap else float("nan")
        history.append(IterationRecord(k, res.norm, eta, step, iters,
                                       1e3 * (time.perf_counter() - t0), "ssn", consistency))

    _record(0, 0.0, 0, float("nan"))
    if res.norm < stop:
        history.converged = True
        return state, history
    for k in range(1, max_iter + 1):
        if not math.isfinite(res.norm):
            history.message = "non-finite residual"
            break
        direction, report = newton_step(problem, state, res, linear_solver)
        consistency = newton_consistency(problem, state, direction, res) if check_consistency else float("nan")
        if line_search == "armijo":
            step, state, res = _armijo(problem, state, direction, res)
        else:
            step, state = 1.0, state + direction
            res = residual(problem, state)
        _record(k, step, report.iterations, consistency)
        if res.norm < stop:
            history.converged = True
            break
    else:
        history.message = f"no convergence within {max_iter} iterations"
    return state, history


# -- gradient flow -------------------------------------------------------------

@dataclass(frozen=True)
class GradFlowConfig:
    tau: float = 1.0
    stop: float = 0.25
    max_iter: int = 10_000
    check_energy: bool = True
    energy_tol: float = 1e-10
    energy: str = "flow"

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.energy not in ("flow", "huber"):
            raise ValueError("energy must be 'flow' or 'huber'")


def flow_coefficient(grad_u, epsilon) -> np.ndarray:
    """``phi_eps'(|t|) / |t| = (eps^2 + |t|^2)^(-1/2)`` for ``phi_eps(s) = sqrt(eps^2 + s^2)``."""
    return 1.0 / np.sqrt(epsilon**2 + np.einsum("td,td->t", grad_u, grad_u))


def flow_energy(problem: ROFProblem, v) -> float:
    """``int phi_eps(|grad v|) + alpha/2 ||v - g_h||^2``, the energy dissipated by the flow."""
    sp_, p = problem.space, problem.params
    g = sp_.gradient(v)
    tv = float(sp_.areas @ np.sqrt(p.epsilon**2 + np.einsum("td,td->t", g, g)))
    d = np.asarray(v) - problem.g_h
    return tv + 0.5 * p.alpha * sp_.inner_scalar(d, d)


def gradient_flow(problem: ROFProblem, u0, cfg: GradFlowConfig = GradFlowConfig(),
                  linear_solver: str = "auto", history: Optional[IterationHistory] = None):
    """Semi-implicit L2 gradient flow.

    Each step solves ``(1/tau + alpha) M u' + K(c) u' = M u / tau + alpha M g_h``
    with ``c`` frozen at the previous iterate.  The accumulated dissipation
    ``tau * sum ||d_tau u||^2`` is checked against the energy decrease after
    every step.
    """
    sp_, p = problem.space, problem.params
    free = sp_.free
    history = IterationHistory(label="flow") if history is None else history
    method = _solver_method(problem, linear_solver)
    u = np.array(u0, dtype=float)
    u[sp_.mesh.dirichlet] = 0.0
    energy_of = flow_energy if cfg.energy == "flow" else gapmod.primal_energy
    e0 = energy_of(problem, u)
    dissipation = 0.0
    t0 = time.perf_counter()
    base = (1.0 / cfg.tau + p.alpha) * sp_.M_free
    rhs_data = p.alpha * problem.load[free]
    z = np.zeros((sp_.mesh.n_triangles, 2))
    k = 0
    for k in range(1, cfg.max_iter + 1):
        coef = flow_coefficient(sp_.gradient(u), p.epsilon)
        C = coef[:, None, None] * np.eye(2)
        A = base + sp_.weighted_stiffness(C, restrict_dirichlet=True)
        rhs = (sp_.M_free @ u[free]) / cfg.tau + rhs_data
        u_free, report = spd_solve(A, rhs, method, x0=u[free], **CG_OPTIONS)
        u_new = sp_.extend(u_free)
        d = (u_new - u) / cfg.tau
        dissipation += cfg.tau * sp_.inner_scalar(d, d)
        u = u_new
        z = coef[:, None] * sp_.gradient(u)
        state = PrimalDualState(u, z)
        res = residual(problem, state)
        energy = energy_of(problem, u)
        if cfg.check_energy and energy + dissipation > e0 + cfg.energy_tol * max(abs(e0), 1.0):
            raise InvariantViolation(
                f"energy inequality violated at step {k}: {energy + dissipation!r} > {e0!r}"
            )
        eta = gapmod.eta_gap_squared(problem, u, z, res.div)
        history.append(IterationRecord(k, res.norm, eta, cfg.tau, report.iterations,
                                       1e3 * (time.perf_counter() - t0), "flow"))
        if res.norm < cfg.stop:
            history.converged = True
            break
    else:
        history.message = f"flow did not reach {cfg.stop} within {cfg.max_iter} steps"
    history.k0 = k
    return PrimalDualState(u, z), history


# -- primal semi-smooth Newton -------------------------------------------------------

def primal_gradient(problem: ROFProblem, v) -> np.ndarray:
    """Free-vertex coefficients of the derivative of the primal energy at ``v``."""
    sp_, p = problem.space, problem.params
    r = sp_.gradient_transpose(huber_gradient(sp_.gradient(v), p.epsilon))
    r += p.alpha * (sp_.M @ (np.asarray(v) - problem.g_h))
    return r[sp_.free]


def primal_ssn_solve(problem: ROFProblem, u0, stop: float = 1e-12, max_iter: int = 250,
                     linear_solver: str = "auto", history: Optional[IterationHistory] = None):
    """Newton iteration on the Euler-Lagrange equation of the primal energy.

    Stops on the dual norm ``sqrt(r^T M^{-1} r)`` of the derivative.
    Returns ``(u, history)``; the gap column uses ``y = D|.|_eps(grad u)``.
    """
    if stop <= 0:
        raise ValueError("stop must be positive")
    sp_, p = problem.space, problem.params
    history = IterationHistory(label="primal") if history is None else history
    method = _solver_method(problem, linear_solver)
    u = np.array(u0, dtype=float)
    t0 = time.perf_counter()

    def _dual_norm(r):
        return float(np.sqrt(max(r @ sp_.mass_factor.solve(r), 0.0)))

    def _record(k, iters):
        y = gapmod.dual_from_primal(problem, u)
        eta = gapmod.eta_gap_squared(problem, u, y)
        history.append(IterationRecord(k, rnorm, eta, 1.0, iters,
                                       1e3 * (time.perf_counter() - t0), "primal"))

    r = primal_gradient(problem, u)
    rnorm = _dual_norm(r)
    _record(0, 0)
    if rnorm < stop:
        history.converged = True
        return u, history
    for k in range(1, max_iter + 1):
        grad_u = sp_.gradient(u)
        C = huber_newton_derivative(grad_u, p.epsilon)
        A = sp_.weighted_stiffness(C, restrict_dirichlet=True) + p.alpha * sp_.M_free
        du, report = spd_solve(A, -r, method, **CG_OPTIONS)
        u = u + sp_.extend(du)
        r = primal_gradient(problem, u)
        rnorm = _dual_norm(r)
        _record(k, report.iterations)
        if not math.isfinite(rnorm):
            history.message = "non-finite residual"
            break
        if rnorm < stop:
            history.converged = True
            break
    else:
        history.message = f"no convergence within {max_iter} iterations"
    return u, history


# -- composite strategies ------------------------------------------------------

@dataclass(frozen=True)
class StrategyThresholds:
    """Handoff and stopping parameters of the composite strategies.

    ``handoff=None`` uses the per-strategy default (1/4 for S1, 1/10 for the
    starred variants).  The flow step ``tau`` defaults to ``1e-3``.
    """

    handoff: Optional[float] = None
    stop: float = 1e-12
    max_iter: int = 250
    tau: float = 1e-3
    flow_max_iter: int = 5_000
    check_energy: bool = True


# strategy name -> (flow handoff default, line search)
STRATEGIES = {
    "S1": (0.25, "none"),
    "S2": (None, "armijo"),
    "S1star": (0.1, "none"),
    "S2star": (0.1, "armijo"),
}


def flow_handoff(problem: ROFProblem, which: str = "S1", thresholds: StrategyThresholds = StrategyThresholds(),
                 linear_solver: str = "auto"):
    """Run the gradient flow from zero up to the handoff threshold of ``which``.

    Returns ``(state, flow_history)``; the result can be shared by several
    Newton runs that differ only in ``gamma``.
    """
    default_handoff, _ = STRATEGIES[which]
    handoff = thresholds.handoff if thresholds.handoff is not None else default_handoff
    if handoff is None:
        raise ValueError(f"strategy {which!r} has no flow phase")
    cfg = GradFlowConfig(tau=thresholds.tau, stop=handoff, max_iter=thresholds.flow_max_iter,
                         check_energy=thresholds.check_energy)
    return gradient_flow(problem, np.zeros(problem.mesh.n_vertices), cfg, linear_solver)


def strategy_run(which: str, problem: ROFProblem, thresholds: StrategyThresholds = StrategyThresholds(),
                 check_consistency: bool = False, linear_solver: str = "auto", handoff_state=None):
    """Run one of the globalization strategies S1, S2, S1star, S2star.

    S1 and the starred variants first run the gradient flow from zero until
    the residual drops below the handoff threshold, then switch to Newton;
    S2 starts Newton from zero with Armijo backtracking.  A precomputed
    ``handoff_state = (state, flow_history)`` from :func:`flow_handoff`
    replaces the flow phase.  Returns ``(state, history)`` with the flow
    steps recorded in phase ``"flow"`` and ``history.k0`` the number of flow
    steps.
    """
    if which not in STRATEGIES:
        raise ValueError(f"unknown strategy {which!r}")
    _, line_search = STRATEGIES[which]
    history = IterationHistory(label=which)
    if which == "S2":
        initial = problem.zero_state()
        history.k0 = 0
    else:
        if handoff_state is None:
            handoff_state = flow_handoff(problem, which, thresholds, linear_solver)
        initial, flow_hist = handoff_state
        history.records.extend(flow_hist.records)
        history.k0 = flow_hist.k0
    state, ssn_hist = ssn_solve(problem, initial, thresholds.stop, thresholds.max_iter, line_search,
                                check_consistency=check_consistency, linear_solver=linear_solver)
    history.records.extend(ssn_hist.records)
    history.converged = ssn_hist.converged
    notes = [] if which == "S2" or flow_hist.converged else [flow_hist.message]
    history.message = "; ".join(notes + ([ssn_hist.message] if ssn_hist.message else []))
    return state, history

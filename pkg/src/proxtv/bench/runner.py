"""Experiment drivers: sweeps over meshes, regularization and proximity parameters."""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from ..fem import FESpace
from ..gap import dual_from_primal
from ..mesh import graded_sequence, mesh_stats, uniform_mesh, write_vtk
from ..problem import PrimalDualState, ProblemParams, ROFProblem, disc_indicator
from ..solver import STRATEGIES, StrategyThresholds, flow_handoff, primal_ssn_solve, strategy_run
from .config import ExperimentConfig
from .exact import ExactSolution, l2_error_u

log = logging.getLogger(__name__)

__all__ = ["build_meshes", "run_test", "run_single"]


def build_meshes(cfg: ExperimentConfig) -> dict:
    """Meshes keyed by level; graded levels come from one refinement sequence."""
    if cfg.mesh == "graded":
        seq = graded_sequence(max(cfg.levels), r=cfg.radius)
        return {lvl: seq[lvl] for lvl in sorted(set(cfg.levels))}
    return {lvl: uniform_mesh(lvl) for lvl in sorted(set(cfg.levels))}


def _thresholds(cfg: ExperimentConfig) -> StrategyThresholds:
    return StrategyThresholds(handoff=cfg.handoff, stop=cfg.stop, max_iter=cfg.max_iter,
                              tau=cfg.tau, flow_max_iter=cfg.flow_max_iter)


def _handoff_key(cfg: ExperimentConfig, kind: str):
    base = "S1" if kind == "primal" else kind
    return cfg.handoff if cfg.handoff is not None else STRATEGIES[base][0]


def run_single(problem: ROFProblem, kind: str, cfg: ExperimentConfig, handoff_state=None):
    """One solve; returns ``(state, history)``."""
    thresholds = _thresholds(cfg)
    if kind == "primal":
        if handoff_state is None:
            handoff_state = flow_handoff(problem, "S1", thresholds)
        start, flow_hist = handoff_state
        u, hist = primal_ssn_solve(problem, start.u, cfg.stop, cfg.max_iter)
        hist.records[:0] = flow_hist.records
        hist.k0 = flow_hist.k0
        hist.label = "primal"
        return PrimalDualState(u, dual_from_primal(problem, u)), hist
    return strategy_run(kind, problem, thresholds, handoff_state=handoff_state)


def _finite(x):
    return x if isinstance(x, (int, str)) or (x is not None and math.isfinite(x)) else None


def run_test(cfg: ExperimentConfig, out_dir=None) -> dict:
    """Run every point of the sweep; write one CSV history per run and ``summary.json``.

    A failing run is recorded with its error message and the sweep continues.
    Returns the summary dictionary.
    """
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    exact = ExactSolution(cfg.radius, cfg.alpha)
    datum = disc_indicator(cfg.radius)
    meshes = build_meshes(cfg)
    summary = {"config": cfg.to_dict(), "meshes": [], "runs": []}
    for level, mesh in meshes.items():
        stats = mesh_stats(mesh)
        summary["meshes"].append({"level": level, **{k: _finite(v) for k, v in asdict(stats).items()}})
        space = FESpace(mesh)
        base = ROFProblem(mesh, ProblemParams(cfg.alpha, 1.0, cfg.flow_gamma, datum), space)
        base.g_h  # assemble the datum once; with_params shares it
        h = base.h
        for beta in cfg.epsilon_powers:
            eps = h**beta
            flow_problem = base.with_params(epsilon=eps)
            handoffs = {}
            for gamma in cfg.gammas:
                problem = flow_problem.with_params(gamma=gamma)
                for kind in cfg.strategies:
                    tag = f"{cfg.name}_L{level}_b{beta:g}_g{gamma:g}_{kind}"
                    entry = dict(level=level, beta=beta, epsilon=eps, gamma=gamma, strategy=kind, h=h,
                                 n_triangles=mesh.n_triangles, csv=f"{tag}.csv")
                    t0 = time.perf_counter()
                    try:
                        shared = None
                        if kind != "S2":
                            key = _handoff_key(cfg, kind)
                            if key not in handoffs:
                                thresholds = replace(_thresholds(cfg), handoff=key)
                                handoffs[key] = flow_handoff(flow_problem, "S1", thresholds)
                            shared = handoffs[key]
                        state, hist = run_single(problem, kind, cfg, shared)
                        hist.to_csv(out / entry["csv"])
                        last = hist.records[-1]
                        entry.update(
                            status="ok",
                            converged=hist.converged,
                            k0=hist.k0,
                            iterations=hist.newton_iterations,
                            final_residual=_finite(last.residual),
                            final_gap=_finite(last.gap),
                            message=hist.message,
                        )
                        if cfg.record_l2_error:
                            entry["l2_error"] = _finite(l2_error_u(space, state.u, exact))
                        if cfg.export_vtk:
                            vtk = f"{tag}.vtk"
                            write_vtk(out / vtk, mesh, point_data={"u": state.u, "g_h": problem.g_h},
                                      cell_data={"z": state.z})
                            entry["vtk"] = vtk
                    except Exception as exc:  # recorded, the sweep continues
                        log.exception("run %s failed", tag)
                        entry.update(status="error", converged=False, message=f"{type(exc).__name__}: {exc}")
                    entry["time_s"] = time.perf_counter() - t0
                    log.info("%s: %s", tag, entry.get("message") or ("converged" if entry["converged"] else ""))
                    summary["runs"].append(entry)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, default=_json_default) + "\n")
    return summary


def _json_default(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.bool_):
        return bool(value)
    raise TypeError(type(value))

"""Command-line entry point: ``proxtv-bench``."""
from __future__ import annotations

import argparse
import json
import math
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from ..mesh import graded_sequence, mesh_stats, uniform_mesh, write_vtk
from .config import CANNED_TESTS, RUN_KINDS, ConfigError, ExperimentConfig, canned_config
from .runner import run_test

__all__ = ["main", "build_parser"]


def _add_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--level", type=int, action="append", help="mesh level (repeatable); replaces the config levels")
    p.add_argument("--epsilon-power", type=float, action="append", dest="epsilon_power",
                   help="beta in epsilon = h**beta (repeatable)")
    p.add_argument("--gamma", type=float, action="append", help="proximity parameter (repeatable)")
    p.add_argument("--strategy", action="append", choices=RUN_KINDS, help="run kind (repeatable)")
    p.add_argument("--out-dir", help="directory for CSV histories and summary.json")
    p.add_argument("--export-vtk", action="store_true", default=None, help="also write VTK files of u, g_h and z")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="proxtv-bench", description="Disc benchmark for the ROF Newton solvers.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress of every run")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a JSON experiment configuration")
    run.add_argument("config", type=Path)
    _add_overrides(run)
    for test in CANNED_TESTS:
        _add_overrides(sub.add_parser(test, help=f"run the checked-in {test} configuration"))
    info = sub.add_parser("mesh-info", help="print mesh statistics as JSON")
    info.add_argument("--level", type=int, default=0)
    info.add_argument("--graded", action="store_true", help="use the circle-graded refinement sequence")
    info.add_argument("--export-vtk", type=Path, help="write the mesh to this VTK file")
    return parser


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    return cfg.with_overrides(
        levels=args.level,
        epsilon_powers=args.epsilon_power,
        gammas=args.gamma,
        strategies=args.strategy,
        out_dir=args.out_dir,
        export_vtk=args.export_vtk,
    )


def _print_summary(summary: dict) -> None:
    for run in summary["runs"]:
        status = "converged" if run.get("converged") else (run.get("message") or "not converged")
        res = run.get("final_residual")
        res = f"{res:.2e}" if isinstance(res, float) else "-"
        print(f"L{run['level']} beta={run['beta']:g} gamma={run['gamma']:g} {run['strategy']:>7}: "
              f"k0={run.get('k0')} its={run.get('iterations')} residual={res} {status}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.command == "mesh-info":
        mesh = graded_sequence(args.level)[-1] if args.graded else uniform_mesh(args.level)
        info = {"level": args.level, "graded": args.graded, **asdict(mesh_stats(mesh)),
                "min_angle_deg": math.degrees(mesh.min_angle()), "conforming": mesh.is_conforming()}
        print(json.dumps(info, indent=2))
        if args.export_vtk:
            write_vtk(args.export_vtk, mesh)
        return 0
    try:
        cfg = ExperimentConfig.from_json(args.config) if args.command == "run" else canned_config(args.command)
        cfg = _apply_overrides(cfg, args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    summary = run_test(cfg)
    _print_summary(summary)
    print(f"wrote {Path(cfg.out_dir) / 'summary.json'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

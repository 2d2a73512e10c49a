"""Finite-element semi-smooth Newton solvers for Huber-regularized ROF denoising."""
from .mesh import Mesh, initial_square_mesh, uniform_mesh, graded_sequence, rgb_refine, red_refine, mesh_stats
from .fem import FESpace
from .prox import HuberParams, prox_huber
from .problem import ProblemParams, PrimalDualState, ROFProblem, disc_indicator
from .solver import (
    GradFlowConfig,
    IterationHistory,
    StrategyThresholds,
    gradient_flow,
    primal_ssn_solve,
    residual,
    ssn_solve,
    strategy_run,
)
from .gap import gap_report, eta_gap_squared

__version__ = "0.1.0"

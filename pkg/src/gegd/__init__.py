"""Gaussian ensemble gradient descent for fabrication-constrained binary design."""

from .fdg import FeasibleDesign, check_feasibility, generate
from .grid import Brush, DesignGrid, Symmetry
from .optimizer import GegdConfig, OptimizationTrace, run
from .problems import Problem

__version__ = "0.1.0"

__all__ = [
    "Brush",
    "DesignGrid",
    "FeasibleDesign",
    "GegdConfig",
    "OptimizationTrace",
    "Problem",
    "Symmetry",
    "check_feasibility",
    "generate",
    "run",
]

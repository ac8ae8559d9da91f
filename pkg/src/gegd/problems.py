"""Cost-function interface shared by all optimizers."""

from __future__ import annotations

import numpy as np

from .fdg import FeasibleDesign
from .grid import DesignGrid


class CostEvaluationError(RuntimeError):
    """A cost backend failed to evaluate a design."""


class UnsupportedProblemError(ValueError):
    """The problem lacks a capability the algorithm needs (e.g. gradients)."""


def as_density(design) -> np.ndarray:
    if isinstance(design, FeasibleDesign):
        return design.rho_f.astype(float)
    return np.asarray(design, dtype=float)


class Problem:
    """Base class for cost functions on a design grid.

    Subclasses implement :meth:`cost`; gradient-capable problems also implement
    :meth:`cost_and_grad` and set ``supports_gradient``. Densities are full-grid
    arrays in [0, 1] (1 = solid); binary designs may be passed as
    :class:`FeasibleDesign`.

    ``t_hf`` and ``t_lf`` are the nominal per-evaluation costs used for budget
    accounting, in units of one high-fidelity forward evaluation.
    """

    supports_gradient = False
    supports_low_fidelity = False
    gradient_cost_factor = 1.5

    def __init__(self, grid: DesignGrid, t_hf: float = 1.0, t_lf: float = 1.0):
        self.grid = grid
        self.t_hf = float(t_hf)
        self.t_lf = float(t_lf)

    def cost(self, design, fidelity: str = "hi") -> float:
        raise NotImplementedError

    def cost_and_grad(self, density: np.ndarray) -> tuple[float, np.ndarray]:
        raise UnsupportedProblemError(f"{type(self).__name__} does not provide gradients")

    def check_shape(self, density: np.ndarray) -> np.ndarray:
        density = as_density(density)
        if density.shape != self.grid.shape:
            raise ValueError(f"design shape {density.shape} does not match grid {self.grid.shape}")
        return density

    def close(self) -> None:
        pass


class ConstantProblem(Problem):
    supports_gradient = True
    supports_low_fidelity = True

    def __init__(self, grid: DesignGrid, value: float = 0.0):
        super().__init__(grid)
        self.value = float(value)

    def cost(self, design, fidelity: str = "hi") -> float:
        self.check_shape(design)
        return self.value

    def cost_and_grad(self, density):
        self.check_shape(density)
        return self.value, np.zeros(self.grid.shape)


class SumProblem(Problem):
    """Cost = number of solid pixels; handy reference for backend tests."""

    def cost(self, design, fidelity: str = "hi") -> float:
        return float(self.check_shape(design).sum())

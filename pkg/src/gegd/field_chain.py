"""Latent -> reward field mapping and its analytic adjoint.

Forward: dummy variables (independent half) -> sigmoid bound -> symmetric
expansion -> normalized Gaussian blur -> tanh projection. ``backward_chain``
pulls a full-grid gradient back to the dummy variables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .grid import DesignGrid, expand_symmetric

TRUNCATE = 4.0


def bound_map(zeta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Map unbounded dummy variables into (-1, 1).

    Returns the latent densities and the diagonal of the Jacobian.
    """
    zeta = np.asarray(zeta, dtype=float)
    s = 0.5 * (1.0 + np.tanh(0.5 * zeta))  # overflow-free logistic
    return 2.0 * s - 1.0, 2.0 * s * (1.0 - s)


def inverse_bound_map(rho_l: np.ndarray) -> np.ndarray:
    rho_l = np.asarray(rho_l, dtype=float)
    if np.any(np.abs(rho_l) >= 1.0):
        raise ValueError("latent densities must lie strictly inside (-1, 1)")
    return 2.0 * np.arctanh(rho_l)


def _filter_weights(shape: tuple[int, int], sigma_f: float) -> np.ndarray:
    return ndimage.gaussian_filter(np.ones(shape), sigma_f, mode="constant", cval=0.0, truncate=TRUNCATE)


def gaussian_filter(field: np.ndarray, sigma_f: float) -> np.ndarray:
    """Blur with a truncated Gaussian; zero padding renormalized per pixel.

    Kernel weights sum to one everywhere, including at the boundary, so the
    output stays inside the input range.
    """
    if not sigma_f > 0:
        raise ValueError(f"sigma_f must be positive, got {sigma_f}")
    field = np.asarray(field, dtype=float)
    raw = ndimage.gaussian_filter(field, sigma_f, mode="constant", cval=0.0, truncate=TRUNCATE)
    return raw / _filter_weights(field.shape, sigma_f)


def gaussian_filter_adjoint(grad: np.ndarray, sigma_f: float) -> np.ndarray:
    """Transpose of :func:`gaussian_filter` (the renormalization breaks self-adjointness)."""
    grad = np.asarray(grad, dtype=float)
    scaled = grad / _filter_weights(grad.shape, sigma_f)
    return ndimage.gaussian_filter(scaled, sigma_f, mode="constant", cval=0.0, truncate=TRUNCATE)


def tanh_project(field: np.ndarray, beta: float) -> tuple[np.ndarray, np.ndarray]:
    """Odd, endpoint-preserving projection ``tanh(beta x) / tanh(beta)`` and its derivative."""
    if not beta > 0:
        raise ValueError(f"projection strength must be positive, got {beta}")
    field = np.asarray(field, dtype=float)
    t = np.tanh(beta * field)
    norm = math.tanh(beta)
    return t / norm, beta * (1.0 - t * t) / norm


@dataclass(frozen=True)
class RewardField:
    rho_r: np.ndarray
    filter_sigma: float
    proj_strength: float


@dataclass
class ChainState:
    """Intermediates kept by :meth:`FieldChain.forward` for the backward pass."""

    zeta: np.ndarray | None
    rho_l: np.ndarray
    bound_jac: np.ndarray | None
    proj_jac: np.ndarray
    reward: RewardField


class FieldChain:
    """Filter + projection chain on a design grid.

    Args:
        grid: design grid (its symmetry decides the independent half).
        sigma_f: filter standard deviation in pixels.
        beta: projection strength.
    """

    def __init__(self, grid: DesignGrid, sigma_f: float, beta: float):
        if not sigma_f > 0:
            raise ValueError(f"sigma_f must be positive, got {sigma_f}")
        if not beta > 0:
            raise ValueError(f"projection strength must be positive, got {beta}")
        self.grid = grid
        self.sigma_f = float(sigma_f)
        self.beta = float(beta)

    @classmethod
    def for_fdg(cls, grid: DesignGrid, beta: float = 8.0) -> "FieldChain":
        return cls(grid, math.sqrt(2.0) * grid.min_feature / 4.0, beta)

    @classmethod
    def for_three_field(cls, grid: DesignGrid, beta: float = 8.0) -> "FieldChain":
        return cls(grid, float(grid.min_feature), beta)

    def with_beta(self, beta: float) -> "FieldChain":
        return FieldChain(self.grid, self.sigma_f, beta)

    def _check_half(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float).ravel()
        if values.size != self.grid.n_params:
            raise ValueError(f"expected {self.grid.n_params} independent values, got {values.size}")
        return values

    def forward_latent(self, rho_l: np.ndarray) -> ChainState:
        """Run the chain from bounded latent densities (no dummy variables)."""
        rho_l = self._check_half(rho_l)
        full = expand_symmetric(rho_l, self.grid)
        filtered = gaussian_filter(full, self.sigma_f)
        rho_r, dproj = tanh_project(filtered, self.beta)
        return ChainState(None, rho_l, None, dproj, RewardField(rho_r, self.sigma_f, self.beta))

    def forward(self, zeta: np.ndarray) -> ChainState:
        zeta = self._check_half(zeta)
        rho_l, jac = bound_map(zeta)
        state = self.forward_latent(rho_l)
        state.zeta = zeta
        state.bound_jac = jac
        return state

    def backward_latent(self, state: ChainState, grad_r: np.ndarray) -> np.ndarray:
        """Gradient with respect to the bounded latent densities."""
        grad_r = np.asarray(grad_r, dtype=float)
        if grad_r.size != self.grid.size:
            raise ValueError(f"expected a {self.grid.shape} gradient, got {grad_r.shape}")
        g = grad_r.reshape(self.grid.shape) * state.proj_jac
        g = gaussian_filter_adjoint(g, self.sigma_f)
        return self.grid.restrict_adjoint(g)

    def backward(self, state: ChainState, grad_r: np.ndarray) -> np.ndarray:
        """Gradient with respect to the dummy variables."""
        if state.bound_jac is None:
            raise ValueError("state was produced by forward_latent; use backward_latent")
        return self.backward_latent(state, grad_r) * state.bound_jac


def forward_chain(zeta: np.ndarray, chain: FieldChain) -> RewardField:
    return chain.forward(zeta).reward


def backward_chain(grad_r: np.ndarray, zeta: np.ndarray, chain: FieldChain) -> np.ndarray:
    return chain.backward(chain.forward(zeta), grad_r)

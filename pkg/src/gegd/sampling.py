"""Gaussian sampling distribution over reward fields.

Covariance is either the identity or a regularized RBF kernel over pixel
coordinates; the regularization shifts the spectrum so that the condition
number equals a target value exactly.
"""

from __future__ import annotations

import hashlib
import logging
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import linalg

from .grid import DesignGrid

logger = logging.getLogger(__name__)

DEFAULT_KAPPA = 1e6
CACHE_THRESHOLD = 64 * 64


class CovarianceError(RuntimeError):
    pass


def rbf_length_scale(min_feature: float) -> float:
    return min_feature * math.sqrt(2.0) / 4.0


def regularization_shift(lam_max: float, lam_min: float, kappa: float) -> float:
    """Diagonal shift giving ``(lam_max + eps) / (lam_min + eps) == kappa``."""
    if not kappa > 1:
        raise ValueError(f"target condition number must exceed 1, got {kappa}")
    return (lam_max - kappa * lam_min) / (kappa - 1.0)


@dataclass(frozen=True)
class SamplingDistribution:
    """N(mean, sigma_r^2 * Sigma) over full-grid reward fields."""

    sigma: np.ndarray | None  # None for the isotropic mode
    chol: np.ndarray | None
    sigma_rbf: float | None
    epsilon: float
    kappa: float | None
    n: int

    @property
    def isotropic(self) -> bool:
        return self.sigma is None

    def cov(self) -> np.ndarray:
        return np.eye(self.n) if self.sigma is None else self.sigma

    def solve(self, v: np.ndarray) -> np.ndarray:
        """Apply Sigma^-1 to the trailing axis via the stored Cholesky factor."""
        v = np.asarray(v, dtype=float)
        if self.chol is None:
            return v.copy()
        flat = v.reshape(-1, self.n).T
        out = linalg.cho_solve((self.chol, True), flat, check_finite=False)
        return out.T.reshape(v.shape)

    def apply_factor(self, z: np.ndarray) -> np.ndarray:
        """L @ z along the trailing axis."""
        z = np.asarray(z, dtype=float)
        if self.chol is None:
            return z.copy()
        return z @ self.chol.T


def isotropic(n: int) -> SamplingDistribution:
    return SamplingDistribution(None, None, None, 0.0, None, int(n))


def rbf_kernel(coords: np.ndarray, sigma_rbf: float) -> np.ndarray:
    coords = np.asarray(coords, dtype=float)
    sq = np.sum(coords**2, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * coords @ coords.T, 0.0)
    # exact integer coordinates give exact squared distances; keep the diagonal at 1
    np.fill_diagonal(d2, 0.0)
    return np.exp(-d2 / sigma_rbf**2)


def build_rbf_covariance(coords: np.ndarray, min_feature: float, kappa: float = DEFAULT_KAPPA) -> SamplingDistribution:
    """Regularized RBF covariance with condition number ``kappa``.

    Raises:
        CovarianceError: Cholesky factorization fails after regularization.
    """
    sigma_rbf = rbf_length_scale(min_feature)
    raw = rbf_kernel(coords, sigma_rbf)
    lam = linalg.eigvalsh(raw)
    eps = regularization_shift(lam[-1], lam[0], kappa)
    cov = raw + eps * np.eye(len(raw))
    try:
        chol = linalg.cholesky(cov, lower=True)
    except linalg.LinAlgError as exc:
        raise CovarianceError(f"Cholesky failed after regularization (eps={eps:g})") from exc
    return SamplingDistribution(cov, chol, sigma_rbf, float(eps), float(kappa), len(raw))


def _cache_key(rows: int, cols: int, sigma_rbf: float, kappa: float) -> str:
    blob = struct.pack("<4d", rows, cols, sigma_rbf, kappa)
    return hashlib.sha1(blob).hexdigest()[:16]


def cache_path(cache_dir: Path, grid: DesignGrid, kappa: float) -> Path:
    sigma_rbf = rbf_length_scale(grid.min_feature)
    return Path(cache_dir) / f"cov_{grid.rows}x{grid.cols}_{_cache_key(grid.rows, grid.cols, sigma_rbf, kappa)}.bin"


def write_covariance_cache(path: Path, rows: int, cols: int, dist: SamplingDistribution) -> None:
    """Header (rows, cols, sigma_rbf, kappa, eps) then the packed lower factor, row by row.

    Every value is a little-endian float64.
    """
    if dist.chol is None:
        raise ValueError("isotropic distributions are not cached")
    tri = dist.chol[np.tril_indices(dist.n)]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<5d", rows, cols, dist.sigma_rbf, dist.kappa, dist.epsilon))
        fh.write(tri.astype("<f8").tobytes())


def read_covariance_cache(path: Path) -> tuple[int, int, SamplingDistribution]:
    raw = Path(path).read_bytes()
    rows, cols, sigma_rbf, kappa, eps = struct.unpack("<5d", raw[:40])
    n = int(rows) * int(cols)
    tri = np.frombuffer(raw[40:], dtype="<f8")
    if tri.size != n * (n + 1) // 2:
        raise ValueError(f"covariance cache {path} is truncated")
    chol = np.zeros((n, n))
    chol[np.tril_indices(n)] = tri
    cov = chol @ chol.T
    return int(rows), int(cols), SamplingDistribution(cov, chol, sigma_rbf, eps, kappa, n)


def distribution_for_grid(
    grid: DesignGrid,
    mode: str = "rbf",
    kappa: float = DEFAULT_KAPPA,
    cache_dir: Path | None = None,
) -> SamplingDistribution:
    """Sampling distribution over the full grid, reading/writing the disk cache for big grids."""
    if mode == "isotropic":
        return isotropic(grid.size)
    if mode != "rbf":
        raise ValueError(f"unknown covariance mode {mode!r}")
    use_cache = cache_dir is not None and grid.size > CACHE_THRESHOLD
    if use_cache:
        path = cache_path(cache_dir, grid, kappa)
        if path.exists():
            _, _, dist = read_covariance_cache(path)
            return dist
    dist = build_rbf_covariance(grid.pixel_coords() / grid.pixel_pitch, grid.min_feature, kappa)
    if use_cache:
        write_covariance_cache(path, grid.rows, grid.cols, dist)
        logger.info("wrote covariance cache %s", path)
    return dist


def member_rng(seed: int, iteration: int, member: int) -> np.random.Generator:
    """Counter-based substream: (seed, iteration, member) fixes the draw."""
    return np.random.Generator(np.random.Philox(key=[seed & 0xFFFFFFFFFFFFFFFF, 0], counter=[0, 0, member, iteration]))


@dataclass(frozen=True)
class PerturbationEnsemble:
    deltas: np.ndarray  # (M, n)
    seeds: tuple[tuple[int, int, int], ...]


def draw_ensemble(
    dist: SamplingDistribution, sigma_r: float, m: int, seed: int, iteration: int = 0, start: int = 0
) -> PerturbationEnsemble:
    """Draw ``m`` perturbations ``sigma_r * L z`` with members ``start .. start+m-1``."""
    if m < 1:
        raise ValueError("ensemble size must be at least 1")
    members = range(start, start + m)
    z = np.stack([member_rng(seed, iteration, k).standard_normal(dist.n) for k in members])
    deltas = sigma_r * dist.apply_factor(z)
    return PerturbationEnsemble(deltas, tuple((seed, iteration, k) for k in members))


def score_vector(delta: np.ndarray, dist: SamplingDistribution, sigma_r: float) -> np.ndarray:
    """Gradient of the log-density: ``sigma_r^-2 Sigma^-1 delta`` (row-wise for 2-D input)."""
    delta = np.asarray(delta, dtype=float)
    if delta.shape[-1] != dist.n:
        raise ValueError(f"perturbation dimension {delta.shape[-1]} != {dist.n}")
    return dist.solve(delta) / sigma_r**2

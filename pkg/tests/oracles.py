"""Slow, independent reference implementations used only by the tests."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

MAX_CLOSED_FORM_DIM = 8
MAX_ENUM_PIXELS = 16


class OracleError(ValueError):
    pass


@dataclass(frozen=True)
class ClosedFormProblem:
    """Quadratic cost ``x'Ax + b'x + c`` (``A = 0`` gives the linear case)."""

    a: np.ndarray
    b: np.ndarray
    c: float = 0.0

    @classmethod
    def linear(cls, b, c=0.0):
        b = np.asarray(b, dtype=float)
        return cls(np.zeros((b.size, b.size)), b, c)

    @property
    def dim(self) -> int:
        return self.b.size

    def cost(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.einsum("ki,ij,kj->k", x, self.a, x) + x @ self.b + self.c


def smoothed_cost_oracle(problem: ClosedFormProblem, mu, cov, sigma_r: float):
    """Exact Gaussian smoothing: ``E[f(mu + sigma_r z)]``, ``z ~ N(0, cov)``, and its gradient."""
    a = np.asarray(problem.a, dtype=float)
    b = np.asarray(problem.b, dtype=float)
    n = b.size
    if n > MAX_CLOSED_FORM_DIM or a.shape != (n, n) or not np.allclose(a, a.T):
        raise OracleError("closed form needs a symmetric quadratic of dimension <= 8")
    mu = np.asarray(mu, dtype=float)
    cov = np.eye(n) if cov is None else np.asarray(cov, dtype=float)
    value = mu @ a @ mu + b @ mu + problem.c + sigma_r**2 * np.trace(a @ cov)
    return float(value), 2.0 * a @ mu + b


def disk_placements(rows: int, cols: int, diameter: int) -> list[frozenset]:
    """In-grid pixel sets of every allowed brush placement, built from geometry.

    Odd diameters are centered on pixel centers, even ones on interior pixel
    corners; a pixel belongs to the disk when its center lies within d/2.
    """
    d = diameter
    if d % 2:
        centers = [(r + 0.5, c + 0.5) for r in range(rows) for c in range(cols)]
    else:
        centers = [(float(r), float(c)) for r in range(1, rows) for c in range(1, cols)]
    out = []
    for cy, cx in centers:
        pix = frozenset(
            (r, c)
            for r in range(rows)
            for c in range(cols)
            if (r + 0.5 - cy) ** 2 + (c + 0.5 - cx) ** 2 <= (d / 2.0) ** 2
        )
        out.append(pix)
    return out


def is_feasible_oracle(design: np.ndarray, diameter: int, placements=None) -> bool:
    design = np.asarray(design)
    rows, cols = design.shape
    placements = placements if placements is not None else disk_placements(rows, cols, diameter)
    for phase in (0, 1):
        target = {(r, c) for r in range(rows) for c in range(cols) if design[r, c] == phase}
        covered = set()
        for p in placements:
            if all(design[r, c] == phase for r, c in p):
                covered |= p
        if not target <= covered:
            return False
    return True


def brute_feasible_enumerate(rows: int, cols: int, diameter: int) -> set[bytes]:
    """Every feasible binary design, keyed by its row-major 0/1 bytes."""
    if rows * cols > MAX_ENUM_PIXELS:
        raise OracleError(f"{rows}x{cols} is too large to enumerate")
    placements = disk_placements(rows, cols, diameter)
    found = set()
    for bits in itertools.product((0, 1), repeat=rows * cols):
        design = np.array(bits, dtype=np.int8).reshape(rows, cols)
        if is_feasible_oracle(design, diameter, placements):
            found.add(design.tobytes())
    return found


def count_orbits(rows: int, cols: int, axis: str | None) -> int:
    """Number of pixel orbits under an optional mirror, counted by brute force."""
    seen = set()
    orbits = 0
    for r in range(rows):
        for c in range(cols):
            if (r, c) in seen:
                continue
            orbit = {(r, c)}
            if axis == "cols":
                orbit.add((r, cols - 1 - c))
            elif axis == "rows":
                orbit.add((rows - 1 - r, c))
            seen |= orbit
            orbits += 1
    return orbits


def central_difference(fun, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        g.flat[i] = (fun(x + e) - fun(x - e)) / (2 * h)
    return g


def direct_gaussian_filter(field: np.ndarray, sigma: float, truncate: float = 4.0) -> np.ndarray:
    """Renormalized Gaussian blur by explicit summation (zero padding)."""
    field = np.asarray(field, dtype=float)
    rows, cols = field.shape
    rad = int(truncate * sigma + 0.5)
    k1 = np.exp(-0.5 * (np.arange(-rad, rad + 1) / sigma) ** 2)
    k1 /= k1.sum()
    out = np.zeros_like(field)
    for r in range(rows):
        for c in range(cols):
            num = den = 0.0
            for i in range(-rad, rad + 1):
                for j in range(-rad, rad + 1):
                    rr, cc = r + i, c + j
                    if 0 <= rr < rows and 0 <= cc < cols:
                        w = k1[i + rad] * k1[j + rad]
                        num += w * field[rr, cc]
                        den += w
            out[r, c] = num / den
    return out

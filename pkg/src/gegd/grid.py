"""Pixel grid, mirror symmetry and brush geometry."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


class Symmetry(str, enum.Enum):
    NONE = "none"
    D1_ROWS = "d1-rows"  # mirror across the horizontal axis: row r <-> rows-1-r
    D1_COLS = "d1-cols"  # mirror across the vertical axis: col c <-> cols-1-c

    @classmethod
    def parse(cls, value: "str | Symmetry | None") -> "Symmetry":
        if value is None:
            return cls.NONE
        if isinstance(value, Symmetry):
            return value
        key = str(value).strip().lower().replace("_", "-")
        if key in ("", "none"):
            return cls.NONE
        if key in ("d1", "d1-cols"):
            return cls.D1_COLS
        if key == "d1-rows":
            return cls.D1_ROWS
        raise ValueError(f"unknown symmetry {value!r}")


@dataclass(frozen=True)
class Brush:
    """Discretized disk used for feasible-design touches.

    The mask lives in a ``diameter x diameter`` box. Odd diameters are centered
    on the middle pixel, even diameters on the corner shared by the four middle
    pixels, so the mask is invariant under flips and 90 degree rotations.
    """

    diameter: int
    mask: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.diameter) != self.diameter or self.diameter < 1:
            raise ValueError(f"brush diameter must be a positive integer, got {self.diameter}")
        d = int(self.diameter)
        centers = np.arange(d) + 0.5 - d / 2.0
        dy, dx = np.meshgrid(centers, centers, indexing="ij")
        mask = dy**2 + dx**2 <= (d / 2.0) ** 2
        mask.setflags(write=False)
        object.__setattr__(self, "diameter", d)
        object.__setattr__(self, "mask", mask)

    @property
    def offsets(self) -> np.ndarray:
        """Integer (dy, dx) offsets of the mask relative to the box corner, row-major."""
        return np.argwhere(self.mask)

    @property
    def size(self) -> int:
        return int(self.mask.sum())


@dataclass(frozen=True)
class DesignGrid:
    rows: int
    cols: int
    min_feature: int
    symmetry: Symmetry = Symmetry.NONE
    pixel_pitch: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "symmetry", Symmetry.parse(self.symmetry))
        for name in ("rows", "cols", "min_feature"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value}")
            object.__setattr__(self, name, int(value))
        if self.rows < self.min_feature or self.cols < self.min_feature:
            raise ValueError(
                f"grid {self.rows}x{self.cols} is smaller than the minimum feature {self.min_feature}"
            )
        if self.pixel_pitch <= 0:
            raise ValueError("pixel_pitch must be positive")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def size(self) -> int:
        return self.rows * self.cols

    @property
    def half_shape(self) -> tuple[int, int]:
        """Shape of the independent block (the first ceil(n/2) columns or rows)."""
        if self.symmetry is Symmetry.D1_COLS:
            return (self.rows, math.ceil(self.cols / 2))
        if self.symmetry is Symmetry.D1_ROWS:
            return (math.ceil(self.rows / 2), self.cols)
        return self.shape

    @property
    def n_params(self) -> int:
        """Number of independent parameters N."""
        r, c = self.half_shape
        return r * c

    @cached_property
    def mirror_index(self) -> np.ndarray:
        """Flat index of the mirror image of every pixel (identity without symmetry)."""
        idx = np.arange(self.size).reshape(self.shape)
        if self.symmetry is Symmetry.D1_COLS:
            idx = idx[:, ::-1]
        elif self.symmetry is Symmetry.D1_ROWS:
            idx = idx[::-1, :]
        out = np.ascontiguousarray(idx).ravel()
        out.setflags(write=False)
        return out

    def brush(self) -> Brush:
        return Brush(self.min_feature)

    def pixel_coords(self) -> np.ndarray:
        """(size, 2) array with the (row, col) position of every pixel, row-major."""
        r, c = np.meshgrid(np.arange(self.rows), np.arange(self.cols), indexing="ij")
        return np.stack([r.ravel(), c.ravel()], axis=1).astype(float) * self.pixel_pitch

    def is_symmetric(self, field: np.ndarray, atol: float = 0.0) -> bool:
        field = np.asarray(field).reshape(self.shape)
        return bool(np.allclose(field, self.mirror(field), rtol=0.0, atol=atol))

    def mirror(self, field: np.ndarray) -> np.ndarray:
        field = np.asarray(field).reshape(self.shape)
        if self.symmetry is Symmetry.D1_COLS:
            return field[:, ::-1]
        if self.symmetry is Symmetry.D1_ROWS:
            return field[::-1, :]
        return field

    def symmetrize(self, field: np.ndarray) -> np.ndarray:
        """Average a full field with its mirror image."""
        field = np.asarray(field, dtype=float).reshape(self.shape)
        if self.symmetry is Symmetry.NONE:
            return field.copy()
        return 0.5 * (field + self.mirror(field))

    def restrict(self, field: np.ndarray) -> np.ndarray:
        """Independent half of a full field, flattened row-major."""
        field = np.asarray(field).reshape(self.shape)
        r, c = self.half_shape
        return np.ascontiguousarray(field[:r, :c]).ravel()

    def restrict_adjoint(self, grad_full: np.ndarray) -> np.ndarray:
        """Transpose of :func:`expand_symmetric`: sum a full-grid gradient over each orbit."""
        grad_full = np.asarray(grad_full, dtype=float).reshape(self.shape)
        if self.symmetry is Symmetry.NONE:
            return grad_full.ravel().copy()
        folded = grad_full + self.mirror(grad_full)
        r, c = self.half_shape
        half = folded[:r, :c].copy()
        # pixels on the mirror axis are their own orbit and were counted twice
        if self.symmetry is Symmetry.D1_COLS and self.cols % 2:
            half[:, -1] *= 0.5
        elif self.symmetry is Symmetry.D1_ROWS and self.rows % 2:
            half[-1, :] *= 0.5
        return half.ravel()


def expand_symmetric(half: np.ndarray, grid: DesignGrid) -> np.ndarray:
    """Expand the independent parameters to the full mirror-symmetric field."""
    half = np.asarray(half, dtype=float)
    if half.size != grid.n_params:
        raise ValueError(f"expected {grid.n_params} independent values, got {half.size}")
    r, c = grid.half_shape
    block = half.reshape(r, c)
    if grid.symmetry is Symmetry.NONE:
        return block.copy()
    full = np.empty(grid.shape)
    if grid.symmetry is Symmetry.D1_COLS:
        full[:, :c] = block
        full[:, grid.cols - c :] = block[:, ::-1]
    else:
        full[:r, :] = block
        full[grid.rows - r :, :] = block[::-1, :]
    return full


def mirror_positions(pos: tuple[int, int], grid: DesignGrid) -> set[tuple[int, int]]:
    """Symmetry orbit of a pixel position."""
    r, c = pos
    if not (0 <= r < grid.rows and 0 <= c < grid.cols):
        raise IndexError(f"pixel {pos} outside {grid.rows}x{grid.cols} grid")
    if grid.symmetry is Symmetry.D1_COLS:
        return {(r, c), (r, grid.cols - 1 - c)}
    if grid.symmetry is Symmetry.D1_ROWS:
        return {(r, c), (grid.rows - 1 - r, c)}
    return {(r, c)}


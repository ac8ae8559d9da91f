"""Brush-based feasible design generator (FDG) and feasibility check.

A touch is a brush placement whose center lies inside the grid (on a pixel
for odd diameters, on an interior pixel corner for even diameters). Disk
pixels falling outside the grid are ignored. A design is feasible when every
solid pixel is covered by an all-solid placement and every void pixel by an
all-void placement.

Greedy loop, repeated until every pixel is assigned:

1. pick the valid touch with the largest score, where a solid touch scores
   the sum of the reward over its unassigned pixels and a void touch scores
   minus that sum (ties: lowest placement index, solid before void);
2. apply it together with its mirror touch;
3. any unassigned pixel that can no longer be reached by the opposite phase
   is resolved immediately with the best valid touch of the applied phase
   that covers it.

Step 3 never dead-ends: applying solid touches cannot invalidate other solid
touches (and likewise for void), so a pixel that just lost its last void
option still has a solid one. That keeps the output feasible by construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numba
import numpy as np

from .grid import Brush, DesignGrid, Symmetry

UNASSIGNED, SOLID, VOID = 0, 1, 2


@dataclass(frozen=True)
class FeasibleDesign:
    """Binary design, 1 = solid, 0 = void."""

    rho_f: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.rho_f, dtype=np.int8)
        if arr.ndim != 2 or not np.all((arr == 0) | (arr == 1)):
            raise ValueError("a feasible design is a 2-D array of 0/1 values")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "rho_f", arr)

    @property
    def shape(self) -> tuple[int, int]:
        return self.rho_f.shape

    def key(self) -> bytes:
        """Compact content key (shape + packed bits)."""
        r, c = self.shape
        return r.to_bytes(4, "little") + c.to_bytes(4, "little") + np.packbits(self.rho_f.ravel()).tobytes()

    def __eq__(self, other):
        return isinstance(other, FeasibleDesign) and np.array_equal(self.rho_f, other.rho_f)

    def __hash__(self):
        return hash(self.key())


def placement_origins(rows: int, cols: int, diameter: int) -> tuple[np.ndarray, np.ndarray]:
    """Top-left corners (row, col) of every allowed brush box, row-major."""

    def axis(n: int) -> np.ndarray:
        if diameter % 2:
            return np.arange(n) - (diameter - 1) // 2
        return np.arange(1, n) - diameter // 2

    return axis(rows), axis(cols)


@dataclass(frozen=True)
class _Topology:
    t_ptr: np.ndarray
    t_pix: np.ndarray
    p_ptr: np.ndarray
    p_tou: np.ndarray
    t_mirror: np.ndarray


@lru_cache(maxsize=64)
def _topology(rows: int, cols: int, diameter: int, symmetry: Symmetry) -> _Topology:
    brush = Brush(diameter)
    offs = brush.offsets
    r0s, c0s = placement_origins(rows, cols, diameter)
    n_r, n_c = len(r0s), len(c0s)
    t_ptr = [0]
    t_pix: list[int] = []
    touches_of_pixel: list[list[int]] = [[] for _ in range(rows * cols)]
    for i, r0 in enumerate(r0s):
        for j, c0 in enumerate(c0s):
            t = i * n_c + j
            for dy, dx in offs:
                r, c = r0 + dy, c0 + dx
                if 0 <= r < rows and 0 <= c < cols:
                    p = r * cols + c
                    t_pix.append(p)
                    touches_of_pixel[p].append(t)
            t_ptr.append(len(t_pix))
    p_ptr = np.cumsum([0] + [len(x) for x in touches_of_pixel])
    p_tou = np.array([t for x in touches_of_pixel for t in x], dtype=np.int64)

    ii, jj = np.meshgrid(np.arange(n_r), np.arange(n_c), indexing="ij")
    if symmetry is Symmetry.D1_COLS:
        jj = (cols - diameter - c0s[jj]) - c0s[0]
    elif symmetry is Symmetry.D1_ROWS:
        ii = (rows - diameter - r0s[ii]) - r0s[0]
    t_mirror = (ii * n_c + jj).ravel().astype(np.int64)
    return _Topology(
        np.asarray(t_ptr, dtype=np.int64),
        np.asarray(t_pix, dtype=np.int64),
        p_ptr.astype(np.int64),
        p_tou,
        t_mirror,
    )


@numba.njit(cache=True, nogil=True)
def _score(t, reward, state, t_ptr, t_pix, buf):
    # sum over unassigned pixels in order of increasing |reward|; equal value
    # multisets then give bit-identical scores (mirror ties stay exact)
    n = 0
    for k in range(t_ptr[t], t_ptr[t + 1]):
        p = t_pix[k]
        if state[p] == 0:
            v = reward[p]
            a = abs(v)
            m = n
            while m > 0 and abs(buf[m - 1]) > a:
                buf[m] = buf[m - 1]
                m -= 1
            buf[m] = v
            n += 1
    s = 0.0
    for m in range(n):
        s += buf[m]
    return s


@numba.njit(cache=True, nogil=True)
def _apply(t, phase, reward, state, n_u, n_s, n_v, score, cnt_s, cnt_v,
           t_ptr, t_pix, p_ptr, p_tou, queue_s, qs_end, queue_v, qv_end, dirty, dirty_list, buf):
    n_dirty = 0
    assigned = 0
    for k in range(t_ptr[t], t_ptr[t + 1]):
        p = t_pix[k]
        if state[p] != 0:
            continue
        state[p] = phase
        assigned += 1
        for kk in range(p_ptr[p], p_ptr[p + 1]):
            u = p_tou[kk]
            n_u[u] -= 1
            if not dirty[u]:
                dirty[u] = True
                dirty_list[n_dirty] = u
                n_dirty += 1
            if phase == 1:
                n_s[u] += 1
                if n_s[u] == 1:
                    # void touch u just became invalid
                    for k2 in range(t_ptr[u], t_ptr[u + 1]):
                        q = t_pix[k2]
                        cnt_v[q] -= 1
                        if cnt_v[q] == 0 and state[q] == 0:
                            queue_s[qs_end] = q
                            qs_end += 1
            else:
                n_v[u] += 1
                if n_v[u] == 1:
                    for k2 in range(t_ptr[u], t_ptr[u + 1]):
                        q = t_pix[k2]
                        cnt_s[q] -= 1
                        if cnt_s[q] == 0 and state[q] == 0:
                            queue_v[qv_end] = q
                            qv_end += 1
    for m in range(n_dirty):
        u = dirty_list[m]
        dirty[u] = False
        score[u] = _score(u, reward, state, t_ptr, t_pix, buf)
    return assigned, qs_end, qv_end


@numba.njit(cache=True, nogil=True)
def _best_cover(q, phase, n_s, n_v, score, p_ptr, p_tou):
    best = -1
    best_val = 0.0
    for kk in range(p_ptr[q], p_ptr[q + 1]):
        u = p_tou[kk]
        if phase == 1:
            if n_v[u] != 0:
                continue
            val = score[u]
        else:
            if n_s[u] != 0:
                continue
            val = -score[u]
        if best < 0 or val > best_val or (val == best_val and u < best):
            best = u
            best_val = val
    return best


@numba.njit(cache=True, nogil=True)
def _generate(reward, t_ptr, t_pix, p_ptr, p_tou, t_mirror):
    n_pix = reward.shape[0]
    n_t = t_ptr.shape[0] - 1
    state = np.zeros(n_pix, dtype=np.int8)
    n_u = np.empty(n_t, dtype=np.int64)
    n_s = np.zeros(n_t, dtype=np.int64)
    n_v = np.zeros(n_t, dtype=np.int64)
    score = np.empty(n_t)
    max_len = 1
    for t in range(n_t):
        n_u[t] = t_ptr[t + 1] - t_ptr[t]
        if n_u[t] > max_len:
            max_len = n_u[t]
    buf = np.empty(max_len)
    for t in range(n_t):
        score[t] = _score(t, reward, state, t_ptr, t_pix, buf)
    cnt_s = np.empty(n_pix, dtype=np.int64)
    cnt_v = np.empty(n_pix, dtype=np.int64)
    for p in range(n_pix):
        cnt_s[p] = p_ptr[p + 1] - p_ptr[p]
        cnt_v[p] = cnt_s[p]
    queue_s = np.empty(n_pix, dtype=np.int64)
    queue_v = np.empty(n_pix, dtype=np.int64)
    qs_head = 0
    qs_end = 0
    qv_head = 0
    qv_end = 0
    dirty = np.zeros(n_t, dtype=np.bool_)
    dirty_list = np.empty(n_t, dtype=np.int64)
    remaining = n_pix
    n_touches = 0

    while remaining > 0:
        # pending forced pixels first
        if qs_head < qs_end or qv_head < qv_end:
            if qs_head < qs_end:
                q = queue_s[qs_head]
                qs_head += 1
                phase = 1
            else:
                q = queue_v[qv_head]
                qv_head += 1
                phase = 2
            if state[q] != 0:
                continue
            t = _best_cover(q, phase, n_s, n_v, score, p_ptr, p_tou)
            if t < 0:
                return state, -1 - q
        else:
            t = -1
            best_val = 0.0
            phase = 0
            for u in range(n_t):
                if n_u[u] == 0:
                    continue
                if n_v[u] == 0 and (t < 0 or score[u] > best_val):
                    t = u
                    best_val = score[u]
                    phase = 1
                if n_s[u] == 0 and (t < 0 or -score[u] > best_val):
                    t = u
                    best_val = -score[u]
                    phase = 2
            if t < 0:
                return state, -1 - n_pix
        for tt in (t, t_mirror[t]):
            if (phase == 1 and n_v[tt] != 0) or (phase == 2 and n_s[tt] != 0):
                return state, -2 - n_pix
            a, qs_end, qv_end = _apply(
                tt, phase, reward, state, n_u, n_s, n_v, score, cnt_s, cnt_v,
                t_ptr, t_pix, p_ptr, p_tou, queue_s, qs_end, queue_v, qv_end,
                dirty, dirty_list, buf,
            )
            remaining -= a
        n_touches += 1
    return state, n_touches


def generate(reward: np.ndarray, grid: DesignGrid, brush: Brush | None = None) -> FeasibleDesign:
    """Turn a reward field into a feasible binary design.

    Args:
        reward: full-grid reward field (positive favours solid).
        grid: design grid; with a mirror symmetry the reward must be symmetric.
        brush: defaults to the grid's minimum-feature brush.

    Raises:
        ValueError: wrong shape, non-finite values, brush/grid mismatch or an
            asymmetric reward on a symmetric grid.
    """
    brush = brush or grid.brush()
    if brush.diameter != grid.min_feature:
        raise ValueError(f"brush diameter {brush.diameter} != grid min_feature {grid.min_feature}")
    reward = np.asarray(reward, dtype=np.float64)
    if reward.size != grid.size:
        raise ValueError(f"reward has {reward.size} entries, grid needs {grid.size}")
    reward = np.ascontiguousarray(reward.reshape(grid.shape))
    if not np.all(np.isfinite(reward)):
        raise ValueError("reward contains non-finite values")
    if grid.symmetry is not Symmetry.NONE and not np.array_equal(reward, grid.mirror(reward)):
        raise ValueError("reward field is not symmetric under the grid symmetry")
    topo = _topology(grid.rows, grid.cols, brush.diameter, grid.symmetry)
    state, status = _generate(reward.ravel(), topo.t_ptr, topo.t_pix, topo.p_ptr, topo.p_tou, topo.t_mirror)
    if status < 0:  # pragma: no cover - invariant violation
        raise RuntimeError(f"feasible design generator reached an inconsistent state ({status})")
    return FeasibleDesign((state == SOLID).astype(np.int8).reshape(grid.shape))


def generate_scaled(reward: np.ndarray, scale: float, grid: DesignGrid, brush: Brush | None = None) -> FeasibleDesign:
    """Generate from ``scale * reward``; identical to ``generate(reward)`` for any scale > 0."""
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale}")
    return generate(scale * np.asarray(reward, dtype=float), grid, brush)


def _phase_covered(phase_mask: np.ndarray, brush: Brush) -> np.ndarray:
    """Pixels of ``phase_mask`` covered by a placement lying entirely in the phase."""
    rows, cols = phase_mask.shape
    d = brush.diameter
    # outside the grid is compatible with either phase
    padded = np.pad(phase_mask, d, constant_values=True)
    r0s, c0s = placement_origins(rows, cols, d)
    covered = np.zeros((rows + 2 * d, cols + 2 * d), dtype=bool)
    fits = np.ones((len(r0s), len(c0s)), dtype=bool)
    offs = brush.offsets
    for dy, dx in offs:
        rr = r0s[:, None] + dy + d
        cc = c0s[None, :] + dx + d
        fits &= padded[rr, cc]
    for dy, dx in offs:
        rr = r0s[:, None] + dy + d
        cc = c0s[None, :] + dx + d
        covered[np.broadcast_to(rr, fits.shape)[fits], np.broadcast_to(cc, fits.shape)[fits]] = True
    return covered[d : d + rows, d : d + cols] & phase_mask


def check_feasibility(design: "FeasibleDesign | np.ndarray", brush: Brush) -> bool:
    """True when both phases are unions of monochrome brush placements."""
    rho = design.rho_f if isinstance(design, FeasibleDesign) else np.asarray(design)
    solid = rho.astype(bool)
    if solid.ndim != 2:
        raise ValueError("design must be 2-D")
    if min(solid.shape) < 1:
        return True
    if brush.diameter % 2 == 0 and min(solid.shape) < 2:
        return False
    solid_ok = np.array_equal(_phase_covered(solid, brush), solid)
    void_ok = np.array_equal(_phase_covered(~solid, brush), ~solid)
    return bool(solid_ok and void_ok)

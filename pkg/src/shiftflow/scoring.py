"""Velocity-hypothesis scoring on the occupancy grid.

Everything except :func:`jump_to_velocity` models the integer datapath:
only add, subtract, compare, shift, popcount and products of values bounded
by ``L``. Widths are checked through :mod:`shiftflow.datapath` when an
audit is active. ``jump_to_velocity`` runs on the host.

Trace convention ("canonical"): hypothesis ``j`` at active pixel ``x0``
reads ``(x0 - j*h, slot L-1-h)`` for ``h = 0..L-1``, i.e. the diagonal that
ends at the pixel's own newest cell. The alternative ``"literal"`` mode
reads ``(x0 - j*h, slot L-h)`` for ``h = 1..L``. Both stop at the first
out-of-bounds pixel.
"""

from __future__ import annotations

import functools
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .binning import OccupancyVector
from .datapath import check_array_width, check_width, score_width, tree_depth
from .grid import OccupancyGrid

RAW = "raw"
NORMALIZED = "normalized"
CANONICAL = "canonical"
LITERAL = "literal"


@dataclass(frozen=True)
class HypothesisParams:
    J: int = 15
    L: int = 16
    beta: int = 4
    theta_s: int = 5
    mode: str = RAW
    trace_mode: str = CANONICAL

    def __post_init__(self) -> None:
        if self.J < 1:
            raise ValueError(f"J must be >= 1, got {self.J}")
        if self.L < 1:
            raise ValueError(f"L must be >= 1, got {self.L}")
        if not 1 <= self.beta <= self.L:
            raise ValueError(f"beta must be in [1, L={self.L}], got {self.beta}")
        if not 0 <= self.theta_s <= self.L:
            raise ValueError(f"theta_s must be in [0, L={self.L}], got {self.theta_s}")
        if self.mode not in (RAW, NORMALIZED):
            raise ValueError(f"unknown scorer mode {self.mode!r}")
        if self.trace_mode not in (CANONICAL, LITERAL):
            raise ValueError(f"unknown trace mode {self.trace_mode!r}")

    @property
    def lanes(self) -> int:
        return 2 * self.J + 1

    @property
    def jumps(self) -> range:
        return range(-self.J, self.J + 1)

    @property
    def width(self) -> int:
        """Score / step-count register width."""
        return score_width(self.L)

    def check_sensor(self, n: int) -> None:
        """Warn when ``J`` exceeds the useful bound ``floor(n / L)``."""
        if self.J * self.L > n:
            warnings.warn(
                f"J={self.J} exceeds floor(N/L)={n // self.L}; large jumps leave the sensor early",
                stacklevel=2,
            )


def theta_s_from_fraction(frac: float, L: int) -> int:
    """Round ``frac * L`` to the nearest integer raw-score threshold."""
    return int(np.floor(frac * L + 0.5))


class HypothesisScore(NamedTuple):
    j: int
    R: int
    H: int


class PixelWinner(NamedTuple):
    x0: int
    j: int
    R: int
    H: int


def trace(grid: OccupancyGrid, x0: int, j: int, params: HypothesisParams) -> HypothesisScore:
    """Walk the diagonal for jump ``j`` ending at ``x0`` and count occupied cells.

    ``R`` is forced to 0 when fewer than ``beta`` steps stayed in bounds.
    """
    n = grid.n
    # Both modes walk slots L-1 down to 0; literal mode starts one jump back.
    x = x0 if params.trace_mode == CANONICAL else x0 - j
    slot = grid.depth - 1
    R = H = 0
    for _ in range(grid.depth):
        if not 0 <= x < n:
            break
        R += grid.read_cell(x, slot)
        H += 1
        x -= j
        slot -= 1
    width = params.width
    check_width(R, width, "R")
    check_width(H, width, "H")
    if H < params.beta:
        R = 0
    return HypothesisScore(j, R, H)


def score_all(grid: OccupancyGrid, x0: int, params: HypothesisParams) -> list[HypothesisScore]:
    """Scores for ``j = -J..+J`` in that order."""
    return [trace(grid, x0, j, params) for j in params.jumps]


def _tie_break(a: HypothesisScore, b: HypothesisScore) -> HypothesisScore:
    # Slower hypothesis first; at equal magnitude the positive jump wins.
    if abs(a.j) != abs(b.j):
        return a if abs(a.j) < abs(b.j) else b
    return a if a.j >= b.j else b


def compare_raw(a: HypothesisScore, b: HypothesisScore) -> HypothesisScore:
    if a.R != b.R:
        return a if a.R > b.R else b
    return _tie_break(a, b)


def compare_normalized(a: HypothesisScore, b: HypothesisScore, L: int = 16) -> HypothesisScore:
    """Compare ``R/H`` ratios by cross-multiplication (no divider)."""
    lhs = a.R * b.H
    rhs = b.R * a.H
    product_bits = 2 * score_width(L)
    check_width(lhs, product_bits, "R_a*H_b")
    check_width(rhs, product_bits, "R_b*H_a")
    if lhs != rhs:
        return a if lhs > rhs else b
    return _tie_break(a, b)


def _theta_lut(params: HypothesisParams) -> tuple[int, ...]:
    # theta_s * H for every possible H: a constant table in hardware.
    return tuple(params.theta_s * h for h in range(params.L + 1))


def passes_threshold(s: HypothesisScore, params: HypothesisParams) -> bool:
    if params.mode == RAW:
        return s.R > params.theta_s
    lhs = s.R * params.L
    rhs = _theta_lut(params)[s.H]
    product_bits = 2 * params.width
    check_width(lhs, product_bits, "R*L")
    check_width(rhs, product_bits, "theta_s*H")
    return lhs > rhs


def select_winner(
    scores: Sequence[HypothesisScore], params: HypothesisParams, x0: int = -1
) -> Optional[PixelWinner]:
    """Reduce the passing hypotheses through a binary comparator tree."""
    if params.mode == RAW:
        better = compare_raw
    else:
        L = params.L

        def better(a, b):
            return compare_normalized(a, b, L)

    level: list[Optional[HypothesisScore]] = [
        s if s.H >= params.beta and passes_threshold(s, params) else None for s in scores
    ]
    stages = 0
    while len(level) > 1:
        nxt = []
        for i in range(0, len(level) - 1, 2):
            a, b = level[i], level[i + 1]
            if a is None or b is None:
                nxt.append(a if b is None else b)
            else:
                nxt.append(better(a, b))
        if len(level) & 1:
            nxt.append(level[-1])
        level = nxt
        stages += 1
    assert stages <= tree_depth(len(scores))
    best = level[0] if level else None
    if best is None:
        return None
    return PixelWinner(x0, best.j, best.R, best.H)


def winner_at(grid: OccupancyGrid, x0: int, params: HypothesisParams) -> Optional[PixelWinner]:
    return select_winner(score_all(grid, x0, params), params, x0)


# -- bulk (all pixels x all hypotheses) -------------------------------------


@functools.lru_cache(maxsize=64)
def _trace_index(n: int, params: HypothesisParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pixel index, slot index and in-bounds mask, each shaped ``(n, 2J+1, L)``."""
    L = params.L
    xs = np.arange(n)[:, None, None]
    js = np.arange(-params.J, params.J + 1)[None, :, None]
    if params.trace_mode == CANONICAL:
        hs = np.arange(L)[None, None, :]
        slots = np.broadcast_to(L - 1 - hs, (n, params.lanes, L))
    else:
        hs = np.arange(1, L + 1)[None, None, :]
        slots = np.broadcast_to(L - hs, (n, params.lanes, L))
    pix = xs - js * hs
    inside = (pix >= 0) & (pix < n)
    # Early termination: once a step leaves the sensor, later ones are dropped too.
    inside = np.cumprod(inside, axis=2).astype(bool)
    pix = np.where(inside, pix, 0)
    for arr in (pix, inside):
        arr.setflags(write=False)
    return pix, slots, inside


def step_counts(n: int, params: HypothesisParams) -> np.ndarray:
    """In-bounds step count ``H`` for every (pixel, hypothesis); depends only on geometry."""
    _, _, inside = _trace_index(n, params)
    return inside.sum(axis=2).astype(np.int64)


def trace_scores(
    grid: OccupancyGrid, params: HypothesisParams, pixels: Sequence[int] | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Trace-based ``(R, H)`` for all hypotheses, shape ``(len(pixels), 2J+1)``.

    Defaults to every pixel. Same values as calling :func:`trace` at each
    ``(x0, j)``, including the ``beta`` masking of ``R``.
    """
    cells = grid.to_array()
    pix, slots, inside = _trace_index(grid.n, params)
    if pixels is not None:
        rows = np.asarray(pixels, dtype=np.int64)
        pix, slots, inside = pix[rows], slots[rows], inside[rows]
    hits = cells[slots, pix] & inside
    R = hits.sum(axis=2).astype(np.int64)
    H = inside.sum(axis=2).astype(np.int64)
    check_array_width(R, params.width, "R")
    check_array_width(H, params.width, "H")
    R[H < params.beta] = 0
    return R, H


def scores_from_arrays(R_row, H_row, params: HypothesisParams) -> list[HypothesisScore]:
    return [HypothesisScore(j, int(r), int(h)) for j, r, h in zip(params.jumps, R_row, H_row)]


class ScoreArray:
    """Running per-pixel, per-hypothesis scores for the incremental scorer.

    Stored values are unmasked coincidence counts; ``beta`` is applied on
    read so the stored recurrence stays a plain +/-1 update.
    """

    def __init__(self, n: int, params: HypothesisParams) -> None:
        if params.trace_mode != CANONICAL:
            raise ValueError("incremental scoring requires the canonical trace")
        self.n = n
        self.params = params
        self.R = np.zeros((n, params.lanes), dtype=np.int64)
        self.H = step_counts(n, params)
        xs = np.arange(n)[:, None]
        js = np.arange(-params.J, params.J + 1)[None, :]
        self._cols = np.broadcast_to(np.arange(params.lanes)[None, :], (n, params.lanes))
        # Previous-bin source pixel for the shifted trace, and the cell that ages out.
        self._src = xs - js
        self._src_ok = (self._src >= 0) & (self._src < n)
        self._src = np.where(self._src_ok, self._src, 0)
        self._old = xs - js * params.L
        self._old_ok = (self._old >= 0) & (self._old < n)
        self._old = np.where(self._old_ok, self._old, 0)

    def storage_bits(self) -> int:
        return self.n * self.params.lanes * self.params.width

    def reset(self) -> None:
        self.R[:] = 0

    def rebuild(self, grid: OccupancyGrid) -> None:
        """Recompute from scratch with the trace scorer (unmasked)."""
        params = self.params
        cells = grid.to_array()
        pix, slots, inside = _trace_index(grid.n, params)
        self.R = (cells[slots, pix] & inside).sum(axis=2).astype(np.int64)

    def update(self, grid_before: OccupancyGrid, new_vec: OccupancyVector) -> None:
        """Advance one bin. Call with the grid *before* ``new_vec`` is shifted in.

        ``R[x0][j] <- R[x0 - j][j] - G[x0 - j*L, 0] + new[x0]``, with
        out-of-range sources read as 0.
        """
        if grid_before.n != self.n or new_vec.n != self.n:
            raise ValueError("dimension mismatch between score array, grid and vector")
        if grid_before.depth != self.params.L:
            raise ValueError("grid depth does not match L")
        oldest = np.frombuffer(_bits_bytes(grid_before.slot_bits(0), self.n), dtype=np.uint8)
        oldest = np.unpackbits(oldest, bitorder="little")[: self.n].astype(np.int64)
        new = new_vec.to_array().astype(np.int64)
        shifted = np.where(self._src_ok, self.R[self._src, self._cols], 0)
        aged = np.where(self._old_ok, oldest[self._old], 0)
        self.R = shifted - aged + new[:, None]
        check_array_width(self.R, self.params.width, "R_hat")

    def masked(self) -> tuple[np.ndarray, np.ndarray]:
        """``(R, H)`` as the trace scorer reports them (``beta`` applied)."""
        R = self.R.copy()
        R[self.H < self.params.beta] = 0
        return R, self.H

    def scores_at(self, x0: int) -> list[HypothesisScore]:
        out = []
        beta = self.params.beta
        for k, j in enumerate(self.params.jumps):
            H = int(self.H[x0, k])
            R = int(self.R[x0, k]) if H >= beta else 0
            out.append(HypothesisScore(j, R, H))
        return out


def _bits_bytes(bits: int, n: int) -> bytes:
    return bits.to_bytes((n + 7) >> 3 or 1, "little")


def incremental_update(
    arr: ScoreArray,
    grid_before: OccupancyGrid,
    new_vec: OccupancyVector,
    params: HypothesisParams | None = None,
) -> ScoreArray:
    if params is not None and params != arr.params:
        raise ValueError("params differ from the score array's params")
    arr.update(grid_before, new_vec)
    return arr


def jump_to_velocity(j_star: int, delta_t_us: int) -> float:
    """Pixels per second for a jump of ``j_star`` pixels per bin (host-side)."""
    if delta_t_us <= 0:
        raise ValueError("delta_t must be positive")
    return j_star * 1e6 / delta_t_us

"""N x L one-bit occupancy history with shift-register update.

Layout: one N-bit Python int per time slot (slot 0 oldest, slot L-1 newest),
pixel ``x`` in bit ``x``. A shift-insert is a list rotation; reading cell
``(x, l)`` is ``(slots[l] >> x) & 1``, so a hypothesis trace is a walk over
slots with a pixel stride of ``j``.
"""

from __future__ import annotations

import numpy as np

from .binning import OccupancyVector, unpack_bits


class OccupancyGrid:
    def __init__(self, n: int, depth: int) -> None:
        if n <= 0 or depth <= 0:
            raise ValueError(f"grid dimensions must be positive, got {n}x{depth}")
        self.n = n
        self.depth = depth
        self._slots = [0] * depth
        self.filled = 0

    @property
    def is_full(self) -> bool:
        return self.filled == self.depth

    def payload_bits(self) -> int:
        return self.n * self.depth

    def shift_insert(self, vec: OccupancyVector | int) -> None:
        bits = vec
        if isinstance(vec, OccupancyVector):
            if vec.n != self.n:
                raise ValueError(f"vector has {vec.n} pixels, grid has {self.n}")
            bits = vec.bits
        elif bits < 0 or bits >> self.n:
            raise ValueError(f"bits do not fit in {self.n} pixels")
        del self._slots[0]
        self._slots.append(bits)
        if self.filled < self.depth:
            self.filled += 1

    def read_cell(self, x: int, slot: int) -> int:
        if not 0 <= x < self.n:
            raise IndexError(f"pixel {x} outside [0, {self.n})")
        if not 0 <= slot < self.depth:
            raise IndexError(f"slot {slot} outside [0, {self.depth})")
        return (self._slots[slot] >> x) & 1

    def slot_bits(self, slot: int) -> int:
        """Whole slot as a packed int (one bit per pixel)."""
        return self._slots[slot]

    def newest(self) -> int:
        return self._slots[-1]

    def reset(self) -> None:
        self._slots = [0] * self.depth
        self.filled = 0

    def copy(self) -> "OccupancyGrid":
        other = OccupancyGrid(self.n, self.depth)
        other._slots = list(self._slots)
        other.filled = self.filled
        return other

    def to_array(self) -> np.ndarray:
        """``(L, N)`` uint8 array indexed ``[slot, pixel]``."""
        return np.stack([unpack_bits(s, self.n) for s in self._slots])

    def dump(self) -> str:
        """L lines of N '0'/'1' characters, oldest slot first."""
        rows = []
        for s in self._slots:
            rows.append("".join("1" if (s >> x) & 1 else "0" for x in range(self.n)))
        return "\n".join(rows) + "\n"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, OccupancyGrid):
            return NotImplemented
        return (self.n, self.depth, self._slots, self.filled) == (
            other.n,
            other.depth,
            other._slots,
            other.filled,
        )

    def __repr__(self) -> str:
        return f"OccupancyGrid(n={self.n}, depth={self.depth}, filled={self.filled})"

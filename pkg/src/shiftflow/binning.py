"""Time-bin accumulation, occupancy thresholding and bin-duration adaptation."""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, fields, replace
from typing import Iterable, Sequence

import numpy as np

from .datapath import check_array_width
from .events import Event

COUNTER_BITS = 8
COUNTER_MAX = (1 << COUNTER_BITS) - 1

# Typical bin-duration range for real sensors, in microseconds.
TYPICAL_DT_MIN_US = 5_000
TYPICAL_DT_MAX_US = 50_000


@dataclass(frozen=True)
class BinConfig:
    """Binning parameters. Times are in microseconds.

    ``delta_t_min``/``delta_t_max`` default to that typical range widened to
    include ``delta_t``. ``hold_bins`` is the number of bins after a change
    during which the duration may not change again.
    """

    delta_t: int
    theta_e: int
    rho_lo: float = 0.10
    rho_hi: float = 0.40
    delta_t_min: int | None = None
    delta_t_max: int | None = None
    hold_bins: int = 16
    adapt: bool = False
    rescale_theta: bool = True

    def __post_init__(self) -> None:
        if self.delta_t_min is None:
            object.__setattr__(self, "delta_t_min", min(self.delta_t, TYPICAL_DT_MIN_US))
        if self.delta_t_max is None:
            object.__setattr__(self, "delta_t_max", max(self.delta_t, TYPICAL_DT_MAX_US))
        if self.delta_t <= 0:
            raise ValueError(f"delta_t must be positive, got {self.delta_t}")
        if self.theta_e < 1:
            raise ValueError(f"theta_e must be >= 1, got {self.theta_e}")
        if not 0 < self.delta_t_min <= self.delta_t <= self.delta_t_max:
            raise ValueError(
                f"need 0 < delta_t_min <= delta_t <= delta_t_max, got "
                f"{self.delta_t_min}, {self.delta_t}, {self.delta_t_max}"
            )
        if not 0 < self.rho_lo < self.rho_hi < 1:
            raise ValueError(f"need 0 < rho_lo < rho_hi < 1, got {self.rho_lo}, {self.rho_hi}")
        if self.hold_bins < 0:
            raise ValueError("hold_bins must be >= 0")

    @classmethod
    def from_mapping(cls, values: dict) -> "BinConfig":
        kinds = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            key = key.strip().replace("-", "_")
            if key not in kinds:
                raise ValueError(f"unknown binning key {key!r}")
            kind = str(kinds[key])
            if isinstance(raw, str):
                if "bool" in kind:
                    raw = raw.strip().lower() in ("1", "true", "yes", "on")
                elif "float" in kind:
                    raw = float(raw)
                else:
                    raw = int(raw)
            kwargs[key] = raw
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str | os.PathLike, section: str = "binning") -> "BinConfig":
        """Load from an INI-style key-value file (``[binning]`` section)."""
        parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        if not parser.read(path):
            raise FileNotFoundError(path)
        if not parser.has_section(section):
            raise ValueError(f"{path}: missing [{section}] section")
        return cls.from_mapping(dict(parser.items(section)))


@dataclass(frozen=True)
class OccupancyVector:
    """``n`` packed occupancy bits; bit ``x`` of ``bits`` is pixel ``x``."""

    bits: int
    n: int
    bin_index: int = 0

    def __post_init__(self) -> None:
        if self.bits < 0 or self.bits >> self.n:
            raise ValueError(f"bits do not fit in {self.n} pixels")

    def __getitem__(self, x: int) -> int:
        if not 0 <= x < self.n:
            raise IndexError(x)
        return (self.bits >> x) & 1

    def __len__(self) -> int:
        return self.n

    def popcount(self) -> int:
        return self.bits.bit_count()

    def active(self) -> list[int]:
        """Set pixel indices, ascending."""
        out = []
        b = self.bits
        while b:
            low = b & -b
            out.append(low.bit_length() - 1)
            b ^= low
        return out

    def to_array(self) -> np.ndarray:
        return unpack_bits(self.bits, self.n)

    @classmethod
    def from_array(cls, arr: Sequence[int] | np.ndarray, bin_index: int = 0) -> "OccupancyVector":
        arr = np.asarray(arr, dtype=bool)
        return cls(pack_bits(arr), int(arr.size), bin_index)


def pack_bits(arr: np.ndarray) -> int:
    """Pack a 1-D boolean array into an int, element 0 in the least significant bit."""
    return int.from_bytes(np.packbits(np.asarray(arr, dtype=bool), bitorder="little").tobytes(), "little")


def unpack_bits(bits: int, n: int) -> np.ndarray:
    raw = np.frombuffer(bits.to_bytes((n + 7) // 8 or 1, "little"), dtype=np.uint8)
    return np.unpackbits(raw, bitorder="little")[:n].astype(np.uint8)


class BinIntervalError(ValueError):
    pass


class AxisAccumulator:
    """Bank of 8-bit saturating per-pixel event counters for one axis.

    The current bin covers ``[bin_start, bin_start + delta_t)``.
    """

    def __init__(self, n: int, delta_t: int, bin_start: int = 0, bin_index: int = 0) -> None:
        self.n = n
        self.delta_t = delta_t
        self.bin_start = bin_start
        self.bin_index = bin_index
        self.counts = np.zeros(n, dtype=np.uint8)

    @property
    def bin_end(self) -> int:
        return self.bin_start + self.delta_t

    def _check_time(self, t: int) -> None:
        if not self.bin_start <= t < self.bin_end:
            raise BinIntervalError(
                f"event at t={t} outside bin {self.bin_index} [{self.bin_start}, {self.bin_end})"
            )

    def accumulate(self, event: Event, axis: str = "x") -> None:
        """Count one event at its ``axis`` coordinate; polarity and the other axis are ignored."""
        self._check_time(event.t)
        coord = event.x if axis == "x" else event.y
        if self.counts[coord] < COUNTER_MAX:
            self.counts[coord] += 1

    def accumulate_coords(self, coords: Iterable[int] | np.ndarray) -> None:
        """Bulk equivalent of repeated :meth:`accumulate` (times checked by the caller)."""
        coords = np.asarray(coords, dtype=np.int64)
        if coords.size == 0:
            return
        if coords.min() < 0 or coords.max() >= self.n:
            raise IndexError("coordinate outside axis")
        hist = np.bincount(coords, minlength=self.n)
        total = self.counts.astype(np.int64) + hist
        self.counts = np.minimum(total, COUNTER_MAX).astype(np.uint8)

    def close_bin(self, theta_e: int) -> OccupancyVector:
        """Threshold (``count >= theta_e``), clear the counters and advance to the next bin."""
        check_array_width(self.counts, COUNTER_BITS, "event_counter")
        vec = OccupancyVector(pack_bits(self.counts >= theta_e), self.n, self.bin_index)
        self.counts[:] = 0
        self.bin_index += 1
        self.bin_start += self.delta_t
        return vec

    def restart(self, bin_start: int, delta_t: int) -> None:
        """Discard partial counts and start a fresh bin (used after a duration change)."""
        self.counts[:] = 0
        self.bin_start = bin_start
        self.delta_t = delta_t


def occupancy_density(vec: OccupancyVector) -> float:
    return vec.popcount() / vec.n


def adapt_bin_duration(
    cfg: BinConfig, density: float, bins_since_last_change: int
) -> tuple[int, int, bool]:
    """One step of the density-feedback controller.

    Doubles ``delta_t`` below ``rho_lo``, halves it above ``rho_hi`` (both
    clamped), and holds for ``cfg.hold_bins`` bins after any change. With
    ``cfg.rescale_theta`` the event threshold follows ``delta_t``
    proportionally (rounded, at least 1).
    """
    dt, theta = cfg.delta_t, cfg.theta_e
    if bins_since_last_change < cfg.hold_bins:
        return dt, theta, False
    if density < cfg.rho_lo:
        new_dt = min(dt * 2, cfg.delta_t_max)
    elif density > cfg.rho_hi:
        new_dt = max(dt // 2, cfg.delta_t_min)
    else:
        return dt, theta, False
    if new_dt == dt:
        return dt, theta, False
    if cfg.rescale_theta:
        theta = max(1, (theta * new_dt * 2 + dt) // (2 * dt))
    return new_dt, theta, True


def with_duration(cfg: BinConfig, delta_t: int, theta_e: int) -> BinConfig:
    return replace(cfg, delta_t=delta_t, theta_e=theta_e)

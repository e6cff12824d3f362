"""Closed-form storage and latency model of the scoring datapath."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import TextIO

from ..datapath import score_width, tree_depth

COUNTER_BITS = 8
# The resource table sizes each step counter at 4 bits even though H reaches L.
PRINTED_STEP_COUNTER_BITS = 4

TRACE = "trace"
INCREMENTAL = "incremental"


@dataclass
class AxisCost:
    n: int
    grid_bits: int
    counter_bits: int
    accumulator_bits: int
    step_counter_bits: int
    step_counter_bits_required: int
    incremental_extra_bits: int

    @property
    def total_bits(self) -> int:
        return self.grid_bits + self.counter_bits + self.accumulator_bits + self.step_counter_bits


@dataclass
class CostReport:
    L: int
    J: int
    clock_hz: float
    variant: str
    lanes: int
    score_bits: int
    comparator_stages: int
    trace_cycles_per_pixel: int
    incremental_cycles_per_pixel: int
    x: AxisCost
    y: AxisCost
    n_active: int
    notes: list[str] = field(default_factory=list)

    @property
    def cycles_per_pixel(self) -> int:
        return self.trace_cycles_per_pixel if self.variant == TRACE else self.incremental_cycles_per_pixel

    def worst_case_cycles(self, axis: str = "x") -> int:
        """All pixels of the axis active in one bin."""
        n = self.x.n if axis == "x" else self.y.n
        return self.cycles_per_pixel * n

    def worst_case_us(self, axis: str = "x") -> float:
        return self.worst_case_cycles(axis) / self.clock_hz * 1e6

    def bin_cycles(self) -> int:
        return self.cycles_per_pixel * self.n_active

    def grid_reads_per_bin(self) -> int:
        if self.variant == TRACE:
            return self.L * self.n_active * self.lanes
        return self.n_active * (1 + self.lanes)

    @property
    def one_axis_bits(self) -> int:
        total = self.x.total_bits
        if self.variant == INCREMENTAL:
            total += self.x.incremental_extra_bits
        return total

    @property
    def both_axes_bits(self) -> int:
        total = self.x.total_bits + self.y.total_bits
        if self.variant == INCREMENTAL:
            total += self.x.incremental_extra_bits + self.y.incremental_extra_bits
        return total

    def rows(self) -> list[tuple[str, str, object]]:
        """``(scope, item, value)`` rows for text and CSV output."""
        out: list[tuple[str, str, object]] = [
            ("config", "variant", self.variant),
            ("config", "L", self.L),
            ("config", "J", self.J),
            ("config", "clock_hz", f"{self.clock_hz:g}"),
            ("config", "lanes", self.lanes),
            ("config", "score_bits", self.score_bits),
        ]
        for name, ax in (("x", self.x), ("y", self.y)):
            out += [
                (name, "pixels", ax.n),
                (name, "occupancy_grid_bits", ax.grid_bits),
                (name, "event_counter_bits", ax.counter_bits),
                (name, "score_accumulator_bits", ax.accumulator_bits),
                (name, "step_counter_bits", ax.step_counter_bits),
                (name, "step_counter_bits_required", ax.step_counter_bits_required),
                (name, "incremental_extra_bits", ax.incremental_extra_bits),
                (name, "core_total_bits", ax.total_bits),
                (name, "worst_case_cycles", self.worst_case_cycles(name)),
                (name, "worst_case_us", f"{self.worst_case_us(name):.3f}"),
            ]
        out += [
            ("datapath", "comparator_stages", self.comparator_stages),
            ("datapath", "trace_cycles_per_pixel", self.trace_cycles_per_pixel),
            ("datapath", "incremental_cycles_per_pixel", self.incremental_cycles_per_pixel),
            ("datapath", "cycles_per_pixel", self.cycles_per_pixel),
            ("datapath", "n_active", self.n_active),
            ("datapath", "bin_cycles", self.bin_cycles()),
            ("datapath", "grid_reads_per_bin", self.grid_reads_per_bin()),
            ("total", "one_axis_bits", self.one_axis_bits),
            ("total", "both_axes_bits", self.both_axes_bits),
        ]
        return out

    def to_text(self) -> str:
        lines = [f"{scope:<9} {item:<30} {value}" for scope, item, value in self.rows()]
        lines += [f"note: {n}" for n in self.notes]
        return "\n".join(lines) + "\n"

    def write_csv(self, dest: TextIO) -> None:
        w = csv.writer(dest, lineterminator="\n")
        w.writerow(["scope", "item", "value"])
        w.writerows(self.rows())


def _axis(n: int, L: int, lanes: int, bits: int) -> AxisCost:
    return AxisCost(
        n=n,
        grid_bits=n * L,
        counter_bits=n * COUNTER_BITS,
        accumulator_bits=lanes * bits,
        step_counter_bits=lanes * PRINTED_STEP_COUNTER_BITS,
        step_counter_bits_required=lanes * bits,
        incremental_extra_bits=n * lanes * bits,
    )


def cost_model(
    nx: int = 240,
    ny: int | None = None,
    L: int = 16,
    J: int = 15,
    clock_hz: float = 100e6,
    variant: str = TRACE,
    n_active: int | None = None,
) -> CostReport:
    """Storage (bits) and cycle counts for one or both axes.

    ``ny`` defaults to ``nx`` (two identical axis pipelines). ``n_active``
    defaults to the worst case, every x pixel active.
    """
    ny = nx if ny is None else ny
    for name, v in (("nx", nx), ("ny", ny), ("L", L), ("J", J)):
        if v < 1:
            raise ValueError(f"{name} must be >= 1, got {v}")
    if clock_hz <= 0:
        raise ValueError("clock_hz must be positive")
    if variant not in (TRACE, INCREMENTAL):
        raise ValueError(f"unknown variant {variant!r}")
    lanes = 2 * J + 1
    bits = score_width(L)
    stages = tree_depth(lanes)
    notes = []
    if bits > PRINTED_STEP_COUNTER_BITS:
        notes.append(
            f"step counters sized at {PRINTED_STEP_COUNTER_BITS} bits as in the resource table, "
            f"but H reaches L={L} and needs {bits} bits "
            f"({lanes * bits} bits per axis instead of {lanes * PRINTED_STEP_COUNTER_BITS})"
        )
    return CostReport(
        L=L,
        J=J,
        clock_hz=clock_hz,
        variant=variant,
        lanes=lanes,
        score_bits=bits,
        comparator_stages=stages,
        trace_cycles_per_pixel=L + stages,
        incremental_cycles_per_pixel=1 + stages,
        x=_axis(nx, L, lanes, bits),
        y=_axis(ny, L, lanes, bits),
        n_active=nx if n_active is None else n_active,
        notes=notes,
    )

"""Two independent axis pipelines fused into per-pixel 2-D detections."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from typing import Iterable, Iterator, Optional, Sequence, TextIO

import numpy as np

from .binning import AxisAccumulator, BinConfig, OccupancyVector, adapt_bin_duration, occupancy_density
from .events import Event, SensorGeometry
from .grid import OccupancyGrid
from .scoring import (
    HypothesisParams,
    PixelWinner,
    ScoreArray,
    jump_to_velocity,
    scores_from_arrays,
    select_winner,
    trace_scores,
)

TRACE = "trace"
INCREMENTAL = "incremental"

DETECTION_HEADER = ("bin", "t_us", "x", "y_med", "jx", "jy", "vx_px_s", "vy_px_s", "R", "H", "assoc")


@dataclass(frozen=True)
class Detection:
    bin_index: int
    t_end: int
    x0: int
    y_med: int
    j_x: int
    j_y: int
    v_x: float
    v_y: float
    R: int
    H: int
    associated: bool

    def row(self) -> list[str]:
        return [
            str(self.bin_index),
            str(self.t_end),
            str(self.x0),
            str(self.y_med),
            str(self.j_x),
            str(self.j_y),
            f"{self.v_x:.3f}",
            f"{self.v_y:.3f}",
            str(self.R),
            str(self.H),
            "1" if self.associated else "0",
        ]


@dataclass(frozen=True)
class PipelineConfig:
    bins: BinConfig
    hyp: HypothesisParams
    geometry: SensorGeometry = SensorGeometry()
    variant: str = TRACE
    y_enabled: bool = True
    t0: Optional[int] = None

    def __post_init__(self) -> None:
        if self.variant not in (TRACE, INCREMENTAL):
            raise ValueError(f"unknown scorer variant {self.variant!r}")

    def describe(self) -> dict[str, object]:
        b, h, g = self.bins, self.hyp, self.geometry
        return {
            "nx": g.nx,
            "ny": g.ny,
            "dt_us": b.delta_t,
            "theta_e": b.theta_e,
            "L": h.L,
            "J": h.J,
            "beta": h.beta,
            "theta_s": h.theta_s,
            "mode": h.mode,
            "trace_mode": h.trace_mode,
            "variant": self.variant,
            "adapt": b.adapt,
            "rho_lo": b.rho_lo,
            "rho_hi": b.rho_hi,
            "dt_min_us": b.delta_t_min,
            "dt_max_us": b.delta_t_max,
            "hold_bins": b.hold_bins,
            "rescale_theta": b.rescale_theta,
            "y_enabled": self.y_enabled,
        }


class AxisPipeline:
    """Accumulator, grid and (optionally) running score array for one axis."""

    def __init__(self, n: int, params: HypothesisParams, delta_t: int, variant: str, bin_start: int) -> None:
        self.n = n
        self.params = params
        self.acc = AxisAccumulator(n, delta_t, bin_start)
        self.grid = OccupancyGrid(n, params.L)
        self.scores = ScoreArray(n, params) if variant == INCREMENTAL else None

    def insert(self, vec: OccupancyVector) -> None:
        if self.scores is not None:
            self.scores.update(self.grid, vec)
        self.grid.shift_insert(vec)

    def reset(self) -> None:
        self.grid.reset()
        if self.scores is not None:
            self.scores.reset()

    def winners(self, pixels: Sequence[int]) -> dict[int, PixelWinner]:
        if not pixels:
            return {}
        params = self.params
        if self.scores is not None:
            R_all, H_all = self.scores.masked()
            R, H = R_all[list(pixels)], H_all[list(pixels)]
        else:
            R, H = trace_scores(self.grid, params, pixels)
        out = {}
        for row, x0 in enumerate(pixels):
            w = select_winner(scores_from_arrays(R[row], H[row], params), params, x0)
            if w is not None:
                out[x0] = w
        return out


@dataclass
class BinRecord:
    bin_index: int
    t_start: int
    t_end: int
    delta_t: int
    theta_e: int
    density_x: float
    density_y: float
    detections: int
    state: str  # "scored", "warmup" or "adapted"


def _lower_median(values: Sequence[int]) -> int:
    ordered = sorted(values)
    return ordered[(len(ordered) - 1) >> 1]


def associate_y(
    x0: int, table: dict[int, Sequence[int]], y_winners: dict[int, PixelWinner]
) -> tuple[int, int, bool]:
    """``(j_y, y_med, associated)`` for an x-detection at ``x0``.

    ``j_y`` is the lower median of the y-winners found at the rows that saw
    events in column ``x0`` this bin, or 0 (unassociated) if none did.
    """
    ys = table.get(x0)
    if not ys:
        raise ValueError(f"no events recorded at x={x0} in this bin")
    y_med = _lower_median(ys)
    jumps = [y_winners[y].j for y in ys if y in y_winners]
    if not jumps:
        return 0, y_med, False
    return _lower_median(jumps), y_med, True


class FlowPipeline:
    """Streaming 2-D estimator: feed events in time order, get detections per bin."""

    def __init__(self, config: PipelineConfig) -> None:
        self.config = config
        self.bins = config.bins
        self.geometry = config.geometry
        config.hyp.check_sensor(self.geometry.nx)
        self._x: Optional[AxisPipeline] = None
        self._y: Optional[AxisPipeline] = None
        self.bins_since_change = 0
        self.log: list[BinRecord] = []
        if config.t0 is not None:
            self._start(config.t0)

    def _start(self, t0: int) -> None:
        c = self.config
        self._x = AxisPipeline(self.geometry.nx, c.hyp, self.bins.delta_t, c.variant, t0)
        self._y = AxisPipeline(self.geometry.ny, c.hyp, self.bins.delta_t, c.variant, t0)
        self._x.acc.bin_index = self._y.acc.bin_index = t0 // self.bins.delta_t

    @property
    def started(self) -> bool:
        return self._x is not None

    @property
    def bin_start(self) -> int:
        return self._x.acc.bin_start

    @property
    def bin_end(self) -> int:
        return self._x.acc.bin_end

    @property
    def x_grid(self) -> OccupancyGrid:
        return self._x.grid

    @property
    def y_grid(self) -> OccupancyGrid:
        return self._y.grid

    def process_bin(self, events: Sequence[Event]) -> list[Detection]:
        """Close the current bin over ``events`` and return its detections (ascending x)."""
        if not self.started:
            first = events[0].t if events else 0
            self._start(first - first % self.bins.delta_t)
        ax, ay = self._x, self._y
        t_start, t_end, dt = ax.acc.bin_start, ax.acc.bin_end, self.bins.delta_t
        bin_index = ax.acc.bin_index

        table: dict[int, list[int]] = {}
        if events:
            t = np.fromiter((e.t for e in events), dtype=np.int64, count=len(events))
            if t.min() < t_start or t.max() >= t_end:
                raise ValueError(f"events outside bin [{t_start}, {t_end})")
            xs = np.fromiter((e.x for e in events), dtype=np.int64, count=len(events))
            ys = np.fromiter((e.y for e in events), dtype=np.int64, count=len(events))
            ax.acc.accumulate_coords(xs)
            ay.acc.accumulate_coords(ys)
            for x, y in set(zip(xs.tolist(), ys.tolist())):
                table.setdefault(x, []).append(y)
            for col in table.values():
                col.sort()

        vx = ax.acc.close_bin(self.bins.theta_e)
        vy = ay.acc.close_bin(self.bins.theta_e)
        rho_x, rho_y = occupancy_density(vx), occupancy_density(vy)
        record = BinRecord(bin_index, t_start, t_end, dt, self.bins.theta_e, rho_x, rho_y, 0, "scored")
        self.log.append(record)

        if self.bins.adapt:
            new_dt, new_theta, changed = adapt_bin_duration(self.bins, rho_x, self.bins_since_change)
            if changed:
                self.bins = replace(self.bins, delta_t=new_dt, theta_e=new_theta)
                for axis in (ax, ay):
                    axis.reset()
                    axis.acc.restart(t_end, new_dt)
                self.bins_since_change = 0
                record.state = "adapted"
                return []
            self.bins_since_change += 1

        ax.insert(vx)
        ay.insert(vy)
        if not ax.grid.is_full:
            record.state = "warmup"
            return []

        x_active = vx.active()
        y_winners = ay.winners(vy.active()) if self.config.y_enabled else {}
        detections = []
        for x0, w in ax.winners(x_active).items():
            j_y, y_med, assoc = associate_y(x0, table, y_winners)
            detections.append(
                Detection(
                    bin_index=bin_index,
                    t_end=t_end,
                    x0=x0,
                    y_med=y_med,
                    j_x=w.j,
                    j_y=j_y,
                    v_x=jump_to_velocity(w.j, dt),
                    v_y=jump_to_velocity(j_y, dt),
                    R=w.R,
                    H=w.H,
                    associated=assoc,
                )
            )
        detections.sort(key=lambda d: d.x0)
        record.detections = len(detections)
        return detections

    def feed(self, events: Iterable[Event], flush: bool = True) -> Iterator[Detection]:
        """Consume a time-ordered event stream bin by bin, with no lookahead.

        Empty bins between events are processed too. With ``flush`` the last
        partially filled bin is closed when the stream ends.
        """
        pending: list[Event] = []
        for ev in events:
            if not self.started:
                self._start(ev.t - ev.t % self.bins.delta_t)
            if ev.t < self.bin_start:
                raise ValueError(f"event at t={ev.t} precedes the current bin start {self.bin_start}")
            while ev.t >= self.bin_end:
                yield from self.process_bin(pending)
                pending = []
            pending.append(ev)
        if flush and pending:
            yield from self.process_bin(pending)


def run_pipeline(events: Iterable[Event], config: PipelineConfig) -> tuple[list[Detection], FlowPipeline]:
    pipe = FlowPipeline(config)
    dets = list(pipe.feed(events))
    return dets, pipe


def write_detections(
    detections: Iterable[Detection], dest: TextIO, header: dict[str, object] | None = None
) -> None:
    """CSV with a ``# key=value`` preamble describing the run."""
    for key, value in (header or {}).items():
        dest.write(f"# {key}={value}\n")
    writer = csv.writer(dest, lineterminator="\n")
    writer.writerow(DETECTION_HEADER)
    for d in detections:
        writer.writerow(d.row())


def read_detections(source: TextIO) -> tuple[list[Detection], dict[str, str]]:
    header: dict[str, str] = {}
    body = []
    for line in source:
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            header[key.strip()] = value.strip()
        elif line.strip():
            body.append(line)
    rows = csv.reader(io.StringIO("".join(body)))
    cols = next(rows, None)
    if cols is None:
        return [], header
    if tuple(cols) != DETECTION_HEADER:
        raise ValueError(f"unexpected detection header {cols}")
    out = []
    for r in rows:
        out.append(
            Detection(
                bin_index=int(r[0]),
                t_end=int(r[1]),
                x0=int(r[2]),
                y_med=int(r[3]),
                j_x=int(r[4]),
                j_y=int(r[5]),
                v_x=float(r[6]),
                v_y=float(r[7]),
                R=int(r[8]),
                H=int(r[9]),
                associated=r[10] == "1",
            )
        )
    return out, header

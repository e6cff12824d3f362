"""Fixed-parameter (delta_t, theta_e) sweeps over one event stream."""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence, TextIO

from ..binning import BinConfig
from ..events import Event, SensorGeometry
from ..pipeline import PipelineConfig, run_pipeline
from ..scoring import HypothesisParams
from ..synth import GroundTruthSegment
from .accuracy import directional_accuracy

N_MIN = 50
GOOD_ACCURACY = 90.0
FAIR_ACCURACY = 75.0
DENSITY_FLOOR = 0.10


@dataclass(frozen=True)
class SweepCell:
    delta_t: int
    theta_e: int
    density: float
    n: int
    accuracy: Optional[float]

    @property
    def band(self) -> str:
        """green / yellow / poor with enough detections; red / grey without, split at 10% density."""
        if self.accuracy is not None:
            if self.accuracy >= GOOD_ACCURACY:
                return "green"
            if self.accuracy >= FAIR_ACCURACY:
                return "yellow"
            return "poor"
        return "red" if self.density >= DENSITY_FLOOR else "grey"


def run_cell(
    events: Sequence[Event],
    delta_t: int,
    theta_e: int,
    hyp: HypothesisParams,
    geometry: SensorGeometry,
    segments: Sequence[GroundTruthSegment],
    n_min: int = N_MIN,
    variant: str = "trace",
) -> SweepCell:
    cfg = PipelineConfig(BinConfig(delta_t, theta_e, adapt=False), hyp, geometry, variant)
    dets, pipe = run_pipeline(events, cfg)
    density = sum(r.density_x for r in pipe.log) / len(pipe.log) if pipe.log else 0.0
    accuracy = None
    if len(dets) >= n_min:
        report = directional_accuracy(dets, segments, delta_t)
        accuracy = report.overall
    return SweepCell(delta_t, theta_e, density, len(dets), accuracy)


def _run_cell_args(args):
    return run_cell(*args)


def sweep(
    events: Sequence[Event],
    delta_ts: Sequence[int],
    theta_es: Sequence[int],
    hyp: HypothesisParams,
    geometry: SensorGeometry,
    segments: Sequence[GroundTruthSegment],
    n_min: int = N_MIN,
    workers: int = 1,
) -> list[SweepCell]:
    """Run the full pipeline once per (delta_t, theta_e), adaptation off.

    Cells are independent; with ``workers > 1`` they run in separate
    processes. Output order is delta_t-major regardless.
    """
    jobs = [
        (events, dt, th, hyp, geometry, segments, n_min) for dt in delta_ts for th in theta_es
    ]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_cell_args, jobs))
    return [_run_cell_args(j) for j in jobs]


def write_sweep_csv(cells: Sequence[SweepCell], dest: TextIO) -> None:
    w = csv.writer(dest, lineterminator="\n")
    w.writerow(["dt_us", "theta_e", "density", "n", "accuracy_pct", "band"])
    for c in cells:
        w.writerow(
            [
                c.delta_t,
                c.theta_e,
                f"{c.density:.4f}",
                c.n,
                "" if c.accuracy is None else f"{c.accuracy:.2f}",
                c.band,
            ]
        )

"""Directional accuracy of detections against ground-truth segments."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from statistics import median_low
from typing import Iterable, Optional, Sequence, TextIO, Union

from ..pipeline import Detection
from ..synth import GroundTruthSegment, SceneObject, Bar


@dataclass
class SegmentRow:
    t_start: int
    t_end: int
    gt_j: float
    median_j: Optional[int]
    accuracy: Optional[float]
    n: int


@dataclass
class AccuracyReport:
    rows: list[SegmentRow] = field(default_factory=list)
    excluded: int = 0

    @property
    def n(self) -> int:
        return sum(r.n for r in self.rows)

    @property
    def overall(self) -> Optional[float]:
        """Pooled accuracy over every counted detection (None when there are none)."""
        if self.n == 0:
            return None
        correct = sum(r.accuracy * r.n / 100.0 for r in self.rows if r.n)
        return 100.0 * correct / self.n

    def to_text(self) -> str:
        lines = [f"{'time (s)':>13}  {'GT j':>6}  {'median j':>8}  {'acc %':>6}  {'n':>5}"]
        for r in self.rows:
            med = "-" if r.median_j is None else str(r.median_j)
            acc = "-" if r.accuracy is None else f"{r.accuracy:.1f}"
            lines.append(
                f"{r.t_start / 1e6:6.2f}-{r.t_end / 1e6:<6.2f}  {r.gt_j:6.2f}  {med:>8}  {acc:>6}  {r.n:>5}"
            )
        overall = "-" if self.overall is None else f"{self.overall:.1f}%"
        lines.append(f"overall {overall}  (n={self.n}, outside segments {self.excluded})")
        return "\n".join(lines) + "\n"

    def write_csv(self, dest: TextIO) -> None:
        w = csv.writer(dest, lineterminator="\n")
        w.writerow(["t_start_us", "t_end_us", "gt_j", "median_j", "accuracy_pct", "n"])
        for r in self.rows:
            w.writerow(
                [
                    r.t_start,
                    r.t_end,
                    f"{r.gt_j:.6g}",
                    "" if r.median_j is None else r.median_j,
                    "" if r.accuracy is None else f"{r.accuracy:.3f}",
                    r.n,
                ]
            )


def _sign(v: float) -> int:
    return (v > 0) - (v < 0)


def is_correct(pred_j: int, expected_j: float) -> bool:
    """Sign agreement; a zero prediction is only right when zero was expected."""
    return _sign(pred_j) == _sign(expected_j)


def load_segments(source: Union[str, os.PathLike, TextIO]) -> list[GroundTruthSegment]:
    """Read ``t_start_s,t_end_s,axis,expected_j`` rows (seconds, converted to us)."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="") as fh:
            return load_segments(fh)
    reader = csv.DictReader(line for line in source if line.strip() and not line.startswith("#"))
    out = []
    for i, row in enumerate(reader):
        out.append(
            GroundTruthSegment(
                t_start=round(float(row["t_start_s"]) * 1e6),
                t_end=round(float(row["t_end_s"]) * 1e6),
                axis=row.get("axis", "x").strip() or "x",
                expected_j=float(row["expected_j"]),
                object_id=int(row.get("object_id") or i),
            )
        )
    return out


def write_segments(segments: Iterable[GroundTruthSegment], dest: TextIO) -> None:
    w = csv.writer(dest, lineterminator="\n")
    w.writerow(["t_start_s", "t_end_s", "axis", "expected_j"])
    for s in segments:
        w.writerow([f"{s.t_start / 1e6:.6f}", f"{s.t_end / 1e6:.6f}", s.axis, f"{s.expected_j:.6g}"])


def directional_accuracy(
    detections: Sequence[Detection],
    segments: Sequence[GroundTruthSegment],
    delta_t: int,
    axis: str = "x",
) -> AccuracyReport:
    """Per-segment sign accuracy; each detection is placed by its bin midpoint."""
    segs = sorted((s for s in segments if s.axis == axis), key=lambda s: s.t_start)
    for a, b in zip(segs, segs[1:]):
        if b.t_start < a.t_end:
            raise ValueError(f"overlapping {axis} segments {a} and {b}")
    preds: list[list[int]] = [[] for _ in segs]
    excluded = 0
    for d in detections:
        mid = d.t_end - delta_t / 2
        j = d.j_x if axis == "x" else d.j_y
        for k, s in enumerate(segs):
            if s.t_start <= mid < s.t_end:
                preds[k].append(j)
                break
        else:
            excluded += 1
    report = AccuracyReport(excluded=excluded)
    for s, js in zip(segs, preds):
        if js:
            acc = 100.0 * sum(is_correct(j, s.expected_j) for j in js) / len(js)
            report.rows.append(SegmentRow(s.t_start, s.t_end, s.expected_j, median_low(js), acc, len(js)))
        else:
            report.rows.append(SegmentRow(s.t_start, s.t_end, s.expected_j, None, None, 0))
    return report


# -- multi-object scenes ------------------------------------------------------


def _x_half_extent(obj: SceneObject, t: float) -> float:
    shape = obj.shape
    ang = float(obj.angle(t))
    if isinstance(shape, Bar):
        return abs(0.5 * shape.width * math.cos(ang)) + abs(0.5 * shape.length * math.sin(ang))
    return shape.radius()


def _x_interval(obj: SceneObject, t0: float, t1: float) -> tuple[float, float]:
    """x-range swept by ``obj`` during ``[t0, t1]`` (sampled at both ends and the midpoint)."""
    lo, hi = math.inf, -math.inf
    for t in (t0, 0.5 * (t0 + t1), t1):
        cx = float(obj.centre(t)[0])
        r = _x_half_extent(obj, t)
        lo, hi = min(lo, cx - r), max(hi, cx + r)
    return lo, hi


@dataclass
class OverlapSplit:
    """Sign accuracy for multi-object scenes, split by whether x-projections overlapped."""

    clear_n: int = 0
    clear_correct: int = 0
    overlap_n: int = 0
    overlap_correct: int = 0
    overlap_bins: set[int] = field(default_factory=set)

    @property
    def clear_accuracy(self) -> Optional[float]:
        return 100.0 * self.clear_correct / self.clear_n if self.clear_n else None

    @property
    def overlap_accuracy(self) -> Optional[float]:
        return 100.0 * self.overlap_correct / self.overlap_n if self.overlap_n else None


def overlap_split(
    detections: Sequence[Detection],
    objects: Sequence[SceneObject],
    delta_t: int,
    depth: int,
    margin: float = 2.0,
) -> OverlapSplit:
    """Score each detection against the object under it.

    A bin counts as overlapping when the x-ranges swept by any two objects
    over the grid's history window (``depth`` bins) come within ``margin``
    pixels. Detections are attributed to the object whose current x-range
    (widened by ``margin``) is nearest to ``x0``.
    """
    out = OverlapSplit()
    for d in detections:
        t1 = float(d.t_end)
        t0 = t1 - depth * delta_t
        spans = [_x_interval(o, t0, t1) for o in objects]
        overlap = any(
            a[0] - margin <= b[1] and b[0] - margin <= a[1]
            for i, a in enumerate(spans)
            for b in spans[i + 1 :]
        )
        best, best_dist = None, math.inf
        for o in objects:
            cx = float(o.centre(t1)[0])
            r = _x_half_extent(o, t1) + margin
            dist = max(0.0, abs(d.x0 - cx) - r)
            if dist < best_dist:
                best, best_dist = o, dist
        correct = is_correct(d.j_x, best.velocity_at(t1)[0])
        if overlap:
            out.overlap_bins.add(d.bin_index)
            out.overlap_n += 1
            out.overlap_correct += correct
        else:
            out.clear_n += 1
            out.clear_correct += correct
    return out

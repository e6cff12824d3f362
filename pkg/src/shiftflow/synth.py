"""Synthetic event scenes with exact ground-truth velocities.

Objects move in continuous sensor coordinates (pixel ``i`` is centred at
``i``). Time advances in 1 us steps; a pixel emits an event at the first
step at which its centre changes from outside to inside an object (+1) or
from inside to outside (-1).
"""

from __future__ import annotations

import configparser
import csv
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO, Union

import numpy as np

from .events import Event, SensorGeometry

# Upper bound on time-steps x pixels evaluated per chunk.
_CHUNK_BUDGET = 4_000_000
# Max displacement (px) of any shape point within one coarse interval.
_REACH = 0.45


@dataclass(frozen=True)
class Bar:
    """Rectangle ``width`` across and ``length`` along its long axis.

    ``orientation`` (radians) rotates the long axis away from the y axis.
    """

    width: float
    length: float
    orientation: float = 0.0

    def radius(self) -> float:
        return 0.5 * math.hypot(self.width, self.length)

    def inside(self, lx: np.ndarray, ly: np.ndarray) -> np.ndarray:
        hw, hl = 0.5 * self.width, 0.5 * self.length
        return (lx >= -hw) & (lx < hw) & (ly >= -hl) & (ly < hl)

    def near_boundary(self, lx: np.ndarray, ly: np.ndarray, d: float) -> np.ndarray:
        """True for every local point within distance ``d`` of the outline (may over-report)."""
        hw, hl = 0.5 * self.width, 0.5 * self.length
        ax, ay = np.abs(lx), np.abs(ly)
        grown = (ax <= hw + d) & (ay <= hl + d)
        shrunk = (ax < hw - d) & (ay < hl - d)
        return grown & ~shrunk


@dataclass(frozen=True)
class Bitmap:
    """Arbitrary shape: ``rows[r][c]`` truthy means covered; one cell per pixel, centred on the object."""

    rows: tuple[tuple[int, ...], ...]
    orientation: float = 0.0

    def __post_init__(self) -> None:
        widths = {len(r) for r in self.rows}
        if not self.rows or len(widths) != 1 or 0 in widths:
            raise ValueError("bitmap must be a non-empty rectangle")

    @classmethod
    def from_text(cls, text: str, orientation: float = 0.0) -> "Bitmap":
        rows = [tuple(int(c) for c in line.strip()) for line in text.strip().splitlines() if line.strip()]
        return cls(tuple(rows), orientation)

    def radius(self) -> float:
        return 0.5 * math.hypot(len(self.rows), len(self.rows[0]))

    def inside(self, lx: np.ndarray, ly: np.ndarray) -> np.ndarray:
        mask = np.asarray(self.rows, dtype=bool)
        h, w = mask.shape
        col = np.floor(lx + 0.5 * w).astype(np.int64)
        row = np.floor(ly + 0.5 * h).astype(np.int64)
        ok = (col >= 0) & (col < w) & (row >= 0) & (row < h)
        out = np.zeros(lx.shape, dtype=bool)
        out[ok] = mask[row[ok], col[ok]]
        return out

    def near_boundary(self, lx: np.ndarray, ly: np.ndarray, d: float) -> np.ndarray:
        """True for every local point within distance ``d < 0.5`` of the outline.

        A square of side ``2d < 1`` touches at most a 2x2 block of cells and
        its corners land in each of them, so mixed corners is exact.
        """
        ref = self.inside(lx - d, ly - d)
        out = np.zeros(np.broadcast(lx, ly).shape, dtype=bool)
        for sx, sy in ((d, -d), (-d, d), (d, d)):
            out |= self.inside(lx + sx, ly + sy) != ref
        return out


Shape = Union[Bar, Bitmap]


@dataclass(frozen=True)
class SceneObject:
    """A rigid shape. Velocities are px/us, angular velocity rad/us, accelerations px/us^2."""

    shape: Shape
    position: tuple[float, float]
    velocity: tuple[float, float] = (0.0, 0.0)
    angular_velocity: float = 0.0
    acceleration: tuple[float, float] = (0.0, 0.0)
    object_id: int = 0

    def centre(self, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        t = np.asarray(t, dtype=np.float64)
        cx = self.position[0] + self.velocity[0] * t + 0.5 * self.acceleration[0] * t * t
        cy = self.position[1] + self.velocity[1] * t + 0.5 * self.acceleration[1] * t * t
        return cx, cy

    def velocity_at(self, t: float) -> tuple[float, float]:
        return (
            self.velocity[0] + self.acceleration[0] * t,
            self.velocity[1] + self.acceleration[1] * t,
        )

    def angle(self, t: np.ndarray) -> np.ndarray:
        return self.shape.orientation + self.angular_velocity * np.asarray(t, dtype=np.float64)

    @property
    def is_static(self) -> bool:
        return self.velocity == (0.0, 0.0) and self.acceleration == (0.0, 0.0) and self.angular_velocity == 0.0

    def local(self, px: np.ndarray, py: np.ndarray, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Points ``(px, py)`` in the shape's own frame at times ``t``; all arguments broadcast."""
        cx, cy = self.centre(t)
        ang = self.angle(t)
        c, s = np.cos(ang), np.sin(ang)
        dx = px - cx
        dy = py - cy
        return c * dx + s * dy, -s * dx + c * dy

    def covers(self, px: np.ndarray, py: np.ndarray, t: np.ndarray) -> np.ndarray:
        """Inside test of points ``(px, py)`` at times ``t``; all arguments broadcast."""
        return self.shape.inside(*self.local(px, py, t))

    def max_point_speed(self, duration: int) -> float:
        """Bound on how fast any point of the shape moves (px/us) within ``[0, duration]``."""
        v = max(
            math.hypot(*self.velocity_at(0.0)),
            math.hypot(*self.velocity_at(float(duration))),
        )
        return v + abs(self.angular_velocity) * self.shape.radius()

    def visible(self, geometry: SensorGeometry, t: np.ndarray) -> np.ndarray:
        """Per time: does the bounding circle overlap the sensor?"""
        cx, cy = self.centre(t)
        r = self.shape.radius()
        return (cx + r >= -0.5) & (cx - r < geometry.nx - 0.5) & (cy + r >= -0.5) & (cy - r < geometry.ny - 0.5)


@dataclass(frozen=True)
class NoiseConfig:
    """``rate`` is noise events per signal event; ``events_per_us`` (if set) overrides it."""

    rate: float = 0.0
    jitter_sigma: float = 0.0
    seed: int = 0
    events_per_us: float | None = None

    def __post_init__(self) -> None:
        if self.rate < 0 or self.jitter_sigma < 0:
            raise ValueError("noise rate and jitter must be non-negative")
        if self.events_per_us is not None and self.events_per_us < 0:
            raise ValueError("events_per_us must be non-negative")


@dataclass(frozen=True)
class GroundTruthSegment:
    t_start: int
    t_end: int
    axis: str
    expected_j: float
    object_id: int = 0

    def __post_init__(self) -> None:
        if not self.t_start < self.t_end:
            raise ValueError(f"segment needs t_start < t_end, got {self.t_start}, {self.t_end}")

    @property
    def sign(self) -> int:
        return (self.expected_j > 0) - (self.expected_j < 0)


@dataclass
class Scene:
    objects: list[SceneObject]
    geometry: SensorGeometry = field(default_factory=SensorGeometry)
    duration: int = 10_000
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    gt_bin_us: int = 1_000


def _object_events(obj: SceneObject, geometry: SensorGeometry, duration: int) -> np.ndarray:
    """``(k, 4)`` int64 rows ``t, x, y, p`` for one object.

    Time is split into coarse intervals short enough that no point of the
    shape moves more than ``_REACH`` px in one. A pixel centre can only
    change state during an interval if it starts it within ``_REACH`` of the
    outline, so only those pixels are stepped at 1 us.
    """
    empty = np.zeros((0, 4), dtype=np.int64)
    if obj.is_static or duration < 2:
        return empty
    step = int(max(1, min(1024, math.floor(_REACH / max(obj.max_point_speed(duration), 1e-9)))))
    coarse = np.arange(0, duration, step, dtype=np.int64)
    if coarse[-1] != duration - 1:
        coarse = np.append(coarse, duration - 1)
    r = obj.shape.radius() + 1.0
    side = int(2 * r + 2)
    per_chunk = max(1, _CHUNK_BUDGET // (side * side))
    out = []
    for k0 in range(0, len(coarse) - 1, per_chunk):
        k1 = min(len(coarse) - 1, k0 + per_chunk)
        times = coarse[k0 : k1 + 1]
        cx, cy = obj.centre(times)
        xlo = max(0, int(math.floor(cx.min() - r)))
        xhi = min(geometry.nx - 1, int(math.ceil(cx.max() + r)))
        ylo = max(0, int(math.floor(cy.min() - r)))
        yhi = min(geometry.ny - 1, int(math.ceil(cy.max() + r)))
        if xlo > xhi or ylo > yhi:
            continue
        gx, gy = np.meshgrid(np.arange(xlo, xhi + 1), np.arange(ylo, yhi + 1), indexing="xy")
        px, py = gx.ravel().astype(np.float64), gy.ravel().astype(np.float64)
        lx, ly = obj.local(px[None, :], py[None, :], times[:-1, None])
        ki, pi = np.nonzero(obj.shape.near_boundary(lx, ly, _REACH + 1e-6))
        span = int((times[1:] - times[:-1]).max())
        batch = max(1, _CHUNK_BUDGET // (span + 1))
        for b0 in range(0, len(ki), batch):
            kb, pb = ki[b0 : b0 + batch], pi[b0 : b0 + batch]
            fine = np.minimum(times[kb][:, None] + np.arange(span + 1)[None, :], times[kb + 1][:, None])
            state = obj.covers(px[pb][:, None], py[pb][:, None], fine)
            row, col = np.nonzero(state[:, 1:] != state[:, :-1])
            if row.size:
                t_ev = fine[row, col + 1]
                pol = np.where(state[row, col + 1], 1, -1)
                out.append(np.stack([t_ev, px[pb][row].astype(np.int64), py[pb][row].astype(np.int64), pol], axis=1))
    if not out:
        return empty
    return np.concatenate(out).astype(np.int64)


def _sort_rows(rows: np.ndarray) -> np.ndarray:
    if rows.size == 0:
        return rows
    order = np.lexsort((rows[:, 3], rows[:, 2], rows[:, 1], rows[:, 0]))
    return rows[order]


def _rows_to_events(rows: np.ndarray) -> list[Event]:
    return [Event(int(t), int(x), int(y), int(p)) for t, x, y, p in rows.tolist()]


def _events_to_rows(events: Sequence[Event]) -> np.ndarray:
    if not events:
        return np.zeros((0, 4), dtype=np.int64)
    return np.array([(e.t, e.x, e.y, e.p) for e in events], dtype=np.int64)


def _perturb(
    rows: np.ndarray, noise: NoiseConfig, geometry: SensorGeometry, duration: int, rng: np.random.Generator
) -> np.ndarray:
    """Jitter timestamps, re-sort, then merge in uniformly distributed noise events."""
    if noise.jitter_sigma > 0 and rows.size:
        rows = rows.copy()
        jitter = np.rint(rng.normal(0.0, noise.jitter_sigma, size=len(rows))).astype(np.int64)
        rows[:, 0] = np.clip(rows[:, 0] + jitter, 0, max(0, duration - 1))
        rows = rows[np.argsort(rows[:, 0], kind="stable")]
    if noise.events_per_us is not None:
        n_noise = int(math.ceil(noise.events_per_us * duration))
    else:
        n_noise = int(math.ceil(noise.rate * len(rows) - 1e-9)) if noise.rate > 0 else 0
    if n_noise > 0 and duration > 0:
        extra = np.stack(
            [
                rng.integers(0, duration, n_noise),
                rng.integers(0, geometry.nx, n_noise),
                rng.integers(0, geometry.ny, n_noise),
                rng.choice(np.array([-1, 1]), n_noise),
            ],
            axis=1,
        ).astype(np.int64)
        rows = np.concatenate([rows, extra])
        rows = rows[np.argsort(rows[:, 0], kind="stable")]
    return rows


def add_noise(
    events: Sequence[Event],
    noise: NoiseConfig,
    geometry: SensorGeometry = SensorGeometry(),
    duration: int | None = None,
) -> list[Event]:
    """Apply timestamp jitter and inject noise events into an existing stream.

    ``duration`` defaults to just past the last timestamp.
    """
    rows = _events_to_rows(events)
    if duration is None:
        duration = int(rows[:, 0].max()) + 1 if rows.size else 1
    rng = np.random.default_rng(noise.seed)
    return _rows_to_events(_perturb(rows, noise, geometry, duration, rng))


def ground_truth(
    objects: Sequence[SceneObject], geometry: SensorGeometry, duration: int, bin_us: int
) -> list[GroundTruthSegment]:
    """Piecewise-constant expected jumps (px per ``bin_us``) per object and axis.

    Sampled at each bin midpoint while the object is on the sensor; equal
    consecutive values are merged.
    """
    segments: list[GroundTruthSegment] = []
    starts = np.arange(0, duration, bin_us, dtype=np.int64)
    for obj in objects:
        mids = starts + 0.5 * bin_us
        vis = obj.visible(geometry, mids)
        for axis, k in (("x", 0), ("y", 1)):
            current = None
            for s, m, ok in zip(starts.tolist(), mids.tolist(), vis.tolist()):
                e = min(s + bin_us, duration)
                if not ok:
                    if current:
                        segments.append(GroundTruthSegment(*current))
                    current = None
                    continue
                j = round(obj.velocity_at(m)[k] * bin_us, 9) + 0.0
                if current and current[3] == j and current[1] == s:
                    current[1] = e
                else:
                    if current:
                        segments.append(GroundTruthSegment(*current))
                    current = [s, e, axis, j, obj.object_id]
            if current:
                segments.append(GroundTruthSegment(*current))
    return segments


def generate_scene(
    objects: Sequence[SceneObject],
    geometry: SensorGeometry = SensorGeometry(),
    duration: int = 10_000,
    noise: NoiseConfig = NoiseConfig(),
    gt_bin_us: int = 1_000,
) -> tuple[list[Event], list[GroundTruthSegment]]:
    """Simulate ``objects`` for ``duration`` microseconds.

    Returns the time-sorted event stream and ground-truth segments.
    All randomness comes from ``noise.seed``.
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    if gt_bin_us <= 0:
        raise ValueError("gt_bin_us must be positive")
    probe = np.linspace(0, duration, 257)
    for obj in objects:
        if not obj.visible(geometry, probe).any():
            raise ValueError(f"object {obj.object_id} never overlaps the sensor")
    parts = [_object_events(obj, geometry, duration) for obj in objects]
    rows = _sort_rows(np.concatenate(parts)) if parts else np.zeros((0, 4), dtype=np.int64)
    rng = np.random.default_rng(noise.seed)
    rows = _perturb(rows, noise, geometry, duration, rng)
    return _rows_to_events(rows), ground_truth(objects, geometry, duration, gt_bin_us)


def run_scene(scene: Scene) -> tuple[list[Event], list[GroundTruthSegment]]:
    return generate_scene(scene.objects, scene.geometry, scene.duration, scene.noise, scene.gt_bin_us)


# Velocity grid of the base bar dataset: +-0.005 .. +-0.03 px/us.
BASE_SPEEDS = tuple(round(0.005 * k, 3) for k in range(1, 7))
BASE_VELOCITIES = tuple(sorted(-v for v in BASE_SPEEDS)) + BASE_SPEEDS


def bar_crossing(
    vx: float,
    geometry: SensorGeometry = SensorGeometry(),
    width: float = 8.0,
    length: float = 60.0,
    y: float | None = None,
    margin: float = 2.0,
    object_id: int = 0,
) -> tuple[SceneObject, int]:
    """A vertical bar that crosses the sensor along x at ``vx``; returns it and the crossing time (us)."""
    if vx == 0:
        raise ValueError("vx must be non-zero")
    y = geometry.ny / 2 if y is None else y
    start = margin + width / 2 if vx > 0 else geometry.nx - 1 - margin - width / 2
    travel = geometry.nx - 1 - 2 * margin - width
    obj = SceneObject(Bar(width, length), (start, y), (vx, 0.0), object_id=object_id)
    return obj, int(travel / abs(vx))


def write_ground_truth(segments: Iterable[GroundTruthSegment], dest: TextIO) -> None:
    w = csv.writer(dest, lineterminator="\n")
    w.writerow(["t_start_us", "t_end_us", "axis", "expected_j", "object_id"])
    for s in segments:
        w.writerow([s.t_start, s.t_end, s.axis, f"{s.expected_j:.6g}", s.object_id])


def read_ground_truth(source: TextIO) -> list[GroundTruthSegment]:
    r = csv.DictReader(line for line in source if not line.startswith("#"))
    return [
        GroundTruthSegment(int(d["t_start_us"]), int(d["t_end_us"]), d["axis"], float(d["expected_j"]), int(d["object_id"]))
        for d in r
    ]


def _floats(text: str, n: int) -> tuple[float, ...]:
    vals = tuple(float(v) for v in text.replace(",", " ").split())
    if len(vals) != n:
        raise ValueError(f"expected {n} numbers, got {text!r}")
    return vals


def load_scene(path: Union[str, os.PathLike]) -> Scene:
    """Read an INI scene file: ``[scene]``, optional ``[noise]``, one ``[object.<name>]`` per object.

    Object keys: ``shape`` (bar|bitmap), ``width``/``length`` or
    ``bitmap`` (rows of 0/1), ``orientation_deg``, ``position``,
    ``velocity`` (px/us), ``angular_velocity`` (rad/us), ``acceleration``.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    if not cp.read(path):
        raise FileNotFoundError(path)
    if not cp.has_section("scene"):
        raise ValueError(f"{path}: missing [scene] section")
    sc = cp["scene"]
    geometry = SensorGeometry(sc.getint("nx", 240), sc.getint("ny", 180))
    duration = sc.getint("duration_us")
    if duration is None:
        raise ValueError(f"{path}: [scene] needs duration_us")
    noise = NoiseConfig()
    if cp.has_section("noise"):
        nz = cp["noise"]
        epu = nz.get("events_per_us")
        noise = NoiseConfig(
            rate=nz.getfloat("rate", 0.0),
            jitter_sigma=nz.getfloat("jitter_sigma_us", 0.0),
            seed=nz.getint("seed", 0),
            events_per_us=float(epu) if epu is not None else None,
        )
    objects = []
    names = [s for s in cp.sections() if s.startswith("object")]
    for idx, name in enumerate(names):
        o = cp[name]
        orient = math.radians(o.getfloat("orientation_deg", 0.0))
        kind = o.get("shape", "bar").strip().lower()
        if kind == "bar":
            shape: Shape = Bar(o.getfloat("width"), o.getfloat("length"), orient)
        elif kind == "bitmap":
            shape = Bitmap.from_text(o["bitmap"], orient)
        else:
            raise ValueError(f"{path}: [{name}] unknown shape {kind!r}")
        objects.append(
            SceneObject(
                shape=shape,
                position=_floats(o["position"], 2),
                velocity=_floats(o.get("velocity", "0 0"), 2),
                angular_velocity=o.getfloat("angular_velocity", 0.0),
                acceleration=_floats(o.get("acceleration", "0 0"), 2),
                object_id=o.getint("id", idx),
            )
        )
    if not objects:
        raise ValueError(f"{path}: no [object.*] sections")
    return Scene(objects, geometry, duration, noise, sc.getint("gt_bin_us", 1_000))

"""Brute-force scoring oracle and randomized equivalence harnesses.

The oracle rebuilds per-bin occupancy straight from raw events (plain
dicts and sets, no grid, no shifting) and ranks hypotheses with exact
rationals. It shares no code with the grid or scoring modules.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional

import numpy as np

from ..binning import AxisAccumulator, OccupancyVector
from ..events import Event
from ..grid import OccupancyGrid
from ..scoring import (
    CANONICAL,
    LITERAL,
    NORMALIZED,
    RAW,
    HypothesisParams,
    HypothesisScore,
    PixelWinner,
    ScoreArray,
    score_all,
    select_winner,
    trace_scores,
)

_SATURATE = 255


class OracleHistory:
    """Occupancy of the ``depth`` bins ending at ``t_end``, from raw events.

    ``active[age]`` is the set of pixels whose event count in the bin
    ``age`` bins before the newest reached ``theta_e`` (age 0 = newest).
    """

    def __init__(
        self,
        events: Iterable[Event],
        t_end: int,
        delta_t: int,
        theta_e: int,
        n: int,
        depth: int,
        axis: str = "x",
    ) -> None:
        self.n = n
        self.depth = depth
        counts: list[dict[int, int]] = [{} for _ in range(depth)]
        for ev in events:
            if ev.t >= t_end:
                continue
            age = (t_end - 1 - ev.t) // delta_t
            if age >= depth:
                continue
            coord = ev.x if axis == "x" else ev.y
            counts[age][coord] = counts[age].get(coord, 0) + 1
        self.active = [
            {p for p, c in bucket.items() if min(c, _SATURATE) >= theta_e} for bucket in counts
        ]

    def occupied(self, x: int, age: int) -> bool:
        return x in self.active[age]


def oracle_score(history: OracleHistory, x0: int, j: int, params: HypothesisParams) -> HypothesisScore:
    if params.trace_mode == CANONICAL:
        ages = range(0, history.depth)
    else:
        ages = range(1, history.depth + 1)
    steps = []
    for h in ages:
        x = x0 - j * h
        if x < 0 or x >= history.n:
            break
        steps.append(history.occupied(x, h - (params.trace_mode == LITERAL)))
    H = len(steps)
    R = sum(steps) if H >= params.beta else 0
    return HypothesisScore(j, R, H)


def oracle_winner(history: OracleHistory, x0: int, params: HypothesisParams) -> Optional[PixelWinner]:
    """Exhaustive argmax with exact fractions and the documented tie order."""
    best_key = None
    best = None
    for j in range(-params.J, params.J + 1):
        s = oracle_score(history, x0, j, params)
        if s.H < params.beta:
            continue
        if params.mode == RAW:
            value = Fraction(s.R)
            ok = s.R > params.theta_s
        else:
            value = Fraction(s.R, s.H)
            ok = value > Fraction(params.theta_s, params.L)
        if not ok:
            continue
        key = (value, -abs(j), j)
        if best_key is None or key > best_key:
            best_key, best = key, s
    if best is None:
        return None
    return PixelWinner(x0, best.j, best.R, best.H)


# -- randomized harnesses ----------------------------------------------------


@dataclass
class FuzzReport:
    name: str
    cases: int = 0
    comparisons: int = 0
    mismatches: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.mismatches

    def summary(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        return (
            f"{status} {self.name}: {self.cases} cases, {self.comparisons} comparisons, "
            f"{len(self.mismatches)} mismatches"
        )


def _random_params(rng: random.Random, n_max: int = 64, l_range=(2, 8), j_range=(1, 4), literal_share=0.0):
    n = rng.randint(8, n_max)
    L = rng.randint(*l_range)
    J = rng.randint(*j_range)
    params = HypothesisParams(
        J=J,
        L=L,
        beta=rng.randint(1, L),
        theta_s=rng.randint(0, L),
        mode=rng.choice((RAW, NORMALIZED)),
        trace_mode=LITERAL if rng.random() < literal_share else CANONICAL,
    )
    return n, params


def fuzz_incremental(cases: int = 10_000, seed: int = 0, max_bins: int | None = None) -> FuzzReport:
    """Trace-based vs incremental scores for every (pixel, hypothesis) after every bin."""
    rng = random.Random(seed)
    report = FuzzReport("trace vs incremental")
    for case in range(cases):
        n, params = _random_params(rng)
        bins = rng.randint(1, max_bins or 3 * params.L)
        density = rng.random()
        grid = OccupancyGrid(n, params.L)
        arr = ScoreArray(n, params)
        nprng = np.random.default_rng(rng.getrandbits(32))
        for b in range(bins):
            vec = OccupancyVector.from_array(nprng.random(n) < density, b)
            arr.update(grid, vec)
            grid.shift_insert(vec)
            R_t, H_t = trace_scores(grid, params)
            R_i, H_i = arr.masked()
            report.comparisons += R_t.size
            if not (np.array_equal(R_t, R_i) and np.array_equal(H_t, H_i)):
                bad = np.argwhere((R_t != R_i) | (H_t != H_i))
                x0, k = bad[0]
                report.mismatches.append(
                    f"case {case} bin {b} N={n} {params}: x0={x0} j={k - params.J} "
                    f"trace=({R_t[x0, k]},{H_t[x0, k]}) incremental=({R_i[x0, k]},{H_i[x0, k]})"
                )
                break
        report.cases += 1
    return report


def random_instance(rng: random.Random, n: int, L: int, delta_t: int, theta_e: int):
    """Random events covering ``L + extra`` bins; returns ``(events, t_end)``."""
    total_bins = L + rng.randint(0, 3)
    density = rng.random()
    events = []
    for b in range(total_bins):
        base = b * delta_t
        for x in range(n):
            if rng.random() < density:
                k = rng.randint(1, theta_e + 1)
            elif rng.random() < 0.2:
                k = rng.randint(1, theta_e)
            else:
                continue
            for _ in range(k):
                events.append(Event(base + rng.randrange(delta_t), x, rng.randrange(4), rng.choice((-1, 1))))
    events.sort(key=lambda e: e.t)
    return events, total_bins * delta_t


def fuzz_oracle(cases: int = 10_000, seed: int = 0, literal_share: float = 0.1) -> FuzzReport:
    """Module path (accumulator -> grid -> trace -> comparator tree) vs the oracle, every active pixel."""
    rng = random.Random(seed)
    report = FuzzReport("scoring vs brute-force oracle")
    delta_t = 100
    for case in range(cases):
        n, params = _random_params(rng, literal_share=literal_share)
        theta_e = rng.randint(1, 3)
        events, t_end = random_instance(rng, n, params.L, delta_t, theta_e)

        acc = AxisAccumulator(n, delta_t, 0)
        grid = OccupancyGrid(n, params.L)
        vec = None
        idx = 0
        for _ in range(t_end // delta_t):
            while idx < len(events) and events[idx].t < acc.bin_end:
                acc.accumulate(events[idx], "x")
                idx += 1
            vec = acc.close_bin(theta_e)
            grid.shift_insert(vec)

        history = OracleHistory(events, t_end, delta_t, theta_e, n, params.L)
        for x0 in vec.active():
            got = select_winner(score_all(grid, x0, params), params, x0)
            want = oracle_winner(history, x0, params)
            report.comparisons += 1
            if got != want:
                report.mismatches.append(f"case {case} N={n} {params} x0={x0}: scoring={got} oracle={want}")
        report.cases += 1
    return report

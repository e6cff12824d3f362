"""Event records and the RPG ``events.txt`` text format."""

from __future__ import annotations

import io
import os
from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal, InvalidOperation
from typing import Iterable, Iterator, TextIO, Union

US_PER_S = 1_000_000


class EventFormatError(ValueError):
    """A malformed or out-of-order event line."""

    def __init__(self, message: str, lineno: int | None = None) -> None:
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class SensorGeometry:
    nx: int = 240
    ny: int = 180

    def __post_init__(self) -> None:
        if self.nx <= 0 or self.ny <= 0:
            raise ValueError(f"sensor dimensions must be positive, got {self.nx}x{self.ny}")

    def contains(self, x: int, y: int) -> bool:
        return 0 <= x < self.nx and 0 <= y < self.ny


@dataclass(frozen=True, order=True)
class Event:
    """One sensor event. ``t`` is in integer microseconds, ``p`` is -1 or +1."""

    t: int
    x: int
    y: int
    p: int


def _seconds_to_us(text: str) -> int:
    # Decimal keeps "1.234567" exact where float would land on 1234566.99...
    try:
        value = Decimal(text)
    except InvalidOperation:
        raise ValueError(text) from None
    if not value.is_finite():
        raise ValueError(text)
    return int((value * US_PER_S).to_integral_value(ROUND_HALF_EVEN))


def parse_event_line(
    line: str, geometry: SensorGeometry = SensorGeometry(), lineno: int | None = None
) -> Event:
    """Parse ``"t x y p"`` with ``t`` in seconds and ``p`` in {0, 1}."""
    fields = line.split()
    if len(fields) != 4:
        raise EventFormatError(f"expected 4 fields, got {len(fields)}", lineno)
    t_s, x_s, y_s, p_s = fields
    try:
        t = _seconds_to_us(t_s)
        x = int(x_s)
        y = int(y_s)
        p_raw = int(p_s)
    except ValueError as exc:
        raise EventFormatError(f"non-numeric field in {line.strip()!r}", lineno) from exc
    if t < 0:
        raise EventFormatError(f"negative timestamp {t_s}", lineno)
    if not 0 <= x < geometry.nx:
        raise EventFormatError(f"x={x} out of bounds [0, {geometry.nx})", lineno)
    if not 0 <= y < geometry.ny:
        raise EventFormatError(f"y={y} out of bounds [0, {geometry.ny})", lineno)
    if p_raw not in (0, 1):
        raise EventFormatError(f"polarity must be 0 or 1, got {p_raw}", lineno)
    return Event(t, x, y, 1 if p_raw else -1)


def format_event_line(event: Event) -> str:
    """Inverse of :func:`parse_event_line` (microsecond-exact)."""
    sec, us = divmod(event.t, US_PER_S)
    return f"{sec}.{us:06d} {event.x} {event.y} {1 if event.p > 0 else 0}"


def write_events(events: Iterable[Event], dest: Union[str, os.PathLike, TextIO]) -> int:
    """Write events in RPG text format; returns the number written."""
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "w", encoding="ascii") as fh:
            return write_events(events, fh)
    n = 0
    for ev in events:
        dest.write(format_event_line(ev))
        dest.write("\n")
        n += 1
    return n


def _iter_lines(source) -> Iterator[str]:
    if isinstance(source, (str, os.PathLike)):
        with open(source, "r", encoding="ascii") as fh:
            yield from fh
    else:
        yield from source


def stream_events(
    source: Union[str, os.PathLike, TextIO, Iterable[str], Iterable[Event]],
    geometry: SensorGeometry = SensorGeometry(),
) -> Iterator[Event]:
    """Yield events in arrival order, rejecting the first timestamp regression.

    ``source`` may be a path, an open text file, an iterable of lines, or an
    iterable of already-built :class:`Event` values. Blank lines and ``#``
    comments are skipped. Equal timestamps are allowed.
    """
    last_t = -1
    for lineno, item in enumerate(_iter_lines(source), start=1):
        if isinstance(item, Event):
            ev = item
            if not geometry.contains(ev.x, ev.y):
                raise EventFormatError(f"event {ev} outside {geometry.nx}x{geometry.ny}", lineno)
        else:
            stripped = item.strip()
            if not stripped or stripped.startswith("#"):
                continue
            ev = parse_event_line(stripped, geometry, lineno)
        if ev.t < last_t:
            raise EventFormatError(f"timestamp regression ({ev.t} us after {last_t} us)", lineno)
        last_t = ev.t
        yield ev


def read_events(source, geometry: SensorGeometry = SensorGeometry()) -> list[Event]:
    return list(stream_events(source, geometry))


def events_to_text(events: Iterable[Event]) -> str:
    buf = io.StringIO()
    write_events(events, buf)
    return buf.getvalue()

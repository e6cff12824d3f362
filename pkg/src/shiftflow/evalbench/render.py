"""Deterministic SVG output: flow fields and sweep heat-maps."""

from __future__ import annotations

import colorsys
import math
from typing import Iterable, Optional, Sequence
from xml.sax.saxutils import escape

from ..events import Event, SensorGeometry
from ..pipeline import Detection

# Default arrow scale: the fastest detection is drawn this many pixels long.
DEFAULT_MAX_ARROW_PX = 20.0


def hue_colour(vx: float, vy: float) -> str:
    """Direction on the HSV colour wheel (hue = atan2(vy, vx), full saturation and value)."""
    hue = (math.atan2(vy, vx) / (2 * math.pi)) % 1.0
    r, g, b = colorsys.hsv_to_rgb(hue, 1.0, 1.0)
    return f"#{round(r * 255):02x}{round(g * 255):02x}{round(b * 255):02x}"


def _f(v: float) -> str:
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


def render_flow(
    events: Iterable[Event],
    detections: Sequence[Detection],
    geometry: SensorGeometry = SensorGeometry(),
    scale_s: Optional[float] = None,
    pixel: int = 3,
) -> str:
    """One bin as SVG: events as grey dots, one arrow per detection at ``(x0, y_med)``.

    Arrow length is ``speed * scale_s`` sensor pixels, where speed is in
    px/s. Without ``scale_s`` the fastest arrow is drawn
    ``DEFAULT_MAX_ARROW_PX`` long; the scale used is written into the
    document's ``<desc>``.
    """
    speeds = [math.hypot(d.v_x, d.v_y) for d in detections]
    if scale_s is None:
        top = max(speeds, default=0.0)
        scale_s = DEFAULT_MAX_ARROW_PX / top if top > 0 else 0.0
    w, h = geometry.nx * pixel, geometry.ny * pixel
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">',
        f"<desc>arrow length = speed(px/s) * {scale_s:.6g} s, in sensor pixels; hue = atan2(vy, vx)</desc>",
        f'<rect width="{w}" height="{h}" fill="#000000"/>',
        '<g fill="#8c8c8c">',
    ]
    seen = set()
    for ev in events:
        if (ev.x, ev.y) in seen:
            continue
        seen.add((ev.x, ev.y))
    for x, y in sorted(seen):
        out.append(f'<rect x="{x * pixel}" y="{y * pixel}" width="{pixel}" height="{pixel}"/>')
    out.append("</g>")
    out.append('<g stroke-width="1.5">')
    for d in detections:
        colour = hue_colour(d.v_x, d.v_y)
        x0, y0 = (d.x0 + 0.5) * pixel, (d.y_med + 0.5) * pixel
        dx, dy = d.v_x * scale_s * pixel, d.v_y * scale_s * pixel
        x1, y1 = x0 + dx, y0 + dy
        out.append(
            f'<line x1="{_f(x0)}" y1="{_f(y0)}" x2="{_f(x1)}" y2="{_f(y1)}" stroke="{colour}"/>'
        )
        length = math.hypot(dx, dy)
        if length > 0:
            ux, uy = dx / length, dy / length
            head = min(4.0, 0.5 * length)
            bx, by = x1 - ux * head, y1 - uy * head
            pts = [
                (x1, y1),
                (bx - uy * head * 0.5, by + ux * head * 0.5),
                (bx + uy * head * 0.5, by - ux * head * 0.5),
            ]
            pts_s = " ".join(f"{_f(px)},{_f(py)}" for px, py in pts)
            out.append(f'<polygon points="{pts_s}" fill="{colour}" stroke="none"/>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


BAND_COLOURS = {
    "green": "#4caf50",
    "yellow": "#ffd54f",
    "poor": "#ff8a65",
    "red": "#e53935",
    "grey": "#9e9e9e",
}


def render_sweep(cells: Sequence, cell_px: int = 90) -> str:
    """Heat-map of sweep cells: rows are theta_e, columns are delta_t."""
    dts = sorted({c.delta_t for c in cells})
    thetas = sorted({c.theta_e for c in cells})
    margin = 70
    w = margin + cell_px * len(dts)
    h = margin + cell_px * len(thetas)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" '
        'font-family="sans-serif" font-size="11">',
        '<rect width="100%" height="100%" fill="#ffffff"/>',
    ]
    for i, dt in enumerate(dts):
        out.append(
            f'<text x="{margin + i * cell_px + cell_px // 2}" y="{margin - 8}" text-anchor="middle">'
            f"dt={dt / 1000:g}ms</text>"
        )
    for k, th in enumerate(thetas):
        out.append(f'<text x="6" y="{margin + k * cell_px + cell_px // 2}">theta={th}</text>')
    for c in cells:
        i, k = dts.index(c.delta_t), thetas.index(c.theta_e)
        x, y = margin + i * cell_px, margin + k * cell_px
        acc = "-" if c.accuracy is None else f"{c.accuracy:.1f}%"
        out.append(
            f'<rect x="{x}" y="{y}" width="{cell_px}" height="{cell_px}" '
            f'fill="{BAND_COLOURS[c.band]}" stroke="#ffffff"/>'
        )
        for line, text in enumerate((acc, f"rho={100 * c.density:.1f}%", f"n={c.n}")):
            out.append(
                f'<text x="{x + cell_px // 2}" y="{y + 30 + 16 * line}" text-anchor="middle">{escape(text)}</text>'
            )
    out.append("</svg>")
    return "\n".join(out) + "\n"

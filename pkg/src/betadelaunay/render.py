"""SVG drawings of planar tessellations."""

from __future__ import annotations

import colorsys
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .tessellation import Tessellation, WindowBox, k_faces


class UnsupportedDimensionError(ValueError):
    pass


@dataclass(frozen=True)
class Style:
    stroke: str = "#1f2937"
    stroke_width: float = 0.02
    frame: str = "#9ca3af"
    fill: bool = False
    opacity: float = 0.55


def _fmt(x: float) -> str:
    s = f"{x:.6f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def clip_segment(p, q, lo, hi) -> Optional[tuple]:
    """Liang-Barsky clip of the segment pq to the box [lo, hi]; None when disjoint."""
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    d = q - p
    t0, t1 = 0.0, 1.0
    for j in range(len(p)):
        for num, den in ((p[j] - lo[j], -d[j]), (hi[j] - p[j], d[j])):
            if den == 0:
                if num < 0:
                    return None
                continue
            t = num / den
            if den < 0:
                t0 = max(t0, t)
            else:
                t1 = min(t1, t)
    if t0 > t1:
        return None
    return p + t0 * d, p + t1 * d


def clip_polygon(P: np.ndarray, lo, hi) -> np.ndarray:
    """Sutherland-Hodgman clip of a convex polygon to the box [lo, hi]."""
    for j in range(2):
        for bound, sign in ((lo[j], 1.0), (hi[j], -1.0)):
            if len(P) == 0:
                return P
            s = sign * (P[:, j] - bound)
            out = []
            for i in range(len(P)):
                a, b = P[i], P[(i + 1) % len(P)]
                sa, sb = s[i], s[(i + 1) % len(P)]
                if sa >= 0:
                    out.append(a)
                if (sa >= 0) != (sb >= 0):
                    out.append(a + sa / (sa - sb) * (b - a))
            P = np.array(out).reshape(-1, 2)
    return P


def _colour(i: int) -> str:
    hue = (i * 0.618033988749895) % 1.0
    r, g, b = colorsys.hls_to_rgb(hue, 0.72, 0.45)
    return f"#{int(r * 255):02x}{int(g * 255):02x}{int(b * 255):02x}"


def render_svg(t: Tessellation, window: WindowBox, style: Style = Style()) -> str:
    """SVG of the 1-skeleton of a planar tessellation clipped to ``window``.

    The viewBox is the window itself, with the y axis pointing up.  Edges
    appear in the lexicographic order of their vertex indices, so equal
    tessellations give equal documents.
    """
    if t.dim != 2 or window.dim != 2:
        raise UnsupportedDimensionError(f"only planar tessellations (d = 3) render; got d = {t.d}")
    n = float(window.n)
    lo, hi = window.lo, window.hi
    flip = np.array([1.0, -1.0])
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{_fmt(-n)} {_fmt(-n)} '
        f'{_fmt(2 * n)} {_fmt(2 * n)}">',
        f'<rect x="{_fmt(-n)}" y="{_fmt(-n)}" width="{_fmt(2 * n)}" height="{_fmt(2 * n)}" '
        f'fill="none" stroke="{style.frame}" stroke-width="{_fmt(style.stroke_width)}"/>',
    ]
    if style.fill and len(t.cells):
        out.append(f'<g stroke="none" fill-opacity="{_fmt(style.opacity)}">')
        for i, c in enumerate(t.cells):
            P = clip_polygon(t.v[c], lo, hi)
            if len(P) >= 3:
                pts = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in P * flip)
                out.append(f'<polygon points="{pts}" fill="{_colour(i)}"/>')
        out.append("</g>")
    if len(t.cells):
        out.append(f'<g stroke="{style.stroke}" stroke-width="{_fmt(style.stroke_width)}" '
                   f'stroke-linecap="round">')
        for a, b in k_faces(t, 1):
            seg = clip_segment(t.v[a], t.v[b], lo, hi)
            if seg is None:
                continue
            (x1, y1), (x2, y2) = seg[0] * flip, seg[1] * flip
            if x1 == x2 and y1 == y2:
                continue
            out.append(f'<line x1="{_fmt(x1)}" y1="{_fmt(y1)}" x2="{_fmt(x2)}" y2="{_fmt(y2)}"/>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"

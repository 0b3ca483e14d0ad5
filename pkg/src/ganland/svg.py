"""Minimal static SVG renderings (line plots and heatmaps) written by
hand so reports need no plotting dependency.  CSV files remain the
authoritative outputs; these are quick-look companions."""

from __future__ import annotations

import math
from typing import Sequence

from .autodiff import _atomic_write

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo
    step = 10 ** math.floor(math.log10(span / n))
    for mult in (1, 2, 5, 10):
        if span / (step * mult) <= n:
            step *= mult
            break
    first = math.ceil(lo / step) * step
    out = []
    t = first
    while t <= hi + 1e-12 * span:
        out.append(round(t, 12))
        t += step
    return out


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def line_plot(
    series: Sequence[tuple[str, Sequence[float], Sequence[float]]],
    path: str,
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    width: int = 640,
    height: int = 440,
) -> None:
    """Render one or more (label, xs, ys) series as polylines with axes."""
    ml, mr, mt, mb = 60, 20, 34, 48
    pw, ph = width - ml - mr, height - mt - mb
    xs_all = [x for _, xs, _ in series for x in xs]
    ys_all = [y for _, _, ys in series for y in ys if math.isfinite(y)]
    x0, x1 = min(xs_all), max(xs_all)
    y0, y1 = min(ys_all), max(ys_all)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def px(x: float) -> float:
        return ml + (x - x0) / (x1 - x0) * pw

    def py(y: float) -> float:
        return mt + ph - (y - y0) / (y1 - y0) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2}" y="18" text-anchor="middle" font-size="14">{title}</text>',
    ]
    for t in _ticks(x0, x1):
        parts.append(
            f'<line x1="{px(t):.1f}" y1="{mt + ph}" x2="{px(t):.1f}" '
            f'y2="{mt + ph + 4}" stroke="black"/>'
            f'<text x="{px(t):.1f}" y="{mt + ph + 17}" text-anchor="middle">{_fmt(t)}</text>'
        )
    for t in _ticks(y0, y1):
        parts.append(
            f'<line x1="{ml - 4}" y1="{py(t):.1f}" x2="{ml}" y2="{py(t):.1f}" stroke="black"/>'
            f'<text x="{ml - 7}" y="{py(t):.1f}" text-anchor="end" dy="4">{_fmt(t)}</text>'
            f'<line x1="{ml}" y1="{py(t):.1f}" x2="{ml + pw}" y2="{py(t):.1f}" '
            f'stroke="#dddddd"/>'
        )
    parts.append(
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>'
    )
    parts.append(
        f'<text x="{ml + pw / 2}" y="{height - 10}" text-anchor="middle">{xlabel}</text>'
    )
    parts.append(
        f'<text x="16" y="{mt + ph / 2}" text-anchor="middle" '
        f'transform="rotate(-90 16 {mt + ph / 2})">{ylabel}</text>'
    )
    for i, (label, xs, ys) in enumerate(series):
        color = _COLORS[i % len(_COLORS)]
        pts = " ".join(
            f"{px(x):.1f},{py(y):.1f}" for x, y in zip(xs, ys) if math.isfinite(y)
        )
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        if label:
            ly = mt + 14 + 16 * i
            parts.append(
                f'<line x1="{ml + pw - 110}" y1="{ly - 4}" x2="{ml + pw - 90}" '
                f'y2="{ly - 4}" stroke="{color}" stroke-width="1.5"/>'
                f'<text x="{ml + pw - 85}" y="{ly}">{label}</text>'
            )
    parts.append("</svg>")
    _atomic_write(path, "\n".join(parts) + "\n")


def _heat_color(frac: float) -> str:
    frac = min(1.0, max(0.0, frac))
    stops = ((68, 1, 84), (59, 82, 139), (33, 145, 140), (94, 201, 98), (253, 231, 37))
    pos = frac * (len(stops) - 1)
    i = min(int(pos), len(stops) - 2)
    t = pos - i
    rgb = tuple(round(a + (b - a) * t) for a, b in zip(stops[i], stops[i + 1]))
    return f"rgb({rgb[0]},{rgb[1]},{rgb[2]})"


def heatmap(
    values: Sequence[Sequence[float]],
    row_labels: Sequence,
    col_labels: Sequence,
    path: str,
    title: str = "",
    row_axis: str = "",
    col_axis: str = "",
) -> None:
    """Render a matrix (rows x cols) of values in [0, 1] as colored cells;
    NaN cells are hatched gray."""
    cell, ml, mt = 84, 80, 56
    rows, cols = len(values), len(values[0])
    width = ml + cols * cell + 20
    height = mt + rows * cell + 40
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<text x="{ml + cols * cell / 2}" y="{mt - 18}" text-anchor="middle">{col_axis}</text>',
    ]
    for r in range(rows):
        parts.append(
            f'<text x="{ml - 8}" y="{mt + r * cell + cell / 2 + 4}" '
            f'text-anchor="end">{row_axis}={row_labels[r]}</text>'
        )
        for c in range(cols):
            v = values[r][c]
            x, y = ml + c * cell, mt + r * cell
            if r == 0:
                parts.append(
                    f'<text x="{x + cell / 2}" y="{mt - 4}" '
                    f'text-anchor="middle">{col_labels[c]}</text>'
                )
            if v != v:  # NaN
                parts.append(
                    f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" '
                    f'fill="#cccccc" stroke="white"/>'
                    f'<text x="{x + cell / 2}" y="{y + cell / 2 + 4}" '
                    f'text-anchor="middle">n/a</text>'
                )
            else:
                parts.append(
                    f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" '
                    f'fill="{_heat_color(v)}" stroke="white"/>'
                    f'<text x="{x + cell / 2}" y="{y + cell / 2 + 4}" text-anchor="middle" '
                    f'fill="{"black" if v > 0.6 else "white"}">{v:.2f}</text>'
                )
    parts.append("</svg>")
    _atomic_write(path, "\n".join(parts) + "\n")

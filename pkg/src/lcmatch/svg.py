"""Minimal self-contained SVG plots.

Every plot is written together with a sibling CSV holding exactly the
plotted numbers, so the SVG carries no information of its own.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 640, 440
MARGIN = dict(left=80, right=20, top=40, bottom=60)
COLORS = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b")


def _nice_ticks(lo, hi, n=5):
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        return [lo]
    step = 10 ** math.floor(math.log10((hi - lo) / n))
    for m in (1, 2, 5, 10):
        if (hi - lo) / (m * step) <= n:
            step *= m
            break
    start = math.ceil(lo / step) * step
    return [start + k * step for k in range(int((hi - start) / step + 1e-9) + 1)]


def _range(values):
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return 0.0, 1.0
    lo, hi = float(v.min()), float(v.max())
    if hi == lo:
        pad = abs(lo) * 0.05 or 1.0
        return lo - pad, hi + pad
    pad = 0.03 * (hi - lo)
    return lo - pad, hi + pad


class _Frame:
    def __init__(self, xr, yr):
        self.xr, self.yr = xr, yr
        self.x0, self.x1 = MARGIN["left"], WIDTH - MARGIN["right"]
        self.y0, self.y1 = HEIGHT - MARGIN["bottom"], MARGIN["top"]

    def px(self, x):
        return self.x0 + (x - self.xr[0]) / (self.xr[1] - self.xr[0]) * (self.x1 - self.x0)

    def py(self, y):
        return self.y0 + (y - self.yr[0]) / (self.yr[1] - self.yr[0]) * (self.y1 - self.y0)

    def axes(self, xlabel, ylabel, title):
        out = [
            f'<rect x="{self.x0}" y="{self.y1}" width="{self.x1 - self.x0}" height="{self.y0 - self.y1}" '
            'fill="none" stroke="black"/>'
        ]
        for t in _nice_ticks(*self.xr):
            x = self.px(t)
            out.append(f'<line x1="{x:.2f}" y1="{self.y0}" x2="{x:.2f}" y2="{self.y0 + 5}" stroke="black"/>')
            out.append(f'<text x="{x:.2f}" y="{self.y0 + 18}" font-size="11" text-anchor="middle">{t:.4g}</text>')
        for t in _nice_ticks(*self.yr):
            y = self.py(t)
            out.append(f'<line x1="{self.x0 - 5}" y1="{y:.2f}" x2="{self.x0}" y2="{y:.2f}" stroke="black"/>')
            out.append(f'<text x="{self.x0 - 8}" y="{y + 4:.2f}" font-size="11" text-anchor="end">{t:.4g}</text>')
        cx = 0.5 * (self.x0 + self.x1)
        cy = 0.5 * (self.y0 + self.y1)
        out.append(f'<text x="{cx}" y="{HEIGHT - 15}" font-size="13" text-anchor="middle">{escape(xlabel)}</text>')
        out.append(
            f'<text x="18" y="{cy}" font-size="13" text-anchor="middle" transform="rotate(-90 18 {cy})">'
            f"{escape(ylabel)}</text>"
        )
        out.append(f'<text x="{cx}" y="24" font-size="14" text-anchor="middle">{escape(title)}</text>')
        return out


def _document(body):
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">\n<rect width="100%" height="100%" fill="white"/>\n'
        + "\n".join(body)
        + "\n</svg>\n"
    )


def xy_plot(svg_path, series, xlabel="", ylabel="", title=""):
    """Line and scatter plot.

    Args:
        svg_path: Output ``.svg`` path; the data go to the same stem with ``.csv``.
        series: Iterable of ``(label, x, y, style)`` with style ``"line"`` or ``"scatter"``.

    Returns:
        ``(svg_path, csv_path)``.
    """
    svg_path = Path(svg_path)
    csv_path = svg_path.with_suffix(".csv")
    series = [(label, np.asarray(x, float), np.asarray(y, float), style) for label, x, y, style in series]
    frame = _Frame(
        _range(np.concatenate([s[1] for s in series])),
        _range(np.concatenate([s[2] for s in series])),
    )
    body = frame.axes(xlabel, ylabel, title)
    for k, (label, x, y, style) in enumerate(series):
        color = COLORS[k % len(COLORS)]
        ok = np.isfinite(x) & np.isfinite(y)
        if style == "line":
            pts = " ".join(f"{frame.px(a):.2f},{frame.py(b):.2f}" for a, b in zip(x[ok], y[ok]))
            body.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        else:
            body.extend(
                f'<circle cx="{frame.px(a):.2f}" cy="{frame.py(b):.2f}" r="2" fill="{color}"/>'
                for a, b in zip(x[ok], y[ok])
            )
        ly = MARGIN["top"] + 16 + 16 * k
        body.append(f'<rect x="{frame.x1 - 150}" y="{ly - 9}" width="10" height="10" fill="{color}"/>')
        body.append(f'<text x="{frame.x1 - 135}" y="{ly}" font-size="11">{escape(label)}</text>')
    svg_path.write_text(_document(body))
    with csv_path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["series", "x", "y"])
        for label, x, y, _ in series:
            for a, b in zip(x, y):
                w.writerow([label, repr(float(a)), repr(float(b))])
    return svg_path, csv_path


def _color(t):
    # white to dark blue
    t = min(max(t, 0.0), 1.0)
    r, g, b = (int(255 + (c - 255) * t) for c in (8, 48, 107))
    return f"#{r:02x}{g:02x}{b:02x}"


def heatmap(svg_path, grid, title="", max_cells=120):
    """Colour map of a SweepGrid, decimated to at most ``max_cells`` per axis.

    Masked cells are drawn grey. The sibling CSV lists the plotted
    ``gate, bias, value`` triples.
    """
    svg_path = Path(svg_path)
    csv_path = svg_path.with_suffix(".csv")
    si = max(1, math.ceil(grid.gate_axis.size / max_cells))
    sj = max(1, math.ceil(grid.bias_axis.size / max_cells))
    gate = grid.gate_axis[::si]
    bias = grid.bias_axis[::sj]
    vals = grid.masked_values()[::si, ::sj]
    frame = _Frame(_range(gate), _range(bias))
    finite = vals[np.isfinite(vals)]
    lo, hi = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    span = hi - lo or 1.0
    dx = (frame.x1 - frame.x0) / gate.size
    dy = (frame.y0 - frame.y1) / bias.size
    body = []
    for i, vg in enumerate(gate):
        for j, vs in enumerate(bias):
            v = vals[i, j]
            fill = "#bbbbbb" if not np.isfinite(v) else _color((v - lo) / span)
            x = frame.px(vg) - 0.5 * dx
            y = frame.py(vs) - 0.5 * dy
            body.append(f'<rect x="{x:.2f}" y="{y:.2f}" width="{dx + 0.3:.2f}" height="{dy + 0.3:.2f}" fill="{fill}"/>')
    body += frame.axes("V_G (V)", "V_SD (V)", f"{title} [{grid.unit}] {lo:.3g} to {hi:.3g}")
    svg_path.write_text(_document(body))
    with csv_path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["gate", "bias", "value"])
        for i, vg in enumerate(gate):
            for j, vs in enumerate(bias):
                w.writerow([repr(float(vg)), repr(float(vs)), repr(float(vals[i, j]))])
    return svg_path, csv_path

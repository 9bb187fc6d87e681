"""Minimal deterministic SVG emitters: line/scatter, identity scatter, heatmap, dual-axis."""

from __future__ import annotations

from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 640, 420
MARGIN = dict(left=70, right=30, top=40, bottom=55)
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#17becf", "#8c564b")


@dataclass
class Series:
    x: np.ndarray
    y: np.ndarray
    label: str = ""
    kind: str = "line"          # line | scatter
    color: str | None = None
    dashed: bool = False


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _tick(v: float) -> str:
    return f"{v:.3g}"


def _range(values, pad=0.05):
    vals = np.concatenate([np.asarray(v, dtype=float).reshape(-1) for v in values]) if values else np.array([])
    vals = vals[np.isfinite(vals)]
    if vals.size == 0:
        return 0.0, 1.0
    lo, hi = float(vals.min()), float(vals.max())
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    span = hi - lo
    return lo - pad * span, hi + pad * span


class _Frame:
    def __init__(self, xr, yr, width=WIDTH, height=HEIGHT, right=MARGIN["right"]):
        self.xr, self.yr = xr, yr
        self.x0, self.x1 = MARGIN["left"], width - right
        self.y0, self.y1 = height - MARGIN["bottom"], MARGIN["top"]

    def px(self, x):
        return self.x0 + (np.asarray(x, dtype=float) - self.xr[0]) / (self.xr[1] - self.xr[0]) * (self.x1 - self.x0)

    def py(self, y, yr=None):
        lo, hi = yr or self.yr
        return self.y0 - (np.asarray(y, dtype=float) - lo) / (hi - lo) * (self.y0 - self.y1)


def _header(title, width=WIDTH, height=HEIGHT):
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
    ]


def _axes(fr: _Frame, xlabel, ylabel, yr=None, side="left", color="black", n=5):
    out = []
    lo, hi = yr or fr.yr
    if side == "left":
        out.append(f'<line class="axis" x1="{fr.x0}" y1="{fr.y0}" x2="{fr.x1}" y2="{fr.y0}" stroke="black"/>')
        out.append(f'<line class="axis" x1="{fr.x0}" y1="{fr.y0}" x2="{fr.x0}" y2="{fr.y1}" stroke="black"/>')
        for v in np.linspace(fr.xr[0], fr.xr[1], n):
            x = fr.px(v)
            out.append(f'<line x1="{_fmt(x)}" y1="{fr.y0}" x2="{_fmt(x)}" y2="{fr.y0 + 5}" stroke="black"/>')
            out.append(f'<text x="{_fmt(x)}" y="{fr.y0 + 18}" text-anchor="middle">{_tick(v)}</text>')
        out.append(f'<text x="{(fr.x0 + fr.x1) / 2:.1f}" y="{fr.y0 + 40}" text-anchor="middle">{escape(xlabel)}</text>')
        ax, tx, anchor, lx = fr.x0, fr.x0 - 8, "end", 18
    else:
        out.append(f'<line class="axis" x1="{fr.x1}" y1="{fr.y0}" x2="{fr.x1}" y2="{fr.y1}" stroke="{color}"/>')
        ax, tx, anchor, lx = fr.x1, fr.x1 + 8, "start", fr.x1 + 55
    for v in np.linspace(lo, hi, n):
        y = fr.py(v, (lo, hi))
        d = -5 if side == "left" else 5
        out.append(f'<line x1="{ax}" y1="{_fmt(y)}" x2="{ax + d}" y2="{_fmt(y)}" stroke="{color}"/>')
        out.append(f'<text x="{tx}" y="{_fmt(y + 4)}" text-anchor="{anchor}" fill="{color}">{_tick(v)}</text>')
    ymid = (fr.y0 + fr.y1) / 2
    out.append(f'<text x="{lx}" y="{ymid:.1f}" text-anchor="middle" fill="{color}" '
               f'transform="rotate(-90 {lx} {ymid:.1f})">{escape(ylabel)}</text>')
    return out


def _series_svg(s: Series, fr: _Frame, color: str, yr=None):
    x = np.asarray(s.x, dtype=float).reshape(-1)
    y = np.asarray(s.y, dtype=float).reshape(-1)
    keep = np.isfinite(x) & np.isfinite(y)
    px, py = fr.px(x[keep]), fr.py(y[keep], yr)
    if s.kind == "scatter":
        return [f'<circle cx="{_fmt(a)}" cy="{_fmt(b)}" r="3" fill="{color}"/>' for a, b in zip(px, py)]
    if px.size == 0:
        return []
    pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(px, py))
    dash = ' stroke-dasharray="6,4"' if s.dashed else ""
    return [f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>']


def _legend(entries, fr: _Frame):
    out = []
    for i, (label, color, kind) in enumerate(entries):
        y = fr.y1 + 8 + 16 * i
        x = fr.x0 + 10
        out.append('<g class="legend-entry">')
        if kind == "scatter":
            out.append(f'<circle cx="{x + 10}" cy="{y}" r="3" fill="{color}"/>')
        else:
            out.append(f'<line x1="{x}" y1="{y}" x2="{x + 20}" y2="{y}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{x + 26}" y="{y + 4}">{escape(label)}</text>')
        out.append("</g>")
    return out


def line_plot(series, title: str = "", xlabel: str = "x", ylabel: str = "y", identity: bool = False) -> str:
    """Overlay of line and scatter series; ``identity`` adds the line ``y = x``."""
    series = list(series)
    xr = _range([s.x for s in series])
    yr = _range([s.y for s in series])
    if identity:
        xr = yr = (min(xr[0], yr[0]), max(xr[1], yr[1]))
    fr = _Frame(xr, yr)
    out = _header(title) + _axes(fr, xlabel, ylabel)
    if identity:
        out.append(f'<line class="identity" x1="{_fmt(fr.px(xr[0]))}" y1="{_fmt(fr.py(xr[0]))}" '
                   f'x2="{_fmt(fr.px(xr[1]))}" y2="{_fmt(fr.py(xr[1]))}" stroke="black"/>')
    entries = []
    for i, s in enumerate(series):
        color = s.color or PALETTE[i % len(PALETTE)]
        out += _series_svg(s, fr, color)
        if s.label:
            entries.append((s.label, color, s.kind))
    out += _legend(entries, fr)
    out.append("</svg>")
    return "\n".join(out) + "\n"


def identity_scatter(x, y, title: str = "", xlabel: str = "x", ylabel: str = "y") -> str:
    return line_plot([Series(x, y, "", "scatter")], title, xlabel, ylabel, identity=True)


def _colormap(t: float) -> str:
    # blue -> white -> red
    t = min(max(t, 0.0), 1.0)
    if t < 0.5:
        a = t / 0.5
        r, g, b = int(255 * a), int(255 * a), 255
    else:
        a = (t - 0.5) / 0.5
        r, g, b = 255, int(255 * (1 - a)), int(255 * (1 - a))
    return f"#{r:02x}{g:02x}{b:02x}"


def heatmap(Z, extent=(-1.0, 1.0, -1.0, 1.0), title: str = "", points=None,
            xlabel: str = "x1", ylabel: str = "x2") -> str:
    """``Z[i, j]`` is the value at ``(x_j, y_i)``; one rect per cell, optional star markers at ``points``."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    ny, nx = Z.shape
    fr = _Frame((extent[0], extent[1]), (extent[2], extent[3]), right=90)
    out = _header(title) + _axes(fr, xlabel, ylabel)
    finite = Z[np.isfinite(Z)]
    lo, hi = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    span = hi - lo if hi > lo else 1.0
    cw = (fr.x1 - fr.x0) / nx
    ch = (fr.y0 - fr.y1) / ny
    for i in range(ny):
        for j in range(nx):
            color = _colormap((Z[i, j] - lo) / span) if np.isfinite(Z[i, j]) else "#888888"
            out.append(f'<rect class="cell" x="{_fmt(fr.x0 + j * cw)}" y="{_fmt(fr.y0 - (i + 1) * ch)}" '
                       f'width="{_fmt(cw + 0.3)}" height="{_fmt(ch + 0.3)}" fill="{color}"/>')
    if points is not None:
        for p in np.atleast_2d(points):
            out.append(f'<text class="marker" x="{_fmt(fr.px(p[0]))}" y="{_fmt(fr.py(p[1]) + 5)}" '
                       f'text-anchor="middle" font-size="16" fill="white" stroke="black" '
                       f'stroke-width="0.5">*</text>')
    bx = fr.x1 + 15
    for k in range(20):
        y = fr.y0 - (k + 1) * (fr.y0 - fr.y1) / 20
        out.append(f'<rect x="{bx}" y="{_fmt(y)}" width="15" height="{_fmt((fr.y0 - fr.y1) / 20 + 0.3)}" '
                   f'fill="{_colormap((k + 0.5) / 20)}"/>')
    out.append(f'<text x="{bx + 20}" y="{fr.y0}">{_tick(lo)}</text>')
    out.append(f'<text x="{bx + 20}" y="{fr.y1 + 10}">{_tick(hi)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def dual_axis(x, y_left, y_right, title: str = "", xlabel: str = "x",
              left_label: str = "left", right_label: str = "right") -> str:
    x = np.asarray(x, dtype=float)
    yl = _range([y_left])
    yr = _range([y_right])
    fr = _Frame(_range([x]), yl, right=80)
    out = _header(title) + _axes(fr, xlabel, left_label, color=PALETTE[0])
    out += _axes(fr, xlabel, right_label, yr=yr, side="right", color=PALETTE[1])
    for s, color, rng_ in ((Series(x, y_left, left_label), PALETTE[0], yl),
                           (Series(x, y_right, right_label), PALETTE[1], yr)):
        out += _series_svg(s, fr, color, rng_)
        out += _series_svg(Series(x, s.y, kind="scatter"), fr, color, rng_)
    out += _legend([(left_label, PALETTE[0], "line"), (right_label, PALETTE[1], "line")], fr)
    out.append("</svg>")
    return "\n".join(out) + "\n"

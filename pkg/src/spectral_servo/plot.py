"""Minimal SVG line plots for convergence traces (no plotting dependency)."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _fmt(v):
    return f"{v:.2f}"


def _log_ticks(lo, hi):
    return [10.0 ** k for k in range(int(math.floor(lo)), int(math.ceil(hi)) + 1)]


def convergence_svg(series, title="", xlabel="iteration", log=True, width=640, height=400):
    """Render ``{name: values}`` as an SVG string.

    With ``log`` the y axis is logarithmic; non-positive values are clipped to
    the smallest positive value present.
    """
    left, right, top, bottom = 70, 150, 40, 50
    pw, ph = width - left - right, height - top - bottom
    arrays = {k: np.asarray(v, dtype=np.float64) for k, v in series.items()}
    n = max((len(a) for a in arrays.values()), default=0)
    finite = np.concatenate([a[np.isfinite(a)] for a in arrays.values()] or [np.zeros(0)])
    if log:
        pos = finite[finite > 0]
        floor = pos.min() if len(pos) else 1e-12
        tf = lambda a: np.log10(np.maximum(a, floor))  # noqa: E731
    else:
        tf = lambda a: a  # noqa: E731
    vals = tf(finite) if len(finite) else np.array([0.0, 1.0])
    ylo, yhi = float(vals.min()), float(vals.max())
    if yhi - ylo < 1e-12:
        ylo, yhi = ylo - 0.5, yhi + 0.5
    xmax = max(n, 2)

    def px(i):
        return left + pw * (i / (xmax - 1) if xmax > 1 else 0.0)

    def py(v):
        return top + ph * (1.0 - (v - ylo) / (yhi - ylo))

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
           f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>']
    if title:
        out.append(f'<text x="{left + pw / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>')
    # y ticks
    if log:
        ticks = [(math.log10(t), f"1e{int(round(math.log10(t)))}") for t in _log_ticks(ylo, yhi)
                 if ylo - 1e-9 <= math.log10(t) <= yhi + 1e-9]
    else:
        ticks = [(v, f"{v:.3g}") for v in np.linspace(ylo, yhi, 5)]
    for v, label in ticks:
        y = py(v)
        out.append(f'<line x1="{left}" y1="{_fmt(y)}" x2="{left + pw}" y2="{_fmt(y)}" stroke="#ddd"/>')
        out.append(f'<text x="{left - 6}" y="{_fmt(y + 4)}" text-anchor="end">{label}</text>')
    # x ticks
    for i in np.unique(np.linspace(0, xmax - 1, 6).round().astype(int)):
        x = px(i)
        out.append(f'<text x="{_fmt(x)}" y="{top + ph + 16}" text-anchor="middle">{i + 1}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    for k, (name, a) in enumerate(arrays.items()):
        color = PALETTE[k % len(PALETTE)]
        ys = tf(a)
        pts = " ".join(f"{_fmt(px(i))},{_fmt(py(v))}" for i, v in enumerate(ys) if np.isfinite(v))
        if pts:
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = top + 14 + 18 * k
        out.append(f'<line x1="{left + pw + 12}" y1="{ly}" x2="{left + pw + 32}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 38}" y="{ly + 4}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def trace_svg(trace, title="convergence"):
    """Plot ``J_t`` and ``J_r`` of an iteration trace."""
    return convergence_svg({"J_t": trace.column("j_t"), "J_r": trace.column("j_r")}, title=title)

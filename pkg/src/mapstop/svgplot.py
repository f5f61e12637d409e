"""Self-contained SVG line charts; CSV stays the canonical artifact."""

from __future__ import annotations

import math

_W, _H = 640, 420
_ML, _MR, _MT, _MB = 62, 16, 30, 46
_COLORS = ("#1f6fb2", "#c2452d", "#3a8f3a", "#8150a0")


def _ticks(lo, hi, n=6):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / max(n - 1, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1, 2, 2.5, 5, 10):
        if mag * mult >= raw:
            step = mag * mult
            break
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-9 * step:
        out.append(0.0 if abs(v) < 1e-12 * step else v)
        v += step
    return out


def _fmt(v):
    return f"{v:.6g}"


def line_chart(path, x, series, labels=None, title="", xlabel="", ylabel=""):
    """Write a basic multi-series line chart to an .svg file.

    x: 1-d sequence; series: list of 1-d sequences of the same length.
    """
    x = [float(v) for v in x]
    series = [[float(v) for v in s] for s in series]
    lo_x, hi_x = min(x), max(x)
    flat = [v for s in series for v in s if math.isfinite(v)]
    lo_y, hi_y = min(flat), max(flat)
    if hi_y - lo_y < 1e-12:
        lo_y -= 0.5
        hi_y += 0.5
    pad = 0.04 * (hi_y - lo_y)
    lo_y -= pad
    hi_y += pad
    pw = _W - _ML - _MR
    ph = _H - _MT - _MB

    def sx(v):
        return _ML + pw * (v - lo_x) / (hi_x - lo_x)

    def sy(v):
        return _MT + ph * (1.0 - (v - lo_y) / (hi_y - lo_y))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<rect x="{_ML}" y="{_MT}" width="{pw}" height="{ph}" fill="none" '
        'stroke="#444"/>',
    ]
    for tv in _ticks(lo_x, hi_x):
        px = sx(tv)
        parts.append(f'<line x1="{px:.1f}" y1="{_MT + ph}" x2="{px:.1f}" '
                     f'y2="{_MT + ph + 5}" stroke="#444"/>')
        parts.append(f'<text x="{px:.1f}" y="{_MT + ph + 18}" '
                     f'text-anchor="middle">{_fmt(tv)}</text>')
    for tv in _ticks(lo_y, hi_y):
        py = sy(tv)
        parts.append(f'<line x1="{_ML - 5}" y1="{py:.1f}" x2="{_ML}" '
                     f'y2="{py:.1f}" stroke="#444"/>')
        parts.append(f'<text x="{_ML - 8}" y="{py + 4:.1f}" '
                     f'text-anchor="end">{_fmt(tv)}</text>')
        parts.append(f'<line x1="{_ML}" y1="{py:.1f}" x2="{_ML + pw}" '
                     f'y2="{py:.1f}" stroke="#ddd" stroke-width="0.5"/>')
    if lo_y < 0 < hi_y:
        py = sy(0.0)
        parts.append(f'<line x1="{_ML}" y1="{py:.1f}" x2="{_ML + pw}" '
                     f'y2="{py:.1f}" stroke="#999" stroke-dasharray="4 3"/>')
    for k, s in enumerate(series):
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x, s)
                       if math.isfinite(b))
        color = _COLORS[k % len(_COLORS)]
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                     'stroke-width="1.6"/>')
        if labels:
            ly = _MT + 16 + 16 * k
            parts.append(f'<line x1="{_ML + pw - 110}" y1="{ly - 4}" '
                         f'x2="{_ML + pw - 90}" y2="{ly - 4}" stroke="{color}" '
                         'stroke-width="1.6"/>')
            parts.append(f'<text x="{_ML + pw - 84}" y="{ly}">{labels[k]}</text>')
    if title:
        parts.append(f'<text x="{_W / 2}" y="18" text-anchor="middle" '
                     f'font-size="14">{title}</text>')
    if xlabel:
        parts.append(f'<text x="{_ML + pw / 2}" y="{_H - 10}" '
                     f'text-anchor="middle">{xlabel}</text>')
    if ylabel:
        parts.append(f'<text x="16" y="{_MT + ph / 2}" text-anchor="middle" '
                     f'transform="rotate(-90 16 {_MT + ph / 2})">{ylabel}</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")

"""Minimal SVG writers for winner maps and line charts."""
from __future__ import annotations

from typing import Dict, Sequence, Tuple
from xml.sax.saxutils import escape

_W, _H, _PAD = 480, 360, 50
COLORS = {"IF": "#1f77b4", "EF": "#d62728", "tie": "#7f7f7f", "error": "#000000"}
_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def _scale(lo, hi, a, b):
    span = (hi - lo) or 1.0
    return lambda v: a + (v - lo) / span * (b - a)


def _frame(title, xlabel, ylabel, xs, ys):
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    sx = _scale(x0, x1, _PAD, _W - _PAD / 2)
    sy = _scale(y0, y1, _H - _PAD, _PAD / 2)
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
             f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="11">',
             f'<rect width="{_W}" height="{_H}" fill="white"/>',
             f'<text x="{_W / 2}" y="14" text-anchor="middle">{escape(title)}</text>',
             f'<line x1="{_PAD}" y1="{_H - _PAD}" x2="{_W - _PAD / 2}" y2="{_H - _PAD}" stroke="black"/>',
             f'<line x1="{_PAD}" y1="{_PAD / 2}" x2="{_PAD}" y2="{_H - _PAD}" stroke="black"/>',
             f'<text x="{_W / 2}" y="{_H - 12}" text-anchor="middle">{escape(xlabel)}</text>',
             f'<text x="12" y="{_H / 2}" text-anchor="middle" '
             f'transform="rotate(-90 12 {_H / 2})">{escape(ylabel)}</text>']
    for v in (x0, x1):
        parts.append(f'<text x="{sx(v):.2f}" y="{_H - _PAD + 14}" text-anchor="middle">{v:.3g}</text>')
    for v in (y0, y1):
        parts.append(f'<text x="{_PAD - 4}" y="{sy(v):.2f}" text-anchor="end">{v:.3g}</text>')
    return parts, sx, sy


def winner_map(points: Sequence[Tuple[float, float, str]], title: str,
               xlabel: str = "mu_I", ylabel: str = "mu_E") -> str:
    """Scatter of grid points coloured by winning policy."""
    xs = [p[0] for p in points] or [0.0, 1.0]
    ys = [p[1] for p in points] or [0.0, 1.0]
    parts, sx, sy = _frame(title, xlabel, ylabel, xs, ys)
    for x, y, who in points:
        parts.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="5" '
                     f'fill="{COLORS.get(who, "#000000")}"><title>{escape(who)}</title></circle>')
    for n, (name, color) in enumerate(COLORS.items()):
        parts.append(f'<rect x="{_W - 70}" y="{24 + 14 * n}" width="10" height="10" fill="{color}"/>'
                     f'<text x="{_W - 56}" y="{33 + 14 * n}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def line_chart(series: Dict[str, Sequence[Tuple[float, float]]], title: str,
               xlabel: str, ylabel: str) -> str:
    pts = [p for s in series.values() for p in s if p[1] == p[1]]
    xs = [p[0] for p in pts] or [0.0, 1.0]
    ys = [p[1] for p in pts] or [0.0, 1.0]
    parts, sx, sy = _frame(title, xlabel, ylabel, xs, ys)
    for n, (name, s) in enumerate(series.items()):
        color = _PALETTE[n % len(_PALETTE)]
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in s if y == y)
        parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        parts.append(f'<text x="{_W - 90}" y="{33 + 14 * n}" fill="{color}">{escape(name)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"

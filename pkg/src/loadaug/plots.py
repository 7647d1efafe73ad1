"""Minimal deterministic SVG charts: scatter, line and stacked-area.

Output depends only on the numbers passed in (fixed formatting, no
timestamps or random ids), so identical inputs give byte-identical files.
"""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")
WIDTH, HEIGHT = 640, 420
MARGIN = {"left": 70, "right": 150, "top": 40, "bottom": 50}


def _fmt(v: float) -> str:
    return f"{v:.2f}"


class _Frame:
    """Maps data coordinates into the plotting rectangle."""

    def __init__(self, xs, ys):
        x = np.concatenate([np.ravel(a) for a in xs]) if len(xs) else np.zeros(1)
        y = np.concatenate([np.ravel(a) for a in ys]) if len(ys) else np.zeros(1)
        self.x0, self.x1 = self._span(x)
        self.y0, self.y1 = self._span(y)
        self.left, self.top = MARGIN["left"], MARGIN["top"]
        self.w = WIDTH - MARGIN["left"] - MARGIN["right"]
        self.h = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    @staticmethod
    def _span(v):
        v = v[np.isfinite(v)]
        if v.size == 0:
            return 0.0, 1.0
        lo, hi = float(v.min()), float(v.max())
        if hi == lo:
            pad = abs(lo) * 0.05 or 1.0
            return lo - pad, hi + pad
        return lo, hi

    def px(self, x):
        return self.left + (np.asarray(x, dtype=float) - self.x0) / (self.x1 - self.x0) * self.w

    def py(self, y):
        return self.top + self.h - (np.asarray(y, dtype=float) - self.y0) / (self.y1 - self.y0) * self.h


def _check(series):
    if not len(series) or any(np.size(s[1]) == 0 for s in series):
        raise ValueError("cannot plot an empty data series")
    for s in series:
        if np.size(s[1]) != np.size(s[2]):
            raise ValueError(f"series {s[0]!r}: x and y differ in length")


def _document(frame: _Frame, title: str, xlabel: str, ylabel: str, body: list, labels: list) -> str:
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.2f}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>',
        f'<rect x="{frame.left}" y="{frame.top}" width="{frame.w}" height="{frame.h}" fill="none" stroke="#444"/>',
    ]
    for i in range(5):
        fx = frame.x0 + (frame.x1 - frame.x0) * i / 4
        fy = frame.y0 + (frame.y1 - frame.y0) * i / 4
        out.append(
            f'<text x="{_fmt(frame.px(fx))}" y="{frame.top + frame.h + 16}" text-anchor="middle" font-size="10">{fx:.4g}</text>'
        )
        out.append(
            f'<text x="{frame.left - 6}" y="{_fmt(frame.py(fy) + 3)}" text-anchor="end" font-size="10">{fy:.4g}</text>'
        )
    out.append(
        f'<text x="{frame.left + frame.w / 2:.2f}" y="{HEIGHT - 12}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>'
    )
    out.append(
        f'<text x="16" y="{frame.top + frame.h / 2:.2f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 16 {frame.top + frame.h / 2:.2f})">{escape(ylabel)}</text>'
    )
    out.extend(body)
    legend_x = frame.left + frame.w + 12
    for i, label in enumerate(labels):
        y = frame.top + 14 + 18 * i
        color = PALETTE[i % len(PALETTE)]
        out.append(f'<rect x="{legend_x}" y="{y - 9}" width="12" height="10" fill="{color}"/>')
        out.append(f'<text x="{legend_x + 18}" y="{y}" font-size="11">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def scatter_svg(series, title="", xlabel="", ylabel="") -> str:
    """``series`` is a list of ``(label, xs, ys)``; one circle per point."""
    _check(series)
    frame = _Frame([s[1] for s in series], [s[2] for s in series])
    body = []
    for i, (_, xs, ys) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        body.append(f'<g fill="{color}" fill-opacity="0.55">')
        for px, py in zip(frame.px(xs), frame.py(ys)):
            body.append(f'<circle cx="{_fmt(px)}" cy="{_fmt(py)}" r="2.5"/>')
        body.append("</g>")
    return _document(frame, title, xlabel, ylabel, body, [s[0] for s in series])


def line_svg(series, title="", xlabel="", ylabel="") -> str:
    """``series`` is a list of ``(label, xs, ys)`` drawn as polylines."""
    _check(series)
    frame = _Frame([s[1] for s in series], [s[2] for s in series])
    body = []
    for i, (_, xs, ys) in enumerate(series):
        pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(frame.px(xs), frame.py(ys)))
        body.append(f'<polyline fill="none" stroke="{PALETTE[i % len(PALETTE)]}" stroke-width="1.8" points="{pts}"/>')
    return _document(frame, title, xlabel, ylabel, body, [s[0] for s in series])


def stacked_area_svg(x, layers, title="", xlabel="", ylabel="") -> str:
    """``layers`` is a list of ``(label, values)`` stacked bottom to top,
    each drawn as a polygon over the previous cumulative total."""
    x = np.asarray(x, dtype=float)
    _check([(lab, x, v) for lab, v in layers])
    cum = [np.zeros_like(x)]
    for _, v in layers:
        cum.append(cum[-1] + np.asarray(v, dtype=float))
    frame = _Frame([x], [cum[0], cum[-1]])
    body = []
    for i in range(len(layers)):
        upper = [f"{_fmt(a)},{_fmt(b)}" for a, b in zip(frame.px(x), frame.py(cum[i + 1]))]
        lower = [f"{_fmt(a)},{_fmt(b)}" for a, b in zip(frame.px(x[::-1]), frame.py(cum[i][::-1]))]
        color = PALETTE[i % len(PALETTE)]
        body.append(f'<polygon fill="{color}" fill-opacity="0.7" stroke="{color}" points="{" ".join(upper + lower)}"/>')
    return _document(frame, title, xlabel, ylabel, body, [lab for lab, _ in layers])


def write_svg(path, text: str) -> Path:
    path = Path(path)
    path.write_text(text, encoding="utf-8")
    return path

"""Minimal dependency-free SVG charts.

Fixed styling: 640x420 canvas, 60 px left / 50 px bottom margins, generic
``sans-serif`` font at 12 px, black axes, five ticks per axis, points as
r=3 circles, lines 1.5 px. Text uses the generic family only, so rendering
needs no font lookup.
"""
from __future__ import annotations

from html import escape

import numpy as np

WIDTH, HEIGHT = 640, 420
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 60, 20, 30, 50
PALETTE = ("#1f4e79", "#c0504d", "#4f8a3a", "#7f6084", "#d08a1a")


def _fmt(v):
    return f"{v:.2f}".rstrip("0").rstrip(".")


class Figure:
    def __init__(self, title, xlabel, ylabel, xlim=None, ylim=None):
        self.title, self.xlabel, self.ylabel = title, xlabel, ylabel
        self.xlim, self.ylim = xlim, ylim
        self.items = []

    def scatter(self, x, y, color=0, filled=None):
        self.items.append(("scatter", np.asarray(x, float), np.asarray(y, float), color, filled))
        return self

    def line(self, x, y, color=0, dashed=False):
        self.items.append(("line", np.asarray(x, float), np.asarray(y, float), color, dashed))
        return self

    def segments(self, x, y0, y1, color=0):
        self.items.append(("seg", np.asarray(x, float), (np.asarray(y0, float),
                                                          np.asarray(y1, float)), color, None))
        return self

    def hline(self, y, color=4):
        self.items.append(("hline", None, y, color, None))
        return self

    def _limits(self):
        xs, ys = [], []
        for kind, x, y, _, _ in self.items:
            if kind == "hline":
                ys.append(np.array([y]))
                continue
            xs.append(x)
            ys.extend(y if kind == "seg" else [y])
        xs = np.concatenate(xs) if xs else np.array([0.0, 1.0])
        ys = np.concatenate(ys) if ys else np.array([0.0, 1.0])
        xs, ys = xs[np.isfinite(xs)], ys[np.isfinite(ys)]
        xlim = self.xlim or (float(xs.min()), float(xs.max()))
        ylim = self.ylim or (float(ys.min()), float(ys.max()))
        if xlim[1] == xlim[0]:
            xlim = (xlim[0] - 1, xlim[1] + 1)
        if ylim[1] == ylim[0]:
            ylim = (ylim[0] - 1, ylim[1] + 1)
        return xlim, ylim

    def render(self) -> str:
        (x0, x1), (y0, y1) = self._limits()
        pw = WIDTH - MARGIN_L - MARGIN_R
        ph = HEIGHT - MARGIN_T - MARGIN_B

        def sx(v):
            return MARGIN_L + (v - x0) / (x1 - x0) * pw

        def sy(v):
            return MARGIN_T + ph - (v - y0) / (y1 - y0) * ph

        out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
               f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
               f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
               f'<text x="{WIDTH / 2:.1f}" y="18" text-anchor="middle" font-size="14">'
               f'{escape(self.title)}</text>',
               f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" '
               f'fill="none" stroke="black"/>']
        for t in np.linspace(x0, x1, 5):
            out.append(f'<line x1="{sx(t):.1f}" y1="{MARGIN_T + ph}" x2="{sx(t):.1f}" '
                       f'y2="{MARGIN_T + ph + 5}" stroke="black"/>')
            out.append(f'<text x="{sx(t):.1f}" y="{MARGIN_T + ph + 18}" '
                       f'text-anchor="middle">{_fmt(t)}</text>')
        for t in np.linspace(y0, y1, 5):
            out.append(f'<line x1="{MARGIN_L - 5}" y1="{sy(t):.1f}" x2="{MARGIN_L}" '
                       f'y2="{sy(t):.1f}" stroke="black"/>')
            out.append(f'<text x="{MARGIN_L - 8}" y="{sy(t) + 4:.1f}" '
                       f'text-anchor="end">{_fmt(t)}</text>')
        out.append(f'<text x="{MARGIN_L + pw / 2:.1f}" y="{HEIGHT - 10}" '
                   f'text-anchor="middle">{escape(self.xlabel)}</text>')
        out.append(f'<text x="14" y="{MARGIN_T + ph / 2:.1f}" text-anchor="middle" '
                   f'transform="rotate(-90 14 {MARGIN_T + ph / 2:.1f})">'
                   f'{escape(self.ylabel)}</text>')
        for kind, x, y, color, extra in self.items:
            c = PALETTE[color % len(PALETTE)]
            if kind == "scatter":
                fills = extra if extra is not None else np.ones(x.size, bool)
                for xi, yi, fi in zip(x, y, fills):
                    if np.isfinite(xi) and np.isfinite(yi):
                        out.append(f'<circle cx="{sx(xi):.1f}" cy="{sy(yi):.1f}" r="3" '
                                   f'stroke="{c}" fill="{c if fi else "white"}"/>')
            elif kind == "line":
                ok = np.isfinite(x) & np.isfinite(y)
                pts = " ".join(f"{sx(a):.1f},{sy(b):.1f}" for a, b in zip(x[ok], y[ok]))
                dash = ' stroke-dasharray="5,4"' if extra else ""
                out.append(f'<polyline points="{pts}" fill="none" stroke="{c}" '
                           f'stroke-width="1.5"{dash}/>')
            elif kind == "seg":
                for xi, a, b in zip(x, y[0], y[1]):
                    out.append(f'<line x1="{sx(xi):.1f}" y1="{sy(a):.1f}" x2="{sx(xi):.1f}" '
                               f'y2="{sy(b):.1f}" stroke="{c}" stroke-opacity="0.5"/>')
            elif kind == "hline" and y0 <= y <= y1:
                out.append(f'<line x1="{MARGIN_L}" y1="{sy(y):.1f}" x2="{MARGIN_L + pw}" '
                           f'y2="{sy(y):.1f}" stroke="{c}" stroke-dasharray="2,3"/>')
        out.append("</svg>")
        return "\n".join(out) + "\n"

    def save(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.render())


def bar_chart(title, labels, values, xlabel="percent"):
    """Horizontal bars, largest on top."""
    n = len(labels)
    row_h = 28
    height = MARGIN_T + MARGIN_B + row_h * n
    left = 150
    pw = WIDTH - left - MARGIN_R
    vmax = max(max(values), 1e-12)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" '
           f'viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="12">',
           f'<rect width="{WIDTH}" height="{height}" fill="white"/>',
           f'<text x="{WIDTH / 2:.1f}" y="18" text-anchor="middle" font-size="14">'
           f'{escape(title)}</text>']
    for i, (lab, v) in enumerate(zip(labels, values)):
        y = MARGIN_T + i * row_h
        w = pw * v / vmax
        out.append(f'<text x="{left - 8}" y="{y + 17}" text-anchor="end">{escape(lab)}</text>')
        out.append(f'<rect x="{left}" y="{y + 5}" width="{w:.1f}" height="{row_h - 10}" '
                   f'fill="{PALETTE[0]}"/>')
        out.append(f'<text x="{left + w + 4:.1f}" y="{y + 17}">{v:.1f}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 12}" text-anchor="middle">'
               f'{escape(xlabel)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"

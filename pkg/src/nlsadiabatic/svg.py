"""A small dependency-free SVG line/scatter plotter, enough for diagnostic figures."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")
DASHES = {"solid": None, "dashed": "6,4", "dotted": "2,3"}


def _fmt(x):
    return f"{x:.2f}"


def _ticks(lo, hi, n=5):
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** np.floor(np.log10(raw))
    step = min((s * mag for s in (1, 2, 2.5, 5, 10) if s * mag >= raw), default=raw)
    start = np.ceil(lo / step) * step
    return [float(t) for t in np.arange(start, hi + 0.5 * step, step) if lo - 1e-12 <= t <= hi + 1e-12]


@dataclass
class Plot:
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    width: int = 640
    height: int = 440
    margin: tuple = (60, 20, 40, 55)    # left, right, top, bottom
    _items: list = field(default_factory=list)

    def line(self, x, y, color=None, style="solid", width=1.5, label=None):
        self._items.append(("line", np.asarray(x, float), np.asarray(y, float),
                            dict(color=color, style=style, width=width, label=label)))

    def points(self, x, y, color=None, marker="circle", size=4.0, filled=True, label=None):
        self._items.append(("points", np.asarray(x, float), np.asarray(y, float),
                            dict(color=color, marker=marker, size=size, filled=filled, label=label)))

    def _limits(self):
        xs = np.concatenate([it[1][np.isfinite(it[1])] for it in self._items] or [np.zeros(1)])
        ys = np.concatenate([it[2][np.isfinite(it[2])] for it in self._items] or [np.zeros(1)])
        x0, x1 = (float(xs.min()), float(xs.max())) if xs.size else (0.0, 1.0)
        y0, y1 = (float(ys.min()), float(ys.max())) if ys.size else (0.0, 1.0)
        if x1 == x0:
            x0, x1 = x0 - 0.5, x1 + 0.5
        if y1 == y0:
            y0, y1 = y0 - 0.5, y1 + 0.5
        pad = 0.04 * (y1 - y0)
        return x0, x1, y0 - pad, y1 + pad

    def render(self) -> str:
        L, Rm, T, B = self.margin
        W, H = self.width - L - Rm, self.height - T - B
        x0, x1, y0, y1 = self._limits()

        def sx(x):
            return L + (x - x0) / (x1 - x0) * W

        def sy(y):
            return T + H - (y - y0) / (y1 - y0) * H

        out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" '
               f'height="{self.height}" viewBox="0 0 {self.width} {self.height}">',
               f'<rect x="0" y="0" width="{self.width}" height="{self.height}" fill="white"/>',
               f'<rect x="{L}" y="{T}" width="{W}" height="{H}" fill="none" stroke="black"/>']
        for t in _ticks(x0, x1):
            X = _fmt(sx(t))
            out.append(f'<line x1="{X}" y1="{T + H}" x2="{X}" y2="{T + H + 5}" stroke="black"/>')
            out.append(f'<text x="{X}" y="{T + H + 18}" font-size="11" text-anchor="middle">{t:g}</text>')
        for t in _ticks(y0, y1):
            Y = _fmt(sy(t))
            out.append(f'<line x1="{L - 5}" y1="{Y}" x2="{L}" y2="{Y}" stroke="black"/>')
            out.append(f'<text x="{L - 8}" y="{Y}" font-size="11" text-anchor="end" '
                       f'dominant-baseline="middle">{t:.3g}</text>')
        out.append(f'<text x="{L + W / 2}" y="{self.height - 10}" font-size="13" '
                   f'text-anchor="middle">{escape(self.xlabel)}</text>')
        out.append(f'<text x="15" y="{T + H / 2}" font-size="13" text-anchor="middle" '
                   f'transform="rotate(-90 15 {T + H / 2})">{escape(self.ylabel)}</text>')
        if self.title:
            out.append(f'<text x="{L + W / 2}" y="{T - 12}" font-size="14" '
                       f'text-anchor="middle">{escape(self.title)}</text>')
        out.append(f'<clipPath id="frame"><rect x="{L}" y="{T}" width="{W}" height="{H}"/></clipPath>')
        out.append('<g clip-path="url(#frame)">')
        legend = []
        for k, (kind, x, y, opt) in enumerate(self._items):
            color = opt["color"] or PALETTE[k % len(PALETTE)]
            if kind == "line":
                dash = DASHES.get(opt["style"])
                extra = f' stroke-dasharray="{dash}"' if dash else ""
                # break the polyline at non-finite values
                ok = np.isfinite(x) & np.isfinite(y)
                for run in np.split(np.arange(x.size), np.flatnonzero(np.diff(ok.astype(int)) != 0) + 1):
                    run = run[ok[run]]
                    if run.size < 2:
                        continue
                    pts = " ".join(f"{_fmt(sx(a))},{_fmt(sy(b))}" for a, b in zip(x[run], y[run]))
                    out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                               f'stroke-width="{opt["width"]}"{extra}/>')
            else:
                fill = color if opt["filled"] else "white"
                s = opt["size"]
                for a, b in zip(x, y):
                    if not (np.isfinite(a) and np.isfinite(b)):
                        continue
                    X, Y = sx(a), sy(b)
                    if opt["marker"] == "cross":
                        out.append(f'<path d="M{_fmt(X - s)},{_fmt(Y - s)}L{_fmt(X + s)},{_fmt(Y + s)}'
                                   f'M{_fmt(X - s)},{_fmt(Y + s)}L{_fmt(X + s)},{_fmt(Y - s)}" '
                                   f'stroke="{color}" stroke-width="2"/>')
                    elif opt["marker"] == "square":
                        out.append(f'<rect x="{_fmt(X - s)}" y="{_fmt(Y - s)}" width="{2 * s}" '
                                   f'height="{2 * s}" fill="{fill}" stroke="{color}"/>')
                    else:
                        out.append(f'<circle cx="{_fmt(X)}" cy="{_fmt(Y)}" r="{s}" fill="{fill}" '
                                   f'stroke="{color}"/>')
            if opt["label"]:
                legend.append((opt["label"], color))
        out.append("</g>")
        for i, (text, color) in enumerate(legend):
            y = T + 14 + 15 * i
            out.append(f'<rect x="{L + W - 130}" y="{y - 8}" width="10" height="10" fill="{color}"/>')
            out.append(f'<text x="{L + W - 115}" y="{y}" font-size="11">{escape(text)}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"

    def save(self, path):
        Path(path).write_text(self.render())
        return Path(path)

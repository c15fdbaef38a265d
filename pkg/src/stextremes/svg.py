"""Minimal static SVG charts (line and scatter, linear or log axes)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 640, 400
MARGIN = dict(left=80, right=20, top=40, bottom=56)
COLORS = ("#1f5fa8", "#c0392b", "#2e8b57", "#7f7f7f")


@dataclass
class Series:
    x: np.ndarray
    y: np.ndarray
    label: str
    kind: str = "line"  # "line" or "points"


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _tick_label(v: float) -> str:
    if v == 0:
        return "0"
    a = abs(v)
    if a >= 1e4 or a < 1e-2:
        return f"{v:.1e}"
    return f"{v:.3g}"


def _ticks(lo: float, hi: float, log: bool) -> list[float]:
    if log:
        return [10.0**k for k in range(math.floor(lo), math.ceil(hi) + 1)
                if lo - 1e-9 <= k <= hi + 1e-9]
    if hi == lo:
        return [lo]
    raw = (hi - lo) / 5
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    return [start + i * step for i in range(int((hi - start) / step + 1e-9) + 1)]


def _panel(series: list[Series], x0: float, y0: float, w: float, h: float,
           xlabel: str, ylabel: str, logx: bool, logy: bool) -> list[str]:
    def tx(v):
        return np.log10(v) if logx else v

    def ty(v):
        return np.log10(v) if logy else v

    xs, ys = [], []
    for s in series:
        ok = np.isfinite(s.x) & np.isfinite(s.y)
        if logx:
            ok &= s.x > 0
        if logy:
            ok &= s.y > 0
        xs.append(tx(s.x[ok]))
        ys.append(ty(s.y[ok]))
    allx = np.concatenate(xs) if xs else np.empty(0)
    ally = np.concatenate(ys) if ys else np.empty(0)
    xlo, xhi = (float(allx.min()), float(allx.max())) if allx.size else (0.0, 1.0)
    ylo, yhi = (float(ally.min()), float(ally.max())) if ally.size else (0.0, 1.0)
    if xhi == xlo:
        xlo, xhi = xlo - 0.5, xhi + 0.5
    if yhi == ylo:
        ylo, yhi = ylo - 0.5, yhi + 0.5

    def px(v):
        return x0 + (v - xlo) / (xhi - xlo) * w

    def py(v):
        return y0 + h - (v - ylo) / (yhi - ylo) * h

    out = [f'<rect x="{_fmt(x0)}" y="{_fmt(y0)}" width="{_fmt(w)}" height="{_fmt(h)}" '
           'fill="none" stroke="#000"/>']
    for t in _ticks(xlo, xhi, logx):
        p = px(math.log10(t) if logx else t)
        out.append(f'<line x1="{_fmt(p)}" y1="{_fmt(y0 + h)}" x2="{_fmt(p)}" '
                   f'y2="{_fmt(y0 + h + 5)}" stroke="#000"/>')
        out.append(f'<text x="{_fmt(p)}" y="{_fmt(y0 + h + 18)}" font-size="11" '
                   f'text-anchor="middle">{_tick_label(t)}</text>')
    for t in _ticks(ylo, yhi, logy):
        p = py(math.log10(t) if logy else t)
        out.append(f'<line x1="{_fmt(x0 - 5)}" y1="{_fmt(p)}" x2="{_fmt(x0)}" '
                   f'y2="{_fmt(p)}" stroke="#000"/>')
        out.append(f'<text x="{_fmt(x0 - 8)}" y="{_fmt(p + 4)}" font-size="11" '
                   f'text-anchor="end">{_tick_label(t)}</text>')
    out.append(f'<text x="{_fmt(x0 + w / 2)}" y="{_fmt(y0 + h + 38)}" font-size="13" '
               f'text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="{_fmt(x0 - 60)}" y="{_fmt(y0 + h / 2)}" font-size="13" '
               f'text-anchor="middle" transform="rotate(-90 {_fmt(x0 - 60)} '
               f'{_fmt(y0 + h / 2)})">{escape(ylabel)}</text>')
    for i, (s, sx, sy) in enumerate(zip(series, xs, ys)):
        color = COLORS[i % len(COLORS)]
        if s.kind == "points":
            for a, b in zip(sx, sy):
                out.append(f'<circle cx="{_fmt(px(a))}" cy="{_fmt(py(b))}" r="3" fill="{color}"/>')
        elif sx.size:
            pts = " ".join(f"{_fmt(px(a))},{_fmt(py(b))}" for a, b in zip(sx, sy))
            out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        out.append(f'<text x="{_fmt(x0 + w - 8)}" y="{_fmt(y0 + 16 + 15 * i)}" font-size="11" '
                   f'text-anchor="end" fill="{color}">{escape(s.label)}</text>')
    return out


def _document(body: list[str], title: str, height: int) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" '
            f'viewBox="0 0 {WIDTH} {height}" font-family="sans-serif">')
    t = f'<text x="{WIDTH / 2:.1f}" y="24" font-size="15" text-anchor="middle">{escape(title)}</text>'
    return "\n".join([head, t, *body, "</svg>"]) + "\n"


def chart(series: list[Series], title: str, xlabel: str, ylabel: str,
          logx: bool = False, logy: bool = False) -> str:
    w = WIDTH - MARGIN["left"] - MARGIN["right"]
    h = HEIGHT - MARGIN["top"] - MARGIN["bottom"]
    body = _panel(series, MARGIN["left"], MARGIN["top"], w, h, xlabel, ylabel, logx, logy)
    return _document(body, title, HEIGHT)


def stacked(panels: list[tuple[list[Series], str, str, bool, bool]], title: str) -> str:
    """Panels sharing the figure vertically: (series, xlabel, ylabel, logx, logy)."""
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]
    w = WIDTH - MARGIN["left"] - MARGIN["right"]
    body = []
    for i, (series, xl, yl, lx, ly) in enumerate(panels):
        y0 = MARGIN["top"] + i * (ph + MARGIN["bottom"])
        body += _panel(series, MARGIN["left"], y0, w, ph, xl, yl, lx, ly)
    height = MARGIN["top"] + len(panels) * (ph + MARGIN["bottom"])
    return _document(body, title, height)

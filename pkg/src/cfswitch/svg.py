"""Minimal deterministic SVG plotting.

Coordinates are written with a fixed number of decimals and no timestamps or
random ids are emitted, so identical inputs give identical bytes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#7f7f7f")


def _f(x: float) -> str:
    s = f"{x:.2f}"
    return "0.00" if s == "-0.00" else s


def nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if not (math.isfinite(lo) and math.isfinite(hi)):
        return []
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / max(n, 1)
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    first = math.ceil(lo / step - 1e-9) * step
    ticks = []
    k = 0
    while first + k * step <= hi + 1e-9 * step:
        ticks.append(round(first + k * step, 12))
        k += 1
    return ticks


def _label(v: float) -> str:
    if v == 0:
        return "0"
    if abs(v) >= 1e4 or abs(v) < 1e-3:
        return f"{v:.1e}"
    return f"{v:.4g}"


@dataclass
class Panel:
    """One set of axes inside a figure."""
    x0: float
    y0: float
    width: float
    height: float
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    xlim: tuple | None = None
    ylim: tuple | None = None
    items: list = field(default_factory=list)
    legend: list = field(default_factory=list)

    def _bounds(self):
        xs, ys = [], []
        for kind, data, _ in self.items:
            if kind in ("line", "points"):
                x, y = data
                ok = np.isfinite(x) & np.isfinite(y)
                xs.append(x[ok])
                ys.append(y[ok])
            elif kind == "bars":
                edges, counts = data
                xs.append(edges)
                ys.append(np.append(counts, 0.0))
        xs = np.concatenate(xs) if xs else np.array([0.0, 1.0])
        ys = np.concatenate(ys) if ys else np.array([0.0, 1.0])
        if xs.size == 0:
            xs = np.array([0.0, 1.0])
        if ys.size == 0:
            ys = np.array([0.0, 1.0])
        xl = self.xlim or (float(xs.min()), float(xs.max()))
        yl = self.ylim or (float(ys.min()), float(ys.max()))
        if xl[1] <= xl[0]:
            xl = (xl[0] - 0.5, xl[0] + 0.5)
        if yl[1] <= yl[0]:
            yl = (yl[0] - 0.5, yl[0] + 0.5)
        if self.ylim is None:
            pad = 0.05 * (yl[1] - yl[0])
            yl = (yl[0] - pad if yl[0] != 0 else 0.0, yl[1] + pad)
        return xl, yl

    def line(self, x, y, color=PALETTE[0], width=1.2, label=None, dash=None):
        self.items.append(("line", (np.asarray(x, float), np.asarray(y, float)),
                           {"color": color, "width": width, "dash": dash}))
        if label:
            self.legend.append((label, color))

    def points(self, x, y, color=PALETTE[0], r=2.0, label=None):
        self.items.append(("points", (np.asarray(x, float), np.asarray(y, float)),
                           {"color": color, "r": r}))
        if label:
            self.legend.append((label, color))

    def bars(self, edges, counts, color=PALETTE[0]):
        self.items.append(("bars", (np.asarray(edges, float), np.asarray(counts, float)),
                           {"color": color}))

    def render(self) -> list[str]:
        (xa, xb), (ya, yb) = self._bounds()
        L, T, W, H = self.x0, self.y0, self.width, self.height

        def sx(x):
            return L + (np.asarray(x, float) - xa) / (xb - xa) * W

        def sy(y):
            return T + H - (np.asarray(y, float) - ya) / (yb - ya) * H

        out = [f'<g>',
               f'<rect x="{_f(L)}" y="{_f(T)}" width="{_f(W)}" height="{_f(H)}" '
               f'fill="none" stroke="#000" stroke-width="0.8"/>']
        for tx in nice_ticks(xa, xb):
            px = float(sx(tx))
            out.append(f'<line x1="{_f(px)}" y1="{_f(T + H)}" x2="{_f(px)}" y2="{_f(T + H + 4)}" '
                       f'stroke="#000" stroke-width="0.8"/>')
            out.append(f'<text x="{_f(px)}" y="{_f(T + H + 15)}" font-size="10" '
                       f'text-anchor="middle">{_label(tx)}</text>')
        for ty in nice_ticks(ya, yb):
            py = float(sy(ty))
            out.append(f'<line x1="{_f(L - 4)}" y1="{_f(py)}" x2="{_f(L)}" y2="{_f(py)}" '
                       f'stroke="#000" stroke-width="0.8"/>')
            out.append(f'<text x="{_f(L - 6)}" y="{_f(py + 3)}" font-size="10" '
                       f'text-anchor="end">{_label(ty)}</text>')
        out.append(f'<clipPath id="clip{_f(L)}_{_f(T)}"><rect x="{_f(L)}" y="{_f(T)}" '
                   f'width="{_f(W)}" height="{_f(H)}"/></clipPath>')
        out.append(f'<g clip-path="url(#clip{_f(L)}_{_f(T)})">')
        for kind, data, style in self.items:
            if kind == "bars":
                edges, counts = data
                base = float(sy(max(ya, 0.0)))
                for k in range(len(counts)):
                    if counts[k] <= 0:
                        continue
                    xl_, xr_ = float(sx(edges[k])), float(sx(edges[k + 1]))
                    top = float(sy(counts[k]))
                    out.append(f'<rect x="{_f(xl_)}" y="{_f(top)}" width="{_f(xr_ - xl_)}" '
                               f'height="{_f(base - top)}" fill="{style["color"]}" '
                               f'stroke="#fff" stroke-width="0.5" data-count="{int(counts[k])}"/>')
            elif kind == "line":
                x, y = data
                ok = np.isfinite(x) & np.isfinite(y)
                for seg in _runs(ok):
                    pts = " ".join(f"{_f(a)},{_f(b)}" for a, b in zip(sx(x[seg]), sy(y[seg])))
                    dash = f' stroke-dasharray="{style["dash"]}"' if style["dash"] else ""
                    out.append(f'<polyline points="{pts}" fill="none" stroke="{style["color"]}" '
                               f'stroke-width="{style["width"]}"{dash}/>')
            else:
                x, y = data
                ok = np.isfinite(x) & np.isfinite(y)
                for a, b in zip(sx(x[ok]), sy(y[ok])):
                    out.append(f'<circle cx="{_f(a)}" cy="{_f(b)}" r="{style["r"]}" '
                               f'fill="{style["color"]}"/>')
        out.append('</g>')
        if self.title:
            out.append(f'<text x="{_f(L + W / 2)}" y="{_f(T - 8)}" font-size="12" '
                       f'text-anchor="middle">{escape(self.title)}</text>')
        if self.xlabel:
            out.append(f'<text x="{_f(L + W / 2)}" y="{_f(T + H + 32)}" font-size="11" '
                       f'text-anchor="middle">{escape(self.xlabel)}</text>')
        if self.ylabel:
            cx, cy = L - 42, T + H / 2
            out.append(f'<text x="{_f(cx)}" y="{_f(cy)}" font-size="11" text-anchor="middle" '
                       f'transform="rotate(-90 {_f(cx)} {_f(cy)})">{escape(self.ylabel)}</text>')
        for k, (label, color) in enumerate(self.legend):
            ly = T + 12 + 14 * k
            out.append(f'<rect x="{_f(L + W - 110)}" y="{_f(ly - 8)}" width="10" height="10" '
                       f'fill="{color}"/>')
            out.append(f'<text x="{_f(L + W - 96)}" y="{_f(ly + 1)}" font-size="10">'
                       f'{escape(label)}</text>')
        out.append('</g>')
        return out


def _runs(mask: np.ndarray):
    """Slices of consecutive True entries."""
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return []
    breaks = np.flatnonzero(np.diff(idx) > 1)
    starts = np.r_[idx[0], idx[breaks + 1]]
    stops = np.r_[idx[breaks], idx[-1]] + 1
    return [slice(int(a), int(b)) for a, b in zip(starts, stops)]


class Figure:
    def __init__(self, width: float = 640, height: float = 400):
        self.width = width
        self.height = height
        self.panels: list[Panel] = []

    def panel(self, row: int = 0, nrows: int = 1, **kw) -> Panel:
        left, right, top, bottom = 70.0, 20.0, 30.0, 45.0
        cell = self.height / nrows
        p = Panel(left, row * cell + top, self.width - left - right, cell - top - bottom, **kw)
        self.panels.append(p)
        return p

    def to_string(self) -> str:
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(self.width)}" '
                f'height="{_f(self.height)}" viewBox="0 0 {_f(self.width)} {_f(self.height)}" '
                f'font-family="sans-serif">')
        body = [head, f'<rect width="100%" height="100%" fill="#fff"/>']
        for p in self.panels:
            body.extend(p.render())
        body.append("</svg>")
        return "\n".join(body) + "\n"

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_string())
        return path


# ------------------------------------------------------------------ plots

def histogram(values, bins: int = 40, title: str = "", xlabel: str = "interaction intensity"):
    """Histogram figure; returns (figure, counts, edges)."""
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    if v.size == 0:
        raise ValueError("no values to plot")
    hi = float(v.max()) if v.max() > v.min() else float(v.min()) + 1.0
    counts, edges = np.histogram(v, bins=bins, range=(float(v.min()), hi))
    fig = Figure()
    p = fig.panel(title=title or f"{v.size} timesteps", xlabel=xlabel, ylabel="count")
    p.bars(edges, counts)
    return fig, counts, edges


def intensity_profile(t, values, title: str = "", i0: float | None = None, others=None):
    """Intensity over time; ``others`` maps extra labels to series on a second panel."""
    nrows = 2 if others else 1
    fig = Figure(height=300 * nrows)
    p = fig.panel(0, nrows, title=title, xlabel="time [s]", ylabel="intensity")
    p.line(t, values, PALETTE[0], label="intensity")
    if i0 is not None:
        p.line([t[0], t[-1]], [i0, i0], PALETTE[6], dash="4 3", label="threshold")
    if others:
        q = fig.panel(1, nrows, xlabel="time [s]", ylabel="value")
        for k, (label, series) in enumerate(sorted(others.items())):
            q.line(t, series, PALETTE[(k + 1) % len(PALETTE)], label=label)
    return fig


def sample_scatter(t, dx, split: dict, title: str = ""):
    """Spacing over time with the interactive / non-interactive / random picks marked."""
    fig = Figure()
    p = fig.panel(title=title, xlabel="time [s]", ylabel="spacing [m]")
    t = np.asarray(t, float)
    dx = np.asarray(dx, float)
    p.line(t, dx, "#bbbbbb", width=1.0)
    for (name, color) in (("random", PALETTE[2]), ("non_interactive", PALETTE[0]),
                          ("interactive", PALETTE[1])):
        idx = np.asarray(split.get(name, []), dtype=int)
        p.points(t[idx], dx[idx], color, r=2.5, label=name.replace("_", "-"))
    return fig


def sim_panels(t, x_lead, sims: dict, x_human=None, intensity=None, w_int=None, title: str = ""):
    """Two panels: positions relative to an observer moving at the leader's mean
    speed, then intensity (left scale) with the interactive weight rescaled onto it."""
    t = np.asarray(t, float)
    x_lead = np.asarray(x_lead, float)
    v_obs = (x_lead[-1] - x_lead[0]) / (t[-1] - t[0]) if t[-1] > t[0] else 0.0
    obs = x_lead[0] + v_obs * (t - t[0])
    fig = Figure(height=600)
    p = fig.panel(0, 2, title=title, xlabel="time [s]", ylabel="relative position [m]")
    p.line(t, x_lead - obs, "#000000", width=1.6, label="leader")
    if x_human is not None:
        p.line(t, np.asarray(x_human, float) - obs, PALETTE[6], width=1.4, dash="5 3",
               label="human")
    for k, (label, xs) in enumerate(sorted(sims.items())):
        color = PALETTE[k % len(PALETTE)]
        runs = xs if isinstance(xs, list) else [xs]
        for j, x in enumerate(runs):
            x = np.asarray(x, float)
            n = len(x)
            p.line(t[:n], x - obs[:n], color, width=0.8, label=label if j == 0 else None)
    q = fig.panel(1, 2, xlabel="time [s]", ylabel="intensity / weight")
    if intensity is not None:
        q.line(t[:len(intensity)], intensity, PALETTE[0], label="intensity")
    if w_int is not None:
        w = np.asarray(w_int, float)
        scale = np.nanmax(intensity) if intensity is not None and np.any(np.isfinite(intensity)) else 1.0
        q.line(t[:len(w)], w * (scale if scale > 0 else 1.0), PALETTE[1], label="w_int (scaled)")
    return fig

"""Static SVG charts built from plain markup (no plotting dependency)."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 640, 400
MARGIN = dict(left=60, right=20, top=40, bottom=50)
PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
           "#bcbd22", "#17becf")


class _Frame:
    """Maps data coordinates into the plotting rectangle."""

    def __init__(self, xlim, ylim):
        self.x0, self.x1 = xlim
        self.y0, self.y1 = ylim
        if self.x1 == self.x0:
            self.x1 = self.x0 + 1.0
        if self.y1 == self.y0:
            self.y1 = self.y0 + 1.0
        self.left, self.top = MARGIN["left"], MARGIN["top"]
        self.w = WIDTH - MARGIN["left"] - MARGIN["right"]
        self.h = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def x(self, v):
        return self.left + (v - self.x0) / (self.x1 - self.x0) * self.w

    def y(self, v):
        return self.top + self.h - (v - self.y0) / (self.y1 - self.y0) * self.h


def _fmt(v: float) -> str:
    return f"{v:.3g}"


def _document(body: list[str], title: str, xlabel: str, ylabel: str, frame: _Frame, xticks, yticks) -> str:
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>']
    bottom, right = frame.top + frame.h, frame.left + frame.w
    out.append(f'<line x1="{frame.left}" y1="{bottom}" x2="{right}" y2="{bottom}" stroke="black"/>')
    out.append(f'<line x1="{frame.left}" y1="{frame.top}" x2="{frame.left}" y2="{bottom}" stroke="black"/>')
    for t in xticks:
        px = frame.x(t)
        out.append(f'<line x1="{px:.1f}" y1="{bottom}" x2="{px:.1f}" y2="{bottom + 4}" stroke="black"/>')
        out.append(f'<text x="{px:.1f}" y="{bottom + 17}" text-anchor="middle">{_fmt(t)}</text>')
    for t in yticks:
        py = frame.y(t)
        out.append(f'<line x1="{frame.left - 4}" y1="{py:.1f}" x2="{frame.left}" y2="{py:.1f}" stroke="black"/>')
        out.append(f'<text x="{frame.left - 7}" y="{py + 4:.1f}" text-anchor="end">{_fmt(t)}</text>')
    out.append(f'<text x="{frame.left + frame.w / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    cy = frame.top + frame.h / 2
    out.append(f'<text x="16" y="{cy:.1f}" text-anchor="middle" transform="rotate(-90 16 {cy:.1f})">{escape(ylabel)}</text>')
    out.extend(body)
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _legend(entries, frame: _Frame) -> list[str]:
    out = []
    x = frame.left + frame.w - 130
    for i, (label, color) in enumerate(entries):
        y = frame.top + 8 + 16 * i
        out.append(f'<rect x="{x}" y="{y - 9}" width="10" height="10" fill="{color}"/>')
        out.append(f'<text x="{x + 15}" y="{y}">{escape(label)}</text>')
    return out


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    return list(np.linspace(lo, hi, n))


def histogram_svg(edges, counts, title: str = "Mixing coefficients", labels=None) -> str:
    """Side-by-side bars per bin, one colour per phase."""
    edges = np.asarray(edges, dtype=float)
    counts = np.atleast_2d(np.asarray(counts))
    phases = len(counts)
    labels = labels or [f"phase {k + 1}" for k in range(phases)]
    top = max(1, int(counts.max()))
    frame = _Frame((edges[0], edges[-1]), (0, top))
    body = []
    for k in range(phases):
        color = PALETTE[k % len(PALETTE)]
        for b, c in enumerate(counts[k]):
            width = (edges[b + 1] - edges[b]) / phases
            x0 = frame.x(edges[b] + k * width)
            x1 = frame.x(edges[b] + (k + 1) * width)
            y = frame.y(c)
            body.append(f'<rect class="bar" x="{x0:.2f}" y="{y:.2f}" width="{max(x1 - x0 - 0.5, 0.5):.2f}" '
                        f'height="{frame.top + frame.h - y:.2f}" fill="{color}"/>')
    body += _legend([(labels[k], PALETTE[k % len(PALETTE)]) for k in range(phases)], frame)
    return _document(body, title, "lambda", "count", frame, _ticks(edges[0], edges[-1], 6), _ticks(0, top))


def line_chart_svg(x, series: dict[str, tuple], title: str = "Accuracy by layer",
                   xlabel: str = "generator layer", ylabel: str = "test accuracy") -> str:
    """Lines with optional error bars; ``series`` maps a label to ``(y, err)`` (nan points skipped)."""
    x = np.asarray(x, dtype=float)
    ys = [np.asarray(v[0], dtype=float) for v in series.values()]
    errs = [np.asarray(v[1], dtype=float) if v[1] is not None else np.zeros_like(y) for v, y in zip(series.values(), ys)]
    finite = np.concatenate([np.r_[y - np.nan_to_num(e), y + np.nan_to_num(e)] for y, e in zip(ys, errs)]) if ys else np.r_[0.0]
    finite = finite[np.isfinite(finite)]
    lo, hi = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    pad = 0.05 * (hi - lo or 1.0)
    frame = _Frame((float(x.min()), float(x.max())) if x.size else (0, 1), (lo - pad, hi + pad))
    body, legend = [], []
    for i, (label, y, e) in enumerate(zip(series, ys, errs)):
        color = PALETTE[i % len(PALETTE)]
        ok = np.isfinite(y)
        pts = " ".join(f"{frame.x(a):.2f},{frame.y(b):.2f}" for a, b in zip(x[ok], y[ok]))
        if pts:
            body.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>')
        for a, b, s in zip(x[ok], y[ok], np.nan_to_num(e[ok])):
            body.append(f'<circle cx="{frame.x(a):.2f}" cy="{frame.y(b):.2f}" r="3" fill="{color}"/>')
            if s > 0:
                body.append(f'<line x1="{frame.x(a):.2f}" y1="{frame.y(b - s):.2f}" x2="{frame.x(a):.2f}" '
                            f'y2="{frame.y(b + s):.2f}" stroke="{color}"/>')
        legend.append((label, color))
    body += _legend(legend, frame)
    return _document(body, title, xlabel, ylabel, frame, list(x), _ticks(lo - pad, hi + pad))


def scatter_svg(xy, tags, classes, title: str = "Projection", xlabel: str = "x", ylabel: str = "y",
                generated_tag: str = "generated") -> str:
    """Points coloured by class; generated points drawn as black-outlined crosses."""
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    if len(xy):
        lo, hi = xy.min(axis=0), xy.max(axis=0)
    else:
        lo, hi = np.zeros(2), np.ones(2)
    frame = _Frame((lo[0], hi[0]), (lo[1], hi[1]))
    body = []
    for (a, b), tag, c in zip(xy, tags, classes):
        color = PALETTE[int(c) % len(PALETTE)]
        px, py = frame.x(a), frame.y(b)
        if tag == generated_tag:
            body.append(f'<path d="M{px - 3:.2f},{py - 3:.2f}L{px + 3:.2f},{py + 3:.2f}M{px - 3:.2f},{py + 3:.2f}'
                        f'L{px + 3:.2f},{py - 3:.2f}" stroke="black" stroke-width="1.5"/>')
            body.append(f'<circle cx="{px:.2f}" cy="{py:.2f}" r="1.5" fill="{color}"/>')
        else:
            body.append(f'<circle cx="{px:.2f}" cy="{py:.2f}" r="2.5" fill="{color}" fill-opacity="0.7"/>')
    classes_seen = sorted({int(c) for c in classes})
    entries = [(f"class {c}", PALETTE[c % len(PALETTE)]) for c in classes_seen[:8]]
    if generated_tag in tags:
        entries.append(("generated", "black"))
    body += _legend(entries, frame)
    return _document(body, title, xlabel, ylabel, frame, _ticks(lo[0], hi[0]), _ticks(lo[1], hi[1]))

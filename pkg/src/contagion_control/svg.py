"""Minimal deterministic SVG emitters (no charting dependency)."""

from __future__ import annotations

import math


def _fmt(x: float) -> str:
    return f"{x:.3f}"


class _Canvas:
    def __init__(self, width: int, height: int):
        self.width = width
        self.height = height
        self.parts: list[str] = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">',
            f'<rect width="{width}" height="{height}" fill="white"/>',
        ]

    def line(self, x1, y1, x2, y2, color="black", width=1.0, dash=None):
        d = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(
            f'<line x1="{_fmt(x1)}" y1="{_fmt(y1)}" x2="{_fmt(x2)}" y2="{_fmt(y2)}" '
            f'stroke="{color}" stroke-width="{width}"{d}/>'
        )

    def rect(self, x, y, w, h, fill="none", color="black"):
        self.parts.append(
            f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(w)}" height="{_fmt(h)}" '
            f'fill="{fill}" stroke="{color}"/>'
        )

    def text(self, x, y, s, size=11, anchor="middle", color="black"):
        self.parts.append(
            f'<text x="{_fmt(x)}" y="{_fmt(y)}" font-size="{size}" font-family="sans-serif" '
            f'text-anchor="{anchor}" fill="{color}">{s}</text>'
        )

    def circle(self, x, y, r=1.5, color="black"):
        self.parts.append(f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="{r}" fill="{color}"/>')

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def boxplot_svg(
    title: str,
    groups: list[str],
    boxes: list[tuple[float, float, float, float, float]],
    theory_lines: list[float] | None = None,
    theory_global: float | None = None,
) -> str:
    """Stacked five-number boxes per group.

    Each box is (low whisker, box low, mid, box high, high whisker); an
    optional per-group theory tick and a global dashed theory line overlay.
    """
    width, height = 640, 360
    pad_l, pad_r, pad_t, pad_b = 60, 20, 30, 40
    cv = _Canvas(width, height)
    cv.text(width / 2, 18, title, size=13)

    values = [v for box in boxes for v in box]
    if theory_lines:
        values += list(theory_lines)
    if theory_global is not None:
        values.append(theory_global)
    lo = min(values)
    hi = max(values)
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    span = hi - lo
    lo -= 0.08 * span
    hi += 0.08 * span

    def sy(v: float) -> float:
        return pad_t + (hi - v) / (hi - lo) * (height - pad_t - pad_b)

    n = len(groups)
    slot = (width - pad_l - pad_r) / max(n, 1)
    for tick in range(5):
        v = lo + (hi - lo) * tick / 4
        y = sy(v)
        cv.line(pad_l, y, width - pad_r, y, color="#dddddd")
        cv.text(pad_l - 6, y + 4, f"{v:.3g}", size=9, anchor="end")

    if theory_global is not None:
        y = sy(theory_global)
        cv.line(pad_l, y, width - pad_r, y, color="blue", dash="6,4")

    for k, (label, box) in enumerate(zip(groups, boxes)):
        cx = pad_l + (k + 0.5) * slot
        w = 0.5 * slot
        w_lo, b_lo, mid, b_hi, w_hi = box
        cv.line(cx, sy(w_lo), cx, sy(b_lo))
        cv.line(cx, sy(b_hi), cx, sy(w_hi))
        cv.line(cx - w / 4, sy(w_lo), cx + w / 4, sy(w_lo))
        cv.line(cx - w / 4, sy(w_hi), cx + w / 4, sy(w_hi))
        cv.rect(cx - w / 2, sy(b_hi), w, sy(b_lo) - sy(b_hi))
        cv.line(cx - w / 2, sy(mid), cx + w / 2, sy(mid), color="black", width=1.5)
        if theory_lines is not None:
            cv.line(cx - w / 2, sy(theory_lines[k]), cx + w / 2, sy(theory_lines[k]),
                    color="red", width=1.5)
        cv.text(cx, height - pad_b + 16, label, size=10)
    return cv.render()


def loglog_svg(
    title: str, xs: list[float], series: dict[str, list[float]],
    fits: dict[str, tuple[float, float]] | None = None,
) -> str:
    """Log-log scatter of each series against xs, with fitted lines and slopes."""
    width, height = 640, 360
    pad_l, pad_r, pad_t, pad_b = 60, 20, 30, 40
    cv = _Canvas(width, height)
    cv.text(width / 2, 18, title, size=13)

    lx = [math.log10(x) for x in xs]
    ly_all = [math.log10(v) for ys in series.values() for v in ys if v > 0]
    if not ly_all:
        return cv.render()
    x_lo, x_hi = min(lx), max(lx)
    y_lo, y_hi = min(ly_all), max(ly_all)
    if y_hi - y_lo < 1e-12:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    x_span, y_span = x_hi - x_lo, y_hi - y_lo
    x_lo -= 0.05 * x_span
    x_hi += 0.05 * x_span
    y_lo -= 0.08 * y_span
    y_hi += 0.08 * y_span

    def sx(v):
        return pad_l + (v - x_lo) / (x_hi - x_lo) * (width - pad_l - pad_r)

    def sy(v):
        return pad_t + (y_hi - v) / (y_hi - y_lo) * (height - pad_t - pad_b)

    colors = ["black", "red", "blue", "green", "purple", "orange"]
    legend_y = pad_t + 8
    for idx, (name, ys) in enumerate(sorted(series.items())):
        color = colors[idx % len(colors)]
        pts = [(math.log10(x), math.log10(v)) for x, v in zip(xs, ys) if v > 0]
        for px, py in pts:
            cv.circle(sx(px), sy(py), color=color)
        label = name
        if fits and name in fits:
            slope, intercept = fits[name]
            cv.line(sx(x_lo), sy(intercept + slope * x_lo),
                    sx(x_hi), sy(intercept + slope * x_hi), color=color, width=0.8)
            label = f"{name} (slope {slope:.3f})"
        cv.text(width - pad_r - 4, legend_y, label, size=10, anchor="end", color=color)
        legend_y += 14
    cv.text(width / 2, height - 8, "log10 n", size=10)
    return cv.render()


def bars_svg(title: str, labels: list[str], groups: dict[str, list[float]]) -> str:
    """Grouped bars; one bar cluster per label."""
    width, height = 640, 360
    pad_l, pad_r, pad_t, pad_b = 60, 20, 30, 50
    cv = _Canvas(width, height)
    cv.text(width / 2, 18, title, size=13)
    values = [v for vs in groups.values() for v in vs] + [0.0]
    lo, hi = min(values), max(values)
    if hi - lo < 1e-12:
        hi = lo + 1.0
    span = hi - lo
    lo -= 0.05 * span
    hi += 0.1 * span

    def sy(v):
        return pad_t + (hi - v) / (hi - lo) * (height - pad_t - pad_b)

    colors = ["#444444", "#bb3333", "#3355bb", "#33aa55"]
    n = len(labels)
    g = len(groups)
    slot = (width - pad_l - pad_r) / max(n, 1)
    bar_w = slot * 0.8 / max(g, 1)
    names = sorted(groups)
    for gi, name in enumerate(names):
        color = colors[gi % len(colors)]
        cv.text(pad_l + 80 * gi + 40, pad_t + 6, name, size=10, color=color)
        for k, v in enumerate(groups[name]):
            x = pad_l + k * slot + 0.1 * slot + gi * bar_w
            y0, y1 = sy(0.0), sy(v)
            cv.rect(x, min(y0, y1), bar_w * 0.9, abs(y0 - y1), fill=color, color="none")
    y0 = sy(0.0)
    cv.line(pad_l, y0, width - pad_r, y0)
    for k, label in enumerate(labels):
        cv.text(pad_l + (k + 0.5) * slot, height - pad_b + 16, label, size=10)
    return cv.render()

"""Loss-curve SVG rendering (step vs. loss on a log10 y axis)."""

from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape

from .harness import read_csv

WIDTH, HEIGHT = 800, 500
LEFT, RIGHT, TOP, BOTTOM = 70, 190, 30, 50
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


class PlotError(ValueError):
    pass


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def load_series(paths) -> list[tuple[str, list[tuple[int, float]]]]:
    series = []
    for path in paths:
        path = Path(path)
        if not path.is_file():
            raise PlotError(f"{path}: no such file")
        try:
            records = read_csv(path)
        except ValueError as exc:
            raise PlotError(str(exc)) from None
        if not records:
            raise PlotError(f"{path}: no data rows")
        # non-positive or non-finite losses cannot be placed on a log axis
        points = [(r.step, r.loss) for r in records if math.isfinite(r.loss) and r.loss > 0]
        if not points:
            raise PlotError(f"{path}: no finite positive losses to plot")
        series.append((path.stem, points))
    return series


def render_svg(series) -> str:
    steps = [s for _, pts in series for s, _ in pts]
    logs = [math.log10(v) for _, pts in series for _, v in pts]
    x0, x1 = min(steps), max(steps)
    y0, y1 = math.floor(min(logs)), math.ceil(max(logs))
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def px(step):
        return LEFT + (step - x0) / (x1 - x0) * pw

    def py(value):
        return TOP + (y1 - math.log10(value)) / (y1 - y0) * ph

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    step_decades = max(1, (y1 - y0) // 8 + 1)
    for e in range(y0, y1 + 1, step_decades):
        y = _fmt(TOP + (y1 - e) / (y1 - y0) * ph)
        out.append(f'<line x1="{LEFT}" y1="{y}" x2="{LEFT + pw}" y2="{y}" stroke="#dddddd"/>')
        out.append(f'<text x="{LEFT - 6}" y="{y}" font-size="11" text-anchor="end" dominant-baseline="middle">1e{e}</text>')
    for i in range(5):
        step = x0 + (x1 - x0) * i / 4
        x = _fmt(px(step))
        out.append(f'<text x="{x}" y="{TOP + ph + 18}" font-size="11" text-anchor="middle">{round(step)}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.2f}" y="{HEIGHT - 10}" font-size="12" text-anchor="middle">step</text>')
    out.append(
        f'<text x="16" y="{TOP + ph / 2:.2f}" font-size="12" text-anchor="middle" '
        f'transform="rotate(-90 16 {TOP + ph / 2:.2f})">loss</text>'
    )
    for i, (name, pts) in enumerate(series):
        color = COLORS[i % len(COLORS)]
        coords = " ".join(f"{_fmt(px(s))},{_fmt(py(v))}" for s, v in pts)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>')
        ly = TOP + 12 + 18 * i
        lx = LEFT + pw + 12
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 20}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 26}" y="{ly}" font-size="11" dominant-baseline="middle">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def plot_csvs(paths, out_path) -> None:
    if not paths:
        raise PlotError("no CSV files given")
    svg = render_svg(load_series(paths))
    with open(out_path, "w", newline="\n") as fh:
        fh.write(svg)

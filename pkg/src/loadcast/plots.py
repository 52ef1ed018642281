"""Byte-deterministic standalone SVG line charts.

The writer emits fixed-precision coordinates and embeds the plotted
numbers as a plain data table inside a desc element, so a chart is both
a picture and a record. No timestamps or environment-dependent content
appear anywhere, which keeps repeated pipeline runs digest-identical.
"""

from __future__ import annotations

import math
from pathlib import Path

PALETTE = (
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)

WIDTH, HEIGHT = 760, 440
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 64, 160, 40, 48


def _fmt(value: float) -> str:
    return f"{value:.6g}"


def _ticks(lo: float, hi: float, count: int = 6) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = min(s for s in (mag, 2 * mag, 2.5 * mag, 5 * mag, 10 * mag) if s >= raw)
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-12:
        ticks.append(round(t, 10))
        t += step
    return ticks


def line_chart_svg(
    path: str | Path,
    title: str,
    x_label: str,
    y_label: str,
    x_values,
    series: dict[str, list[float]],
) -> None:
    """Write one multi-series line chart with legend and data table."""
    xs = [float(x) for x in x_values]
    finite = [v for values in series.values() for v in values if v == v and math.isfinite(v)]
    y_lo = min(finite) if finite else 0.0
    y_hi = max(finite) if finite else 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo -= pad
    y_hi += pad
    x_lo, x_hi = min(xs), max(xs)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0

    plot_w = WIDTH - MARGIN_L - MARGIN_R
    plot_h = HEIGHT - MARGIN_T - MARGIN_B

    def px(x: float) -> float:
        return MARGIN_L + (x - x_lo) / (x_hi - x_lo) * plot_w

    def py(y: float) -> float:
        return MARGIN_T + (y_hi - y) / (y_hi - y_lo) * plot_h

    lines: list[str] = []
    lines.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">'
    )
    table_rows = [",".join([x_label] + list(series))]
    for idx in range(len(xs)):
        row = [_fmt(xs[idx])] + [_fmt(series[name][idx]) for name in series]
        table_rows.append(",".join(row))
    escaped = "\n".join(table_rows).replace("&", "&amp;").replace("<", "&lt;")
    lines.append(f"<desc>{escaped}</desc>")
    lines.append(f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>')
    lines.append(
        f'<text x="{WIDTH / 2:.1f}" y="24" text-anchor="middle" font-size="15">{title}</text>'
    )

    for tick in _ticks(x_lo, x_hi):
        x = px(tick)
        lines.append(
            f'<line x1="{x:.2f}" y1="{MARGIN_T}" x2="{x:.2f}" y2="{HEIGHT - MARGIN_B}" '
            f'stroke="#dddddd" stroke-width="1"/>'
        )
        lines.append(
            f'<text x="{x:.2f}" y="{HEIGHT - MARGIN_B + 18}" text-anchor="middle" '
            f'font-size="11">{_fmt(tick)}</text>'
        )
    for tick in _ticks(y_lo, y_hi):
        y = py(tick)
        lines.append(
            f'<line x1="{MARGIN_L}" y1="{y:.2f}" x2="{WIDTH - MARGIN_R}" y2="{y:.2f}" '
            f'stroke="#dddddd" stroke-width="1"/>'
        )
        lines.append(
            f'<text x="{MARGIN_L - 8}" y="{y + 4:.2f}" text-anchor="end" '
            f'font-size="11">{_fmt(tick)}</text>'
        )
    lines.append(
        f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{plot_w}" height="{plot_h}" '
        f'fill="none" stroke="#333333"/>'
    )
    lines.append(
        f'<text x="{MARGIN_L + plot_w / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle" '
        f'font-size="12">{x_label}</text>'
    )
    lines.append(
        f'<text x="18" y="{MARGIN_T + plot_h / 2:.1f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 18 {MARGIN_T + plot_h / 2:.1f})">{y_label}</text>'
    )

    for s_idx, (name, values) in enumerate(series.items()):
        color = PALETTE[s_idx % len(PALETTE)]
        points = [
            f"{px(x):.2f},{py(v):.2f}"
            for x, v in zip(xs, values)
            if v == v and math.isfinite(v)
        ]
        if points:
            lines.append(
                f'<polyline points="{" ".join(points)}" fill="none" stroke="{color}" '
                f'stroke-width="2"/>'
            )
        legend_y = MARGIN_T + 16 + 18 * s_idx
        lines.append(
            f'<line x1="{WIDTH - MARGIN_R + 10}" y1="{legend_y - 4}" '
            f'x2="{WIDTH - MARGIN_R + 34}" y2="{legend_y - 4}" stroke="{color}" stroke-width="2"/>'
        )
        lines.append(
            f'<text x="{WIDTH - MARGIN_R + 40}" y="{legend_y}" font-size="11">{name}</text>'
        )

    lines.append("</svg>")
    Path(path).write_text("\n".join(lines) + "\n")

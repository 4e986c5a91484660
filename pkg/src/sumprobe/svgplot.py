"""Minimal self-contained SVG bar charts.

Hand-rolled so report output is byte-identical across runs: no renderer
timestamps, no library version strings, fixed-precision coordinates.
"""

from __future__ import annotations

from typing import Sequence

_PALETTE = ("#4878a8", "#e49444", "#6a9f58", "#d1605e", "#857aab")

_WIDTH = 840
_HEIGHT = 360
_MARGIN_LEFT = 56
_MARGIN_RIGHT = 16
_MARGIN_TOP = 40
_MARGIN_BOTTOM = 64


def _fmt(value: float) -> str:
    return f"{value:.2f}"


def _esc(text: str) -> str:
    return (
        text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
    )


def grouped_bars(
    title: str,
    group_labels: Sequence[str],
    series: Sequence[tuple[str, Sequence[float]]],
) -> str:
    """Grouped bar chart; one bar per (group, series) pair."""
    plot_w = _WIDTH - _MARGIN_LEFT - _MARGIN_RIGHT
    plot_h = _HEIGHT - _MARGIN_TOP - _MARGIN_BOTTOM
    n_groups = max(1, len(group_labels))
    n_series = max(1, len(series))
    top = max(
        [1.0] + [float(v) for _, values in series for v in values]
    )
    group_w = plot_w / n_groups
    bar_w = group_w * 0.8 / n_series

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" '
        f'height="{_HEIGHT}" viewBox="0 0 {_WIDTH} {_HEIGHT}">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
        f'<text x="{_MARGIN_LEFT}" y="20" font-family="sans-serif" '
        f'font-size="14" fill="#222">{_esc(title)}</text>',
    ]
    # axes
    x0 = _MARGIN_LEFT
    y0 = _MARGIN_TOP + plot_h
    parts.append(
        f'<line x1="{x0}" y1="{_MARGIN_TOP}" x2="{x0}" y2="{y0}" '
        f'stroke="#555" stroke-width="1"/>'
    )
    parts.append(
        f'<line x1="{x0}" y1="{y0}" x2="{x0 + plot_w}" y2="{y0}" '
        f'stroke="#555" stroke-width="1"/>'
    )
    # y ticks at 0, 1/2, max
    for frac in (0.0, 0.5, 1.0):
        y = y0 - plot_h * frac
        parts.append(
            f'<text x="{x0 - 6}" y="{_fmt(y + 4)}" text-anchor="end" '
            f'font-family="sans-serif" font-size="10" fill="#555">'
            f"{_fmt(top * frac)}</text>"
        )
    for g, label in enumerate(group_labels):
        gx = x0 + g * group_w
        for s, (_, values) in enumerate(series):
            value = float(values[g]) if g < len(values) else 0.0
            h = plot_h * value / top
            bx = gx + group_w * 0.1 + s * bar_w
            by = y0 - h
            color = _PALETTE[s % len(_PALETTE)]
            parts.append(
                f'<rect x="{_fmt(bx)}" y="{_fmt(by)}" width="{_fmt(bar_w)}" '
                f'height="{_fmt(h)}" fill="{color}"/>'
            )
        parts.append(
            f'<text x="{_fmt(gx + group_w / 2)}" y="{y0 + 14}" '
            f'text-anchor="middle" font-family="sans-serif" font-size="9" '
            f'fill="#333">{_esc(label)}</text>'
        )
    # legend
    lx = x0
    ly = _HEIGHT - 18
    for s, (name, _) in enumerate(series):
        color = _PALETTE[s % len(_PALETTE)]
        parts.append(f'<rect x="{_fmt(lx)}" y="{ly - 9}" width="10" height="10" fill="{color}"/>')
        parts.append(
            f'<text x="{_fmt(lx + 14)}" y="{ly}" font-family="sans-serif" '
            f'font-size="11" fill="#333">{_esc(name)}</text>'
        )
        lx += 14 + 7 * len(name) + 24
    parts.append("</svg>")
    return "\n".join(parts) + "\n"

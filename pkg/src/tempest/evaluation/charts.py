"""Minimal dependency-free SVG charts for the experiment outputs.

Presentation only: nothing downstream reads these files.
"""

from __future__ import annotations

from html import escape
from typing import Sequence

W, H = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 60, 20, 40, 60
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")


def _frame(title: str, y_lo: float, y_hi: float, y_label: str) -> list[str]:
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2:.0f}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>',
        f'<line x1="{LEFT}" y1="{H - BOTTOM}" x2="{W - RIGHT}" y2="{H - BOTTOM}" stroke="black"/>',
        f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{H - BOTTOM}" stroke="black"/>',
        f'<text x="16" y="{H / 2:.0f}" transform="rotate(-90 16 {H / 2:.0f})" text-anchor="middle" '
        f'font-size="12">{escape(y_label)}</text>',
    ]
    for i in range(5):
        v = y_lo + (y_hi - y_lo) * i / 4
        y = _y(v, y_lo, y_hi)
        parts.append(f'<text x="{LEFT - 6}" y="{y + 4:.1f}" text-anchor="end" font-size="11">{v:.2f}</text>')
        parts.append(f'<line x1="{LEFT}" y1="{y:.1f}" x2="{W - RIGHT}" y2="{y:.1f}" stroke="#ddd"/>')
    return parts


def _y(v: float, lo: float, hi: float) -> float:
    span = hi - lo or 1.0
    return H - BOTTOM - (v - lo) / span * (H - TOP - BOTTOM)


def _range(values: Sequence[float]) -> tuple[float, float]:
    lo, hi = min(values), max(values)
    pad = (hi - lo) * 0.1 or 1.0
    return max(0.0, lo - pad), hi + pad


def line_chart(title: str, series: dict[str, tuple[Sequence[str], Sequence[float]]], y_label: str = "RMSE (F)") -> str:
    """One polyline per series; all series share the x labels of the first."""
    values = [v for _, ys in series.values() for v in ys]
    lo, hi = _range(values)
    parts = _frame(title, lo, hi, y_label)
    labels = next(iter(series.values()))[0]
    step = (W - LEFT - RIGHT) / max(len(labels), 1)
    for i, lab in enumerate(labels):
        x = LEFT + step * (i + 0.5)
        parts.append(f'<text x="{x:.1f}" y="{H - BOTTOM + 16}" text-anchor="middle" font-size="11">{escape(lab)}</text>')
    for s, (name, (_, ys)) in enumerate(series.items()):
        color = COLORS[s % len(COLORS)]
        pts = " ".join(f"{LEFT + step * (i + 0.5):.1f},{_y(v, lo, hi):.1f}" for i, v in enumerate(ys))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>')
        for i, v in enumerate(ys):
            parts.append(f'<circle cx="{LEFT + step * (i + 0.5):.1f}" cy="{_y(v, lo, hi):.1f}" r="3" fill="{color}"/>')
        parts.append(
            f'<text x="{W - RIGHT - 4}" y="{TOP + 14 * (s + 1)}" text-anchor="end" font-size="12" '
            f'fill="{color}">{escape(name)}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def bar_chart(title: str, groups: Sequence[str], series: dict[str, Sequence[float]], y_label: str = "RMSE (F)") -> str:
    """Grouped bars: one group per label, one bar per series within it."""
    values = [v for ys in series.values() for v in ys]
    hi = max(values) * 1.1 if values else 1.0
    parts = _frame(title, 0.0, hi, y_label)
    step = (W - LEFT - RIGHT) / max(len(groups), 1)
    bar = step * 0.8 / max(len(series), 1)
    for g, lab in enumerate(groups):
        x0 = LEFT + step * g + step * 0.1
        parts.append(
            f'<text x="{x0 + step * 0.4:.1f}" y="{H - BOTTOM + 16}" text-anchor="middle" font-size="11">{escape(lab)}</text>'
        )
        for s, ys in enumerate(series.values()):
            y = _y(ys[g], 0.0, hi)
            parts.append(
                f'<rect x="{x0 + bar * s:.1f}" y="{y:.1f}" width="{bar:.1f}" height="{H - BOTTOM - y:.1f}" '
                f'fill="{COLORS[s % len(COLORS)]}"/>'
            )
    for s, name in enumerate(series):
        parts.append(
            f'<text x="{W - RIGHT - 4}" y="{TOP + 14 * (s + 1)}" text-anchor="end" font-size="12" '
            f'fill="{COLORS[s % len(COLORS)]}">{escape(name)}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"

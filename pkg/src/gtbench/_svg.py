"""Minimal deterministic SVG emitters for scatter plots and heatmaps."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

_W, _H, _PAD = 360, 360, 40


def _doc(body: list[str], width=_W, height=_H) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">'
    )
    return "\n".join([head, *body, "</svg>", ""])


def scatter(x, y, title: str, xlabel: str, ylabel: str, line=None) -> str:
    """Points with unit-square coordinates; ``line`` is ``(intercept, slope)``."""
    span = _W - 2 * _PAD

    def px(u):
        return _PAD + u * span

    def py(v):
        return _H - _PAD - v * span

    body = [
        f'<rect x="{_PAD}" y="{_PAD}" width="{span}" height="{span}" fill="none" stroke="#444"/>',
        f'<text x="{_W / 2}" y="20" text-anchor="middle">{escape(title)}</text>',
        f'<text x="{_W / 2}" y="{_H - 8}" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="12" y="{_H / 2}" transform="rotate(-90 12 {_H / 2})" text-anchor="middle">{escape(ylabel)}</text>',
    ]
    for u, v in zip(np.asarray(x, float), np.asarray(y, float)):
        body.append(f'<circle cx="{px(u):.2f}" cy="{py(v):.2f}" r="1.8" fill="#1f77b4" fill-opacity="0.6"/>')
    if line is not None:
        a, b = line
        body.append(
            f'<line x1="{px(0):.2f}" y1="{py(a):.2f}" x2="{px(1):.2f}" y2="{py(a + b):.2f}" '
            f'stroke="#d62728" stroke-width="1.5"/>'
        )
    return _doc(body)


def heatmap(grid, row_labels, col_labels, title: str) -> str:
    """Cells shaded by value in ``[0, 1]``; NaN cells are left blank."""
    grid = np.asarray(grid, float)
    nr, nc = grid.shape
    cw, ch = 80, 50
    left, top = 60, 50
    width, height = left + nc * cw + 20, top + nr * ch + 20
    body = [f'<text x="{width / 2}" y="20" text-anchor="middle">{escape(title)}</text>']
    for c, lab in enumerate(col_labels):
        body.append(f'<text x="{left + c * cw + cw / 2}" y="{top - 8}" text-anchor="middle">{escape(lab)}</text>')
    for r, lab in enumerate(row_labels):
        body.append(f'<text x="{left - 8}" y="{top + r * ch + ch / 2 + 4}" text-anchor="end">{escape(lab)}</text>')
        for c in range(nc):
            v = grid[r, c]
            x, y = left + c * cw, top + r * ch
            if np.isnan(v):
                body.append(f'<rect x="{x}" y="{y}" width="{cw}" height="{ch}" fill="white" stroke="#999"/>')
                continue
            shade = int(round(255 * (1 - min(max(v, 0.0), 1.0))))
            body.append(f'<rect x="{x}" y="{y}" width="{cw}" height="{ch}" fill="rgb({shade},{shade},255)" stroke="#999"/>')
            body.append(f'<text x="{x + cw / 2}" y="{y + ch / 2 + 4}" text-anchor="middle">{v:.2f}</text>')
    return _doc(body, width, height)

"""Minimal SVG scatter writer for the 2-D projection; no plotting dependency."""

from __future__ import annotations

from pathlib import Path

import numpy as np

COLORS = {0: "#4c78a8", 1: "#e45756"}


def scatter_svg(points, labels, width: int = 640, height: int = 480, margin: int = 40) -> str:
    pts = np.asarray(points, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if pts.ndim != 2 or pts.shape[1] < 2:
        raise ValueError("need at least two projected coordinates")
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">\n<rect width="100%" height="100%" fill="white"/>\n'
    )
    if pts.shape[0] == 0:
        return head + "</svg>\n"
    lo = pts[:, :2].min(axis=0)
    span = np.maximum(pts[:, :2].max(axis=0) - lo, 1e-12)
    sx = margin + (pts[:, 0] - lo[0]) / span[0] * (width - 2 * margin)
    sy = height - margin - (pts[:, 1] - lo[1]) / span[1] * (height - 2 * margin)
    body = [head]
    # normals first so anomalies are drawn on top
    for cls in (0, 1):
        for x, yy in zip(sx[y == cls], sy[y == cls]):
            body.append(f'<circle cx="{x:.2f}" cy="{yy:.2f}" r="2" fill="{COLORS[cls]}" fill-opacity="0.6"/>\n')
    body.append(f'<text x="{margin}" y="{height - 10}" font-size="12">PC1</text>\n')
    body.append(f'<text x="8" y="{margin - 10}" font-size="12">PC2</text>\n')
    body.append("</svg>\n")
    return "".join(body)


def write_scatter_svg(points, labels, path) -> None:
    Path(path).write_text(scatter_svg(points, labels), encoding="utf-8")

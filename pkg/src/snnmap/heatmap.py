"""Deterministic SVG heatmaps for sweep grids and correlation matrices.

Hand-assembled SVG text: the same values always produce the same bytes,
so regenerating a report from persisted CSV/binary files reproduces the
original images exactly. Linear color scale, min/max annotated next to
the color bar.
"""

import numpy as np

from .util import fmt6

# viridis anchor colors, dark to bright
_ANCHORS = [
    (68, 1, 84), (70, 50, 126), (54, 92, 141), (39, 127, 142),
    (31, 161, 135), (74, 193, 109), (160, 218, 57), (253, 231, 37),
]

_NAN_FILL = "#cccccc"


def _color(frac):
    frac = min(max(float(frac), 0.0), 1.0)
    pos = frac * (len(_ANCHORS) - 1)
    lo = int(pos)
    hi = min(lo + 1, len(_ANCHORS) - 1)
    t = pos - lo
    rgb = [round(a + (b - a) * t) for a, b in zip(_ANCHORS[lo], _ANCHORS[hi])]
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def heatmap_svg(values, x_labels=None, y_labels=None, title="",
                x_title="", y_title="", vmin=None, vmax=None, annotate=None):
    """Render a 2-D array as an SVG string (rows top to bottom).

    NaN cells render grey. ``annotate`` defaults to on for small grids.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError(f"heatmap needs a 2-D array, got shape {values.shape}")
    rows, cols = values.shape
    finite = values[np.isfinite(values)]
    lo = float(finite.min()) if vmin is None and finite.size else (vmin or 0.0)
    hi = float(finite.max()) if vmax is None and finite.size else (vmax if vmax is not None else 1.0)
    span = hi - lo
    if annotate is None:
        annotate = rows <= 12 and cols <= 12

    cell = 40 if max(rows, cols) <= 16 else max(3, 560 // max(rows, cols))
    left, top = 90, 50
    width = left + cols * cell + 110
    height = top + rows * cell + 70

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="monospace" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{left}" y="20" font-size="14">{title}</text>',
    ]
    for r in range(rows):
        for c in range(cols):
            v = values[r, c]
            if not np.isfinite(v):
                fill = _NAN_FILL
            else:
                fill = _color((v - lo) / span) if span > 0 else _color(0.5)
            x, y = left + c * cell, top + r * cell
            parts.append(f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{fill}"/>')
            if annotate and np.isfinite(v):
                tx, ty = x + cell // 2, y + cell // 2 + 4
                parts.append(
                    f'<text x="{tx}" y="{ty}" text-anchor="middle" font-size="9" '
                    f'fill="white">{fmt6(v)}</text>'
                )
    if x_labels is not None and cell >= 14:
        for c, label in enumerate(x_labels):
            x = left + c * cell + cell // 2
            parts.append(
                f'<text x="{x}" y="{top + rows * cell + 16}" text-anchor="middle" '
                f'font-size="10">{label}</text>'
            )
    if y_labels is not None and cell >= 14:
        for r, label in enumerate(y_labels):
            y = top + r * cell + cell // 2 + 4
            parts.append(
                f'<text x="{left - 8}" y="{y}" text-anchor="end" font-size="10">{label}</text>'
            )
    if x_title:
        parts.append(
            f'<text x="{left + cols * cell // 2}" y="{top + rows * cell + 40}" '
            f'text-anchor="middle">{x_title}</text>'
        )
    if y_title:
        cy = top + rows * cell // 2
        parts.append(
            f'<text x="20" y="{cy}" text-anchor="middle" '
            f'transform="rotate(-90 20 {cy})">{y_title}</text>'
        )

    # color bar with annotated endpoints
    bar_x = left + cols * cell + 24
    bar_h = rows * cell
    parts.append('<defs><linearGradient id="scale" x1="0" y1="1" x2="0" y2="0">')
    for i, _ in enumerate(_ANCHORS):
        off = i / (len(_ANCHORS) - 1)
        parts.append(f'<stop offset="{off:.4f}" stop-color="{_color(off)}"/>')
    parts.append("</linearGradient></defs>")
    parts.append(
        f'<rect x="{bar_x}" y="{top}" width="14" height="{bar_h}" fill="url(#scale)"/>'
    )
    parts.append(f'<text x="{bar_x + 20}" y="{top + 10}" font-size="10">{fmt6(hi)}</text>')
    parts.append(f'<text x="{bar_x + 20}" y="{top + bar_h}" font-size="10">{fmt6(lo)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def sweep_heatmap_svg(grid, metric, title):
    """Heatmap of one sweep metric: tau rows (ascending), v_th columns."""
    rows = len(grid.tau_values)
    cols = len(grid.vth_values)
    values = np.full((rows, cols), np.nan)
    for (ti, vi), point in grid.points.items():
        v = getattr(point, metric)
        if point.status == "ok" and v is not None:
            values[ti, vi] = v
    return heatmap_svg(
        values,
        x_labels=[fmt6(v) for v in grid.vth_values],
        y_labels=[fmt6(t) for t in grid.tau_values],
        title=title,
        x_title="voltage threshold v_th",
        y_title="membrane time constant tau",
    )


def corr_heatmap_svg(matrix, title):
    """Correlation-matrix heatmap on a fixed [-1, 1] scale."""
    return heatmap_svg(matrix, title=title, vmin=-1.0, vmax=1.0, annotate=False,
                       x_title="neuron", y_title="neuron")

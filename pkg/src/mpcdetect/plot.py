"""Dependency-free SVG rendering of one detection trace."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

ORIGINAL_COLOR = "#1f77b4"
RECON_COLOR = "#ff7f0e"
PEAK_COLOR = "#d62728"
TRUTH_COLOR = "#2ca02c"


def _fmt(v):
    return f"{v:.2f}"


def render_svg(original, reconstruction, peaks=(), truths=(), title="", width=900, height=360):
    """Overlay original and reconstruction as polylines, detected peaks as red
    circles and ground-truth indices as green vertical lines.

    Output depends only on the inputs, so it is byte-stable.
    """
    original = np.asarray(original, dtype=np.float64)
    reconstruction = np.asarray(reconstruction, dtype=np.float64)
    n = original.size
    margin = 40
    lo = float(min(original.min(), reconstruction.min()))
    hi = float(max(original.max(), reconstruction.max()))
    if hi <= lo:
        hi = lo + 1.0

    def px(i):
        return margin + (width - 2 * margin) * (i / max(n - 1, 1))

    def py(v):
        return height - margin - (height - 2 * margin) * ((v - lo) / (hi - lo))

    def polyline(values, color, cls):
        pts = " ".join(f"{_fmt(px(i))},{_fmt(py(v))}" for i, v in enumerate(values))
        return (f'<polyline class="{cls}" fill="none" stroke="{color}" stroke-width="1" '
                f'points="{pts}"/>')

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<title>{escape(title)}</title>',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    for t in truths:
        x = _fmt(px(t))
        parts.append(f'<line class="truth" x1="{x}" y1="{margin}" x2="{x}" y2="{height - margin}" '
                     f'stroke="{TRUTH_COLOR}" stroke-width="1"/>')
    parts.append(polyline(original, ORIGINAL_COLOR, "original"))
    parts.append(polyline(reconstruction, RECON_COLOR, "reconstruction"))
    for i in peaks:
        parts.append(f'<circle class="peak" cx="{_fmt(px(i))}" cy="{_fmt(py(original[i]))}" r="3" '
                     f'fill="{PEAK_COLOR}"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"

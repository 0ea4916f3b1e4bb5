"""Gray-scale SVG plots of eigenvalue trajectories.

Real axis horizontal, imaginary axis vertical, equal aspect. Every sample's
eigenvalues are dots whose gray level runs from white at the first sample to
black at the last; the initial eigenvalues get red markers and, optionally,
the final ones blue diamonds.
"""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

START_COLOR = "#d62728"
END_COLOR = "#1f3fbf"


def _fmt(x: float) -> str:
    return f"{x:.3f}"


def gray_levels(times) -> np.ndarray:
    """0-255 gray value per sample: 255 (white) at the first time, 0 at the last."""
    t = np.asarray(times, dtype=float)
    span = t[-1] - t[0]
    frac = (t - t[0]) / span if span > 0 else np.ones_like(t)
    return np.rint(255 * (1 - frac)).astype(int)


def trajectory_svg(
    times,
    positions,
    end_markers: bool = False,
    size: int = 600,
    dot_radius: float = 1.6,
    xlim=None,
    ylim=None,
    title: str | None = None,
) -> str:
    """SVG document with ``len(times) * n`` dots plus start (and end) markers.

    ``positions`` has shape (samples, n). Axis limits default to the data
    range padded by 5%, widened so both axes share one scale.
    """
    Z = np.asarray(positions, dtype=complex)
    if Z.ndim == 1:
        Z = Z[None, :]
    times = np.asarray(times, dtype=float)
    if times.size != Z.shape[0]:
        raise ValueError("times and positions disagree on the number of samples")
    x0, x1 = (Z.real.min(), Z.real.max()) if xlim is None else xlim
    y0, y1 = (Z.imag.min(), Z.imag.max()) if ylim is None else ylim
    w = max(x1 - x0, y1 - y0, 1e-12) * 1.1
    cx, cy = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
    scale = size / w

    def px(z):
        return size / 2 + (z.real - cx) * scale, size / 2 - (z.imag - cy) * scale

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
    ]
    if title:
        out.append(f"<title>{escape(title)}</title>")
    out.append(f'<rect width="{size}" height="{size}" fill="#ffffff" stroke="#888888"/>')
    # axes through the origin when visible
    ox, oy = px(0j)
    if 0 <= oy <= size:
        out.append(f'<line class="axis" x1="0" y1="{_fmt(oy)}" x2="{size}" y2="{_fmt(oy)}" stroke="#bbbbbb"/>')
    if 0 <= ox <= size:
        out.append(f'<line class="axis" x1="{_fmt(ox)}" y1="0" x2="{_fmt(ox)}" y2="{size}" stroke="#bbbbbb"/>')

    levels = gray_levels(times)
    for s in range(Z.shape[0]):
        g = levels[s]
        fill = f"#{g:02x}{g:02x}{g:02x}"
        for z in Z[s]:
            x, y = px(z)
            out.append(
                f'<circle class="dot" cx="{_fmt(x)}" cy="{_fmt(y)}" r="{dot_radius}" '
                f'fill="{fill}" stroke="#999999" stroke-width="0.2"/>'
            )
    for z in Z[0]:
        x, y = px(z)
        out.append(f'<circle class="start" cx="{_fmt(x)}" cy="{_fmt(y)}" r="{dot_radius * 2}" fill="{START_COLOR}"/>')
    if end_markers:
        d = dot_radius * 2.5
        for z in Z[-1]:
            x, y = px(z)
            pts = f"{_fmt(x)},{_fmt(y - d)} {_fmt(x + d)},{_fmt(y)} {_fmt(x)},{_fmt(y + d)} {_fmt(x - d)},{_fmt(y)}"
            out.append(f'<polygon class="end" points="{pts}" fill="none" stroke="{END_COLOR}" stroke-width="1"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(path, *args, **kwargs) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(trajectory_svg(*args, **kwargs))

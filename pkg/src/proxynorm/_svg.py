"""Hermetic SVG 1.1 writer for the power charts.

Stacked areas (the four power terms against depth) with optional line
overlays, emitted as a plain string with no charting dependency. Output
is deterministic: coordinates are formatted to fixed precision and
nothing date- or environment-dependent is written.
"""

from __future__ import annotations

import numpy as np

BAND_COLORS = ("#4878a8", "#e49444", "#5aa469", "#d1605e", "#937860", "#8172b3")
OVERLAY_COLORS = ("#222222", "#777777")
_AXIS = "#444444"
_FONT = 'font-family="Helvetica, Arial, sans-serif"'


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _esc(text: str) -> str:
    return (
        str(text)
        .replace("&", "&amp;")
        .replace("<", "&lt;")
        .replace(">", "&gt;")
        .replace('"', "&quot;")
    )


def _x_ticks(x):
    step = max(1, len(x) // 6)
    ticks = list(x[::step])
    if ticks[-1] != x[-1]:
        ticks.append(x[-1])
    return ticks


def stacked_area_chart(
    x,
    bands,
    band_labels,
    overlays=(),
    overlay_labels=(),
    title="",
    x_label="layer",
    y_label="power",
    width=640,
    height=420,
    y_max=None,
) -> str:
    """Render cumulative stacked areas over a shared x axis.

    bands are stacked bottom-up in the given order; overlays are drawn
    as polylines on the same y scale.
    """
    x = np.asarray(x, dtype=np.float64)
    bands = [np.asarray(b, dtype=np.float64) for b in bands]
    overlays = [np.asarray(o, dtype=np.float64) for o in overlays]
    if not bands:
        raise ValueError("need at least one band")
    for arr in bands + overlays:
        if arr.shape != x.shape:
            raise ValueError("every series must match the x grid")
    if len(band_labels) != len(bands) or len(overlay_labels) != len(overlays):
        raise ValueError("labels must match series")

    top = np.cumsum(np.vstack(bands), axis=0)
    if y_max is None:
        peak = max([top[-1].max()] + [o.max() for o in overlays] + [1.0])
        y_max = 1.05 * peak
    ml, mr, mt, mb = 52, 150, 34, 40
    px0, px1 = ml, width - mr
    py0, py1 = height - mb, mt

    def sx(v):
        if x[-1] == x[0]:
            return (px0 + px1) / 2.0
        return px0 + (v - x[0]) / (x[-1] - x[0]) * (px1 - px0)

    def sy(v):
        return py0 + (v / y_max) * (py1 - py0)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="#ffffff"/>',
    ]
    if title:
        out.append(
            f'<text x="{(px0 + px1) / 2:.0f}" y="20" text-anchor="middle" '
            f'{_FONT} font-size="14">{_esc(title)}</text>'
        )

    # bands, bottom-up; each polygon runs along its upper boundary and
    # back along the one below it
    zero = np.zeros_like(x)
    for i, upper in enumerate(top):
        lower = zero if i == 0 else top[i - 1]
        pts = [f"{_fmt(sx(a))},{_fmt(sy(b))}" for a, b in zip(x, upper)]
        pts += [f"{_fmt(sx(a))},{_fmt(sy(b))}" for a, b in zip(x[::-1], lower[::-1])]
        color = BAND_COLORS[i % len(BAND_COLORS)]
        out.append(
            f'<polygon class="band" points="{" ".join(pts)}" fill="{color}" '
            f'fill-opacity="0.85" stroke="none"/>'
        )

    for i, line in enumerate(overlays):
        pts = " ".join(f"{_fmt(sx(a))},{_fmt(sy(b))}" for a, b in zip(x, line))
        color = OVERLAY_COLORS[i % len(OVERLAY_COLORS)]
        dash = "" if i == 0 else ' stroke-dasharray="5,3"'
        out.append(
            f'<polyline class="overlay" points="{pts}" fill="none" '
            f'stroke="{color}" stroke-width="1.5"{dash}/>'
        )

    # axes and ticks
    out.append(
        f'<line x1="{px0}" y1="{py0}" x2="{px1}" y2="{py0}" '
        f'stroke="{_AXIS}" stroke-width="1"/>'
    )
    out.append(
        f'<line x1="{px0}" y1="{py0}" x2="{px0}" y2="{py1}" '
        f'stroke="{_AXIS}" stroke-width="1"/>'
    )
    for tx in _x_ticks(x):
        out.append(
            f'<line x1="{_fmt(sx(tx))}" y1="{py0}" x2="{_fmt(sx(tx))}" '
            f'y2="{py0 + 4}" stroke="{_AXIS}"/>'
        )
        out.append(
            f'<text x="{_fmt(sx(tx))}" y="{py0 + 16}" text-anchor="middle" '
            f'{_FONT} font-size="10">{tx:g}</text>'
        )
    n_yticks = 4
    for i in range(n_yticks + 1):
        ty = y_max * i / n_yticks
        out.append(
            f'<line x1="{px0 - 4}" y1="{_fmt(sy(ty))}" x2="{px0}" '
            f'y2="{_fmt(sy(ty))}" stroke="{_AXIS}"/>'
        )
        out.append(
            f'<text x="{px0 - 7}" y="{_fmt(sy(ty) + 3)}" text-anchor="end" '
            f'{_FONT} font-size="10">{ty:.2f}</text>'
        )
    out.append(
        f'<text x="{(px0 + px1) / 2:.0f}" y="{height - 8}" text-anchor="middle" '
        f'{_FONT} font-size="11">{_esc(x_label)}</text>'
    )
    out.append(
        f'<text x="14" y="{(py0 + py1) / 2:.0f}" text-anchor="middle" {_FONT} '
        f'font-size="11" transform="rotate(-90 14 {(py0 + py1) / 2:.0f})">'
        f"{_esc(y_label)}</text>"
    )

    # legend, one row per series
    lx, ly = width - mr + 12, mt + 6
    for i, label in enumerate(band_labels):
        color = BAND_COLORS[i % len(BAND_COLORS)]
        out.append(
            f'<rect x="{lx}" y="{ly - 9}" width="10" height="10" fill="{color}"/>'
        )
        out.append(
            f'<text x="{lx + 15}" y="{ly}" {_FONT} font-size="11">{_esc(label)}</text>'
        )
        ly += 16
    for i, label in enumerate(overlay_labels):
        color = OVERLAY_COLORS[i % len(OVERLAY_COLORS)]
        dash = "" if i == 0 else ' stroke-dasharray="5,3"'
        out.append(
            f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 10}" y2="{ly - 4}" '
            f'stroke="{color}" stroke-width="1.5"{dash}/>'
        )
        out.append(
            f'<text x="{lx + 15}" y="{ly}" {_FONT} font-size="11">{_esc(label)}</text>'
        )
        ly += 16

    out.append("</svg>")
    return "\n".join(out) + "\n"

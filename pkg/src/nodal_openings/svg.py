"""Deterministic SVG rendering of an eigenfunction and its nodal set.

Filled bands come from a raster of the P1 field (one ``rect`` per run of
equal-colour pixels in a row), so output size stays moderate and identical
inputs give identical bytes.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import boundary_polyline
from .mesh import interpolate_field
from .nodal import NodalSet, Window

# diverging palette, negative (blue) to positive (red)
_PALETTE = ("#2166ac", "#4393c3", "#92c5de", "#d1e5f0", "#fddbc7", "#f4a582", "#d6604d",
            "#b2182b")


@dataclass(frozen=True)
class RenderOptions:
    width: int = 800
    raster_rows: int = 160
    bands: int = 8
    zoom: Window | None = None
    line_width: float = 1.5
    show_outline: bool = True


def _fmt(v: float) -> str:
    return f"{v:.3f}".rstrip("0").rstrip(".")


def _band_index(vals, bands):
    # symmetric levels about zero so the sign change aligns with a band edge
    edges = np.linspace(-1.0, 1.0, bands + 1)
    idx = np.clip(np.searchsorted(edges, vals, side="right") - 1, 0, bands - 1)
    return idx


def _palette(bands):
    if bands == len(_PALETTE):
        return _PALETTE
    pos = np.linspace(0, len(_PALETTE) - 1, bands).round().astype(int)
    return tuple(_PALETTE[i] for i in pos)


def render_svg(solution, nodal: NodalSet, path, options: RenderOptions | None = None,
               mesh=None) -> Path:
    """Write an SVG of ``solution`` with ``nodal`` overdrawn.

    Parameters
    ----------
    solution : EigenSolution or NodalField
    nodal : NodalSet
        Traced from the same field and mesh.
    path : path-like
    options : RenderOptions, optional
        ``zoom`` restricts the view to a window (e.g. around ``(N/2, 1/2)``).
    """
    opt = options or RenderOptions()
    fld = solution.field if hasattr(solution, "field") else solution
    mesh = mesh or fld.mesh
    if nodal.mesh is not mesh:
        raise ValueError("nodal set and field live on different meshes")
    spec = mesh.spec
    xmin = float(min(0.0, mesh.nodes[:, 0].min()))
    win = opt.zoom or Window(xmin, spec.N, 0.0, 1.0)
    wx, wy = win.x_hi - win.x_lo, win.y_hi - win.y_lo
    W = opt.width
    H = max(1, int(round(W * wy / wx)))
    sx = W / wx

    def tx(x):
        return (np.asarray(x) - win.x_lo) * sx

    def ty(y):
        return (win.y_hi - np.asarray(y)) * sx

    rows = opt.raster_rows
    cols = max(1, int(round(rows * wx / wy)))
    xs = win.x_lo + (np.arange(cols) + 0.5) * wx / cols
    ys = win.y_hi - (np.arange(rows) + 0.5) * wy / rows
    X, Y = np.meshgrid(xs, ys)
    vals = interpolate_field(fld, np.column_stack([X.ravel(), Y.ravel()]), fill_value=np.nan,
                             strict=True).reshape(X.shape)
    vmax = float(np.max(np.abs(fld.values))) or 1.0
    band = _band_index(np.nan_to_num(vals / vmax), opt.bands)
    band[np.isnan(vals)] = -1
    colors = _palette(opt.bands)
    pw, ph = W / cols, H / rows

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
           f'viewBox="0 0 {W} {H}">',
           f'<rect width="{W}" height="{H}" fill="#ffffff"/>', '<g shape-rendering="crispEdges">']
    for r in range(rows):
        b = band[r]
        start = 0
        for c in range(1, cols + 1):
            if c == cols or b[c] != b[start]:
                if b[start] >= 0:
                    out.append(f'<rect x="{_fmt(start * pw)}" y="{_fmt(r * ph)}" '
                               f'width="{_fmt((c - start) * pw)}" height="{_fmt(ph)}" '
                               f'fill="{colors[b[start]]}"/>')
                start = c
    out.append("</g>")
    if opt.show_outline:
        poly = boundary_polyline(spec, step=min(0.01, 1.0 / rows))
        pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(tx(poly[:, 0]), ty(poly[:, 1])))
        out.append(f'<polygon points="{pts}" fill="none" stroke="#333333" stroke-width="1"/>')
    for i, br in enumerate(nodal.branches):
        P = br.points
        pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(tx(P[:, 0]), ty(P[:, 1])))
        tag = "polygon" if br.closed else "polyline"
        out.append(f'<{tag} id="branch{i}" points="{pts}" fill="none" stroke="#000000" '
                   f'stroke-width="{_fmt(opt.line_width)}"/>')
    out.append("</svg>")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(out) + "\n", encoding="ascii")
    return path

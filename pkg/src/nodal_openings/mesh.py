"""Boundary-fitted structured triangulation of the perturbed rectangle.

Nodes sit on a logical ``n_x * n_y`` grid ``(xi_i, y_j)`` with ``xi`` uniform
on ``[0, N]`` and ``y`` uniform on ``[0, 1]``. Only a blend layer of
width ``L = min(1, N/4)`` next to the left side is deformed:

    x = xi + eta * phi(y) * (1 - xi / L)    for xi < L,
    x = xi                                   otherwise,

so the rest of the domain, including the centre, is an exactly uniform grid.
Node ``(i, j)`` has flat index ``i * n_y + j``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError, GeometryError
from .geometry import DomainSpec

MIN_NY = 17
_LOCATE_TOL = 1e-9
_MIN_BLEND_STRETCH = 0.1


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangulation of a :class:`DomainSpec`.

    Attributes
    ----------
    nodes : ndarray, shape (n, 2)
    triangles : ndarray, shape (t, 3)
        Counterclockwise node triples. Cell ``c = i*(n_y-1) + j`` owns
        triangles ``c`` and ``c + n_cells``.
    boundary_mask : ndarray of bool, shape (n,)
    logical_dims : (int, int)
    h : float
        Largest triangle circumdiameter.
    """

    spec: DomainSpec
    nodes: np.ndarray
    triangles: np.ndarray
    boundary_mask: np.ndarray
    logical_dims: tuple[int, int]
    h: float
    h_edge: float
    blend: float
    xi: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    left_x: np.ndarray = field(repr=False)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_cells(self) -> int:
        nx, ny = self.logical_dims
        return (nx - 1) * (ny - 1)

    def grid(self, values) -> np.ndarray:
        """View nodal values as an ``(n_x, n_y)`` array."""
        return np.asarray(values).reshape(self.logical_dims)

    def sample(self, f) -> "NodalField":
        """Nodal interpolant of ``f(x, y)``."""
        return NodalField(np.asarray(f(self.nodes[:, 0], self.nodes[:, 1]), dtype=float), self)

    def triangle_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


@dataclass(frozen=True, eq=False)
class NodalField:
    """One scalar per mesh node."""

    values: np.ndarray
    mesh: Mesh

    def __post_init__(self):
        if self.values.shape != (self.mesh.n_nodes,):
            raise ValueError("field length does not match node count")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    def __call__(self, x, y):
        return interpolate_field(self, np.column_stack([np.ravel(x), np.ravel(y)]))

    def scaled(self, s: float) -> "NodalField":
        return NodalField(self.values * s, self.mesh)


def default_nx(N: float, n_y: int) -> int:
    """Columns giving square cells, forced odd so that ``x = N/2`` is a grid line."""
    nx = int(round(N * (n_y - 1))) + 1
    if (nx - 1) % 2:
        nx += 1
    return nx


def build_mesh(spec: DomainSpec, n_y: int, n_x: int | None = None) -> Mesh:
    """Mesh ``spec`` with ``n_y`` node rows.

    Parameters
    ----------
    spec : DomainSpec
    n_y : int
        Vertical node count, at least 17. Odd values put a node row on
        ``y = 1/2``.
    n_x : int, optional
        Horizontal node count; by default chosen for square cells.
    """
    if n_y < MIN_NY:
        raise ValueError(f"n_y must be >= {MIN_NY}, got {n_y}")
    N, eta = spec.N, spec.eta
    nx = default_nx(N, n_y) if n_x is None else int(n_x)
    if nx < 3:
        raise ValueError("n_x must be >= 3")
    L = min(1.0, N / 4)
    xi = np.linspace(0.0, N, nx)
    y = np.linspace(0.0, 1.0, n_y)
    P = np.asarray(spec.left(y), dtype=float)
    if eta > 0 and np.max(P) >= L * (1 - _MIN_BLEND_STRETCH):
        raise GeometryError(
            f"perturbation {np.max(P):.3g} too large for blend layer of width {L:.3g}")
    XI, Y = np.meshgrid(xi, y, indexing="ij")
    X = np.where(XI < L, XI + P[None, :] * (1 - XI / L), XI)
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    idx = np.arange(nx * n_y).reshape(nx, n_y)
    a, b = idx[:-1, :-1], idx[1:, :-1]
    c, d = idx[1:, 1:], idx[:-1, 1:]
    # shorter diagonal; ties follow a pattern radiating from the centre so the
    # mesh is mirror symmetric about x = N/2 and y = 1/2
    left_half = (np.arange(nx - 1) + 0.5 < (nx - 1) / 2)[:, None]
    low_half = (np.arange(n_y - 1) + 0.5 < (n_y - 1) / 2)[None, :]
    slash = left_half == low_half
    d_ac = np.linalg.norm(nodes[a] - nodes[c], axis=-1)
    d_bd = np.linalg.norm(nodes[b] - nodes[d], axis=-1)
    tie = np.abs(d_ac - d_bd) <= 1e-9 * np.maximum(d_ac, d_bd)
    use_ac = np.where(tie, slash, d_ac < d_bd)
    t1 = np.where(use_ac[..., None], np.stack([a, b, c], -1), np.stack([a, b, d], -1))
    t2 = np.where(use_ac[..., None], np.stack([a, c, d], -1), np.stack([b, c, d], -1))
    tris = np.concatenate([t1.reshape(-1, 3), t2.reshape(-1, 3)])

    bnd = np.zeros((nx, n_y), dtype=bool)
    bnd[0, :] = bnd[-1, :] = bnd[:, 0] = bnd[:, -1] = True

    p = nodes[tris]
    e = [p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]]
    det = e[0][:, 0] * (-e[2][:, 1]) - e[0][:, 1] * (-e[2][:, 0])
    if np.any(det <= 0):
        raise GeometryError("degenerate or inverted element")
    lens = np.stack([np.linalg.norm(v, axis=1) for v in e], axis=1)
    circ = np.prod(lens, axis=1) / det  # 2R = abc / (2*area)
    return Mesh(spec=spec, nodes=nodes, triangles=tris, boundary_mask=bnd.ravel(),
                logical_dims=(nx, n_y), h=float(circ.max()), h_edge=float(lens.max()),
                blend=L, xi=xi, y=y, left_x=P)


def min_angle(mesh: Mesh) -> float:
    """Smallest interior angle over all triangles, in degrees."""
    p = mesh.nodes[mesh.triangles]
    out = np.inf
    for k in range(3):
        u = p[:, (k + 1) % 3] - p[:, k]
        v = p[:, (k + 2) % 3] - p[:, k]
        cosang = np.sum(u * v, axis=1) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
        out = min(out, float(np.degrees(np.arccos(np.clip(cosang, -1, 1))).min()))
    return out


def _barycentric(mesh: Mesh, tri, pts):
    p = mesh.nodes[mesh.triangles[tri]]
    v0 = p[:, 1] - p[:, 0]
    v1 = p[:, 2] - p[:, 0]
    w = pts - p[:, 0]
    det = v0[:, 0] * v1[:, 1] - v0[:, 1] * v1[:, 0]
    l1 = (w[:, 0] * v1[:, 1] - w[:, 1] * v1[:, 0]) / det
    l2 = (v0[:, 0] * w[:, 1] - v0[:, 1] * w[:, 0]) / det
    return np.column_stack([1 - l1 - l2, l1, l2])


def locate(mesh: Mesh, pts, tol: float = _LOCATE_TOL, strict: bool = False):
    """Containing triangle and barycentric coordinates for each point.

    The cell is found by inverting the mesh map row by row: inside row
    strip ``j`` the left mesh edge is linear in ``y``, so ``xi`` follows in
    closed form. Points of the true domain that fall in the thin sliver
    between the curved boundary and the mesh's chordal left edge are mapped
    to the adjacent boundary triangle (mild extrapolation).

    With ``strict=True`` those sliver points count as outside, so only the
    triangulated region is used.

    Returns
    -------
    tri : ndarray of int
        Triangle index, ``-1`` for points outside the domain.
    bary : ndarray, shape (m, 3)
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    x, y = pts[:, 0], pts[:, 1]
    nx, ny = mesh.logical_dims
    spec = mesh.spec
    dy = 1.0 / (ny - 1)
    dxi = spec.N / (nx - 1)
    inside = (y >= -tol) & (y <= 1 + tol) & (x <= spec.N + tol) & np.isfinite(x) & np.isfinite(y)
    yc = np.clip(y, 0.0, 1.0)
    j = np.clip(np.floor(yc / dy).astype(int), 0, ny - 2)
    t = yc / dy - j
    P = (1 - t) * mesh.left_x[j] + t * mesh.left_x[j + 1]
    if strict:
        inside &= x >= P - tol
    elif spec.eta > 0:
        true_left = np.asarray(spec.left(yc), dtype=float)
        inside &= x >= np.minimum(true_left, P) - tol
    L = mesh.blend
    xi = np.where(x >= L, x, (x - P) / (1 - P / L))
    i = np.clip(np.floor(xi / dxi).astype(int), 0, nx - 2)
    cell = i * (ny - 1) + j
    tri = np.where(inside, cell, -1)
    bary = np.zeros((len(pts), 3))
    ok = tri >= 0
    if np.any(ok):
        c = cell[ok]
        b1 = _barycentric(mesh, c, pts[ok])
        b2 = _barycentric(mesh, c + mesh.n_cells, pts[ok])
        second = b2.min(axis=1) > b1.min(axis=1)
        bary[ok] = np.where(second[:, None], b2, b1)
        tri[np.flatnonzero(ok)[second]] += mesh.n_cells
    return tri, bary


def locate_bruteforce(mesh: Mesh, pts, tol: float = _LOCATE_TOL):
    """Reference point location by scanning every triangle."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    out = np.full(len(pts), -1)
    for k, q in enumerate(pts):
        b = _barycentric(mesh, np.arange(len(mesh.triangles)),
                         np.broadcast_to(q, (len(mesh.triangles), 2)))
        m = b.min(axis=1)
        best = int(np.argmax(m))
        if m[best] >= -tol:
            out[k] = best
    return out


def interpolate_field(field: NodalField, pts, fill_value: float | None = None,
                      strict: bool = False):
    """Piecewise-linear value of ``field`` at one point or an array of points.

    Raises
    ------
    DomainError
        If a point lies outside the domain and ``fill_value`` is None.
    """
    scalar = np.ndim(pts) == 1
    tri, bary = locate(field.mesh, pts, strict=strict)
    out = np.einsum("ij,ij->i", bary, field.values[field.mesh.triangles[np.maximum(tri, 0)]])
    if np.any(tri < 0):
        if fill_value is None:
            bad = np.atleast_2d(pts)[tri < 0][0]
            raise DomainError(f"point ({bad[0]:.6g}, {bad[1]:.6g}) outside the domain")
        out[tri < 0] = fill_value
    return float(out[0]) if scalar else out


def field_gradient(field: NodalField, p) -> np.ndarray:
    """Recovered gradient at ``p``.

    Least-squares quadratic fit to the nodal values on the 4x4 node patch
    around the containing cell, differentiated at ``p``. Reproduces
    quadratics exactly, so the recovered gradient is O(h^2) accurate.
    """
    mesh = field.mesh
    p = np.asarray(p, dtype=float)
    tri, _ = locate(mesh, p[None, :])
    if tri[0] < 0:
        raise DomainError(f"point ({p[0]:.6g}, {p[1]:.6g}) outside the domain")
    nx, ny = mesh.logical_dims
    cell = int(tri[0]) % mesh.n_cells
    i0, j0 = divmod(cell, ny - 1)
    ii = np.arange(max(i0 - 1, 0), min(i0 + 3, nx))
    jj = np.arange(max(j0 - 1, 0), min(j0 + 3, ny))
    idx = (ii[:, None] * ny + jj[None, :]).ravel()
    d = mesh.nodes[idx] - p
    scale = float(np.max(np.abs(d))) or 1.0
    u, w = d[:, 0] / scale, d[:, 1] / scale
    A = np.column_stack([np.ones_like(u), u, w, u * u, u * w, w * w])
    coef, *_ = np.linalg.lstsq(A, field.values[idx], rcond=None)
    return np.array([coef[1], coef[2]]) / scale


def write_mesh(mesh: Mesh, path, values=None) -> Path:
    """Write the plain-text mesh dump.

    Format: a header line ``nodes <n> triangles <t>``, then ``n`` rows
    ``x y`` (or ``x y v`` when ``values`` is given), then ``t`` rows of
    zero-based node indices ``i j k``.
    """
    path = Path(path)
    with path.open("w", encoding="ascii") as fh:
        fh.write(f"nodes {mesh.n_nodes} triangles {len(mesh.triangles)}\n")
        cols = mesh.nodes if values is None else np.column_stack([mesh.nodes, values])
        np.savetxt(fh, cols, fmt="%.17g")
        np.savetxt(fh, mesh.triangles, fmt="%d")
    return path


def read_mesh_dump(path):
    """Inverse of :func:`write_mesh`: ``(nodes, triangles, values or None)``."""
    with Path(path).open(encoding="ascii") as fh:
        head = fh.readline().split()
        if len(head) != 4 or head[0] != "nodes" or head[2] != "triangles":
            raise ValueError("not a mesh dump")
        n, t = int(head[1]), int(head[3])
        rows = np.loadtxt(fh, max_rows=n, ndmin=2)
        tris = np.loadtxt(fh, max_rows=t, dtype=int, ndmin=2)
    values = rows[:, 2] if rows.shape[1] > 2 else None
    return rows[:, :2], tris, values


def circumdiameter_for(N: float, n_y: int) -> float:
    """Circumdiameter of the uniform (unperturbed) cells for given ``N, n_y``."""
    nx = default_nx(N, n_y)
    return math.hypot(N / (nx - 1), 1.0 / (n_y - 1))


def ny_for_h(N: float, h: float) -> int:
    """Smallest odd ``n_y`` whose uniform cells have circumdiameter <= ``h``."""
    n = max(MIN_NY, int(math.ceil(math.sqrt(2) / h)) + 1)
    if n % 2 == 0:
        n += 1
    while circumdiameter_for(N, n) > h:
        n += 2
    return n

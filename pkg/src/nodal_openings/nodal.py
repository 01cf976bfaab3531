"""Nodal set extraction, opening gap, local hyperbola fits and envelope checks.

The zero set is traced on the P1 interpolant. Before tracing, interior nodes
with ``|v| < 1e-13 max|v|`` are nudged to ``+1e-13 max|v|`` and every
Dirichlet node takes ``1e-12`` times the value at its inward grid neighbour,
so nodal lines terminate on boundary edges where the normal derivative
changes sign. Topology questions (crossings, nodal domains) use the
unmodified field with the tolerance ``eps = 1e-7 max|v|``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.ndimage as ndi
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import FitError, InsufficientDataError, TopologyError
from .mesh import Mesh, NodalField, field_gradient, interpolate_field

ZERO_NUDGE = 1e-13
BOUNDARY_DELTA = 1e-12
TOPOLOGY_EPS = 1e-7


@dataclass(frozen=True)
class Window:
    """Axis-aligned rectangle ``[x_lo, x_hi] x [y_lo, y_hi]``."""

    x_lo: float
    x_hi: float
    y_lo: float
    y_hi: float

    @classmethod
    def centered(cls, N: float, half_x: float = 0.5, half_y: float = 0.3) -> "Window":
        return cls(N / 2 - half_x, N / 2 + half_x, 0.5 - half_y, 0.5 + half_y)

    def contains(self, pts) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return ((pts[:, 0] >= self.x_lo) & (pts[:, 0] <= self.x_hi)
                & (pts[:, 1] >= self.y_lo) & (pts[:, 1] <= self.y_hi))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Branch:
    """One connected component of the traced zero set.

    Attributes
    ----------
    points : ndarray, shape (m, 2)
    edges : ndarray, shape (m, 2)
        Mesh edge (node pair) carrying each point.
    closed : bool
    sides : tuple of str
        Boundary side (``left``, ``right``, ``bottom``, ``top``) of the first
        and last point of an open branch.
    """

    points: np.ndarray
    edges: np.ndarray
    closed: bool
    sides: tuple[str, ...] = ()

    @property
    def endpoints(self) -> np.ndarray:
        return np.empty((0, 2)) if self.closed else self.points[[0, -1]]

    def segments(self) -> tuple[np.ndarray, np.ndarray]:
        p = self.points
        if self.closed:
            return p, np.roll(p, -1, axis=0)
        return p[:-1], p[1:]


@dataclass
class NodalSet:
    branches: list[Branch]
    crossing_detected: bool
    mesh: Mesh
    traced_values: np.ndarray = field(repr=False)
    eps: float = 0.0
    window_components: tuple[int, int] = (0, 0)

    @property
    def n_endpoints(self) -> int:
        return sum(0 if b.closed else 2 for b in self.branches)

    def all_points(self) -> np.ndarray:
        if not self.branches:
            return np.empty((0, 2))
        return np.vstack([b.points for b in self.branches])

    def write_csv(self, path) -> Path:
        """Polyline points as ``branch, closed, x, y`` rows."""
        path = Path(path)
        with path.open("w", newline="", encoding="ascii") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["branch", "closed", "x", "y"])
            for i, b in enumerate(self.branches):
                for x, y in b.points:
                    w.writerow([i, int(b.closed), repr(float(x)), repr(float(y))])
        return path


def _field_of(obj) -> NodalField:
    return obj.field if hasattr(obj, "field") else obj


def traced_values(fld: NodalField) -> np.ndarray:
    """Nodal values with degenerate zeros nudged and boundary values set."""
    mesh = fld.mesh
    v = fld.values.astype(float).copy()
    vmax = float(np.max(np.abs(v))) or 1.0
    interior = ~mesh.boundary_mask
    v[interior & (np.abs(v) < ZERO_NUDGE * vmax)] = ZERO_NUDGE * vmax
    nx, ny = mesh.logical_dims
    G = v.reshape(nx, ny)
    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    bi = np.clip(ii, 1, nx - 2)
    bj = np.clip(jj, 1, ny - 2)
    bmask = mesh.boundary_mask.reshape(nx, ny)
    G = np.where(bmask, BOUNDARY_DELTA * G[bi, bj], G)
    return G.ravel()


def _side_of_edge(mesh: Mesh, a: int, b: int) -> str:
    nx, ny = mesh.logical_dims
    ia, ja = divmod(int(a), ny)
    ib, jb = divmod(int(b), ny)
    if ia == ib == 0:
        return "left"
    if ia == ib == nx - 1:
        return "right"
    if ja == jb == 0:
        return "bottom"
    if ja == jb == ny - 1:
        return "top"
    return "interior"


def _window_components(mesh: Mesh, v: np.ndarray, eps: float, window: Window):
    """Counts of positive and negative sign components inside ``window``."""
    inside = window.contains(mesh.nodes) & (np.abs(v) > eps) & ~mesh.boundary_mask
    return _sign_components(mesh, v, inside)


def _sign_components(mesh: Mesh, v: np.ndarray, active: np.ndarray):
    t = mesh.triangles
    e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    keep = active[e[:, 0]] & active[e[:, 1]] & (np.sign(v[e[:, 0]]) == np.sign(v[e[:, 1]]))
    e = e[keep]
    n = mesh.n_nodes
    g = sp.coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
    _, labels = connected_components(g, directed=False)
    pos = np.unique(labels[active & (v > 0)])
    neg = np.unique(labels[active & (v < 0)])
    return int(len(pos)), int(len(neg))


def extract_nodal_set(solution, mesh: Mesh | None = None,
                      window: Window | None = None) -> NodalSet:
    """Trace the zero set of the P1 field into polylines.

    ``crossing_detected`` is true when the default gap window holds at least
    two positive and two negative sign components, i.e. the four nodal
    domains still meet inside it.
    """
    fld = _field_of(solution)
    mesh = mesh or fld.mesh
    v = traced_values(fld)
    X = mesh.nodes
    tri = mesh.triangles
    s = v[tri] > 0
    npos = s.sum(axis=1)
    mixed = np.flatnonzero((npos == 1) | (npos == 2))
    branches: list[Branch] = []
    if len(mixed):
        st = s[mixed]
        # the vertex whose sign differs from the other two
        lone = np.where(npos[mixed] == 1, np.argmax(st, axis=1), np.argmin(st, axis=1))
        T = tri[mixed]
        k0 = T[np.arange(len(T)), lone]
        k1 = T[np.arange(len(T)), (lone + 1) % 3]
        k2 = T[np.arange(len(T)), (lone + 2) % 3]
        ea = np.sort(np.column_stack([k0, k1]), axis=1)
        eb = np.sort(np.column_stack([k0, k2]), axis=1)
        n = mesh.n_nodes
        keys = np.concatenate([ea[:, 0] * n + ea[:, 1], eb[:, 0] * n + eb[:, 1]])
        uniq, inv = np.unique(keys, return_inverse=True)
        m = len(mixed)
        s1, s2 = inv[:m], inv[m:]
        a_nodes, b_nodes = uniq // n, uniq % n
        va, vb = v[a_nodes], v[b_nodes]
        tpar = va / (va - vb)
        pts = X[a_nodes] + tpar[:, None] * (X[b_nodes] - X[a_nodes])
        branches = _chain(mesh, s1, s2, pts, np.column_stack([a_nodes, b_nodes]))
    vmax = float(np.max(np.abs(fld.values))) or 1.0
    eps = TOPOLOGY_EPS * vmax
    win = window or Window.centered(mesh.spec.N)
    comps = _window_components(mesh, fld.values, eps, win)
    crossing = comps[0] >= 2 and comps[1] >= 2
    return NodalSet(branches, crossing, mesh, v, eps, comps)


def _chain(mesh, s1, s2, pts, edge_nodes) -> list[Branch]:
    nv = len(pts)
    adj = [[] for _ in range(nv)]
    for k, (a, b) in enumerate(zip(s1.tolist(), s2.tolist())):
        adj[a].append((b, k))
        adj[b].append((a, k))
    used = np.zeros(len(s1), dtype=bool)
    out = []

    def walk(start):
        path = [start]
        cur = start
        while True:
            nxt = None
            for (w, k) in adj[cur]:
                if not used[k]:
                    used[k] = True
                    nxt = w
                    break
            if nxt is None:
                return path
            path.append(nxt)
            cur = nxt

    for start in range(nv):
        if len(adj[start]) == 1 and not all(used[k] for _, k in adj[start]):
            path = walk(start)
            e = edge_nodes[path]
            sides = (_side_of_edge(mesh, *e[0]), _side_of_edge(mesh, *e[-1]))
            out.append(Branch(pts[path], e, False, sides))
    for start in range(nv):
        if any(not used[k] for _, k in adj[start]):
            path = walk(start)
            if path[-1] == path[0]:
                path = path[:-1]
            out.append(Branch(pts[path], edge_nodes[path], True))
    return out


# gap -------------------------------------------------------------------------

@dataclass
class GapMeasurement:
    d: float
    p_star: tuple[float, float]
    q_star: tuple[float, float]
    window: Window
    branch_ids: tuple[int, ...] = ()
    crossing: bool = False


def _clip_segments(P0, P1, win: Window):
    """Liang-Barsky clipping of segments to ``win``; drops empty pieces."""
    d = P1 - P0
    t0 = np.zeros(len(P0))
    t1 = np.ones(len(P0))
    ok = np.ones(len(P0), dtype=bool)
    for p, q in ((-d[:, 0], P0[:, 0] - win.x_lo), (d[:, 0], win.x_hi - P0[:, 0]),
                 (-d[:, 1], P0[:, 1] - win.y_lo), (d[:, 1], win.y_hi - P0[:, 1])):
        par = p == 0
        ok &= ~(par & (q < 0))
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(par, 0.0, q / np.where(par, 1.0, p))
        t0 = np.where(~par & (p < 0), np.maximum(t0, r), t0)
        t1 = np.where(~par & (p > 0), np.minimum(t1, r), t1)
    ok &= t0 <= t1
    A = P0 + t0[:, None] * d
    B = P0 + t1[:, None] * d
    return A[ok], B[ok]


def _point_segment(P, A, B):
    """Distances and foot points from every ``P`` to every segment ``AB``."""
    AB = B - A
    L2 = np.einsum("ij,ij->i", AB, AB)
    AP = P[:, None, :] - A[None, :, :]
    t = np.einsum("ijk,jk->ij", AP, AB) / np.where(L2 > 0, L2, 1.0)[None, :]
    t = np.clip(t, 0.0, 1.0)
    F = A[None, :, :] + t[..., None] * AB[None, :, :]
    dist = np.linalg.norm(P[:, None, :] - F, axis=2)
    return dist, F


def segment_set_distance(A0, A1, B0, B1):
    """Exact minimum distance between two disjoint segment sets.

    Returns ``(d, p, q)`` with ``p`` on the first set and ``q`` on the second.
    """
    best = (np.inf, None, None)
    chunk = 2048
    for P, (S0, S1), first in ((np.vstack([A0, A1]), (B0, B1), True),
                               (np.vstack([B0, B1]), (A0, A1), False)):
        for i in range(0, len(P), chunk):
            dist, F = _point_segment(P[i:i + chunk], S0, S1)
            k = int(np.argmin(dist))
            r, c = divmod(k, dist.shape[1])
            if dist[r, c] < best[0]:
                p, q = P[i + r], F[r, c]
                best = (float(dist[r, c]), p, q) if first else (float(dist[r, c]), q, p)
    return best


def measure_gap(nodal: NodalSet, window: Window | None = None) -> GapMeasurement:
    """Minimum distance between the two branches that meet the window.

    Returns ``d = 0`` when a crossing was detected.

    Raises
    ------
    TopologyError
        If the number of branches meeting the window is not two (and no
        crossing was detected).
    """
    win = window or Window.centered(nodal.mesh.spec.N)
    pieces = []
    for i, b in enumerate(nodal.branches):
        S0, S1 = b.segments()
        if len(S0) == 0:
            continue
        A, B = _clip_segments(S0, S1, win)
        if len(A):
            pieces.append((i, A, B))
    center = (0.5 * (win.x_lo + win.x_hi), 0.5 * (win.y_lo + win.y_hi))
    if nodal.crossing_detected:
        p = center
        if len(pieces) == 2:
            _, p, q = segment_set_distance(pieces[0][1], pieces[0][2], pieces[1][1], pieces[1][2])
            p = tuple(0.5 * (np.asarray(p) + np.asarray(q)))
        return GapMeasurement(0.0, tuple(map(float, p)), tuple(map(float, p)), win,
                              tuple(i for i, *_ in pieces), crossing=True)
    if len(pieces) != 2:
        raise TopologyError(f"{len(pieces)} branches meet the gap window, expected 2",
                            len(pieces))
    (ia, A0, A1), (ib, B0, B1) = pieces
    d, p, q = segment_set_distance(A0, A1, B0, B1)
    return GapMeasurement(d, tuple(map(float, p)), tuple(map(float, q)), win, (ia, ib))


# hyperbola --------------------------------------------------------------------

@dataclass
class HyperbolaFit:
    """Quadric ``alpha p^2 + 2 gamma p q + beta q^2 + 2 a p + 2 b q + c``.

    ``p = x - N/2`` and ``q = y - 1/2``. ``lambda1`` belongs to the
    transverse axis (through the vertices), whose angle with the positive
    x-axis is ``phi``.
    """

    alpha: float
    beta: float
    gamma: float
    a: float
    b: float
    c: float
    detH: float
    D: float
    center: tuple[float, float]
    P0: float
    phi: float
    vertex_distance: float
    lambda1: float
    lambda2: float
    method: str = ""
    n_points: int = 0
    radius: float = math.nan

    def to_dict(self) -> dict:
        return asdict(self)


def conic_reduction(alpha, beta, gamma, a, b, c, N: float, method: str = "",
                    n_points: int = 0, radius: float = math.nan) -> HyperbolaFit:
    """Centre, transverse-axis angle and vertex distance of a hyperbolic quadric.

    Raises
    ------
    FitError
        If the quadric is not a hyperbola (``detH >= 0``) or is degenerate
        (its value at the centre vanishes).
    """
    detH = alpha * beta - gamma**2
    if not detH < 0:
        raise FitError(f"quadric is not hyperbolic (detH = {detH:.3g})")
    D = -(alpha * b**2 + beta * a**2) + 2 * a * b * gamma + c * detH
    P0 = D / detH
    xc = N / 2 - (a * beta - gamma * b) / detH
    yc = 0.5 - (alpha * b - a * gamma) / detH
    lam, vec = np.linalg.eigh(np.array([[alpha, gamma], [gamma, beta]]))
    scale = max(abs(alpha), abs(beta), abs(gamma))
    if abs(P0) <= 1e-14 * max(scale, abs(c), 1e-300):
        raise FitError("degenerate quadric: the two branches meet")
    k = 0 if lam[0] * P0 < 0 else 1
    u = vec[:, k]
    phi = math.atan2(u[1], u[0])
    if phi <= -math.pi / 2:
        phi += math.pi
    elif phi > math.pi / 2:
        phi -= math.pi
    at2 = abs(P0 / lam[k])
    return HyperbolaFit(alpha=float(alpha), beta=float(beta), gamma=float(gamma), a=float(a),
                        b=float(b), c=float(c), detH=float(detH), D=float(D),
                        center=(float(xc), float(yc)), P0=float(P0), phi=float(phi),
                        vertex_distance=float(2 * math.sqrt(at2)), lambda1=float(lam[k]),
                        lambda2=float(lam[1 - k]), method=method, n_points=n_points,
                        radius=radius)


def model_quadric(solution, dec, mesh: Mesh | None = None) -> HyperbolaFit:
    """Quadric built from the centre value, recovered gradient and mode Hessian."""
    fld = _field_of(solution)
    mesh = mesh or fld.mesh
    N = mesh.spec.N
    cpt = np.array([N / 2, 0.5])
    c = interpolate_field(fld, cpt)
    g = field_gradient(fld, cpt)
    v1c = float(dec.v1_center_fit)
    dv2 = float(dec.dv2_center)
    H11 = -dec.mu1**2 * v1c
    H22 = -math.pi**2 * v1c
    H12 = -2 * math.pi * dv2
    return conic_reduction(0.5 * H11, 0.5 * H22, 0.5 * H12, 0.5 * g[0], 0.5 * g[1], c, N,
                           method="model")


def fit_quadric_points(points, N: float, radius: float = math.nan) -> HyperbolaFit:
    """Algebraic least-squares conic through ``points`` (smallest singular vector)."""
    pts = np.asarray(points, dtype=float)
    if len(pts) < 12:
        raise InsufficientDataError(f"{len(pts)} nodal points in the fit disc, need 12")
    p = pts[:, 0] - N / 2
    q = pts[:, 1] - 0.5
    r = float(np.max(np.hypot(p, q))) or 1.0
    u, w = p / r, q / r
    A = np.column_stack([u * u, u * w, w * w, u, w, np.ones_like(u)])
    _, _, Vt = np.linalg.svd(A, full_matrices=False)
    A2, B2, C2, D2, E2, F2 = Vt[-1]
    return conic_reduction(A2 / r**2, C2 / r**2, 0.5 * B2 / r**2, 0.5 * D2 / r, 0.5 * E2 / r,
                           F2, N, method="lsq", n_points=len(pts), radius=radius)


def fit_radius(eta: float, h: float) -> float:
    return max(1.5 * math.sqrt(eta), 10 * h)


@dataclass
class QuadraticModel:
    """Data fit (returned geometry) with the mode-based model alongside."""

    fit: HyperbolaFit
    model: HyperbolaFit | None
    model_error: str = ""

    def __getattr__(self, name):
        fit = self.__dict__.get("fit")
        if fit is None:
            raise AttributeError(name)
        return getattr(fit, name)


def local_quadratic_model(solution, mesh: Mesh | None, dec, nodal: NodalSet | None = None,
                          radius: float | None = None) -> QuadraticModel:
    """Fit the nodal set near the centre by a quadric and compare with the model.

    Raises
    ------
    FitError, InsufficientDataError
        From the data fit.
    """
    fld = _field_of(solution)
    mesh = mesh or fld.mesh
    nodal = nodal or extract_nodal_set(fld, mesh)
    N = mesh.spec.N
    r = radius or fit_radius(mesh.spec.eta, mesh.h)
    P = nodal.all_points()
    sel = np.hypot(P[:, 0] - N / 2, P[:, 1] - 0.5) <= r
    fit = fit_quadric_points(P[sel], N, radius=r)
    model, err = None, ""
    try:
        model = model_quadric(fld, dec, mesh)
    except FitError as exc:
        err = str(exc)
    return QuadraticModel(fit, model, err)


# envelope checks --------------------------------------------------------------

@dataclass
class StructureCheckReport:
    strip_direction: tuple[float, float]
    strip_halfwidth: float
    A0_fit: float
    A_outer_fit: float
    boundary_angles: tuple[float, ...]
    graph_derivative_sup: dict
    component_count: int
    component_count_raster: int | None = None
    sign_ratio: float = math.nan
    notes: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return asdict(self)


def strip_direction(dec) -> tuple[float, float]:
    """Direction of the nodal-free strip: perpendicular to the transverse axis."""
    s = np.sign(dec.dv2_center * dec.v1_center_fit)
    r = 1 / math.sqrt(2)
    return (r, -r) if s > 0 else (r, r)


def strip_halfwidth(nodal: NodalSet, direction) -> float:
    """Largest half-width of a centred strip along ``direction`` missing the zero set."""
    if nodal.crossing_detected:
        return 0.0
    N = nodal.mesh.spec.N
    n = np.array([-direction[1], direction[0]])
    best = np.inf
    for b in nodal.branches:
        S0, S1 = b.segments()
        if len(S0) == 0:
            continue
        s0 = (S0 - [N / 2, 0.5]) @ n
        s1 = (S1 - [N / 2, 0.5]) @ n
        cross = np.sign(s0) != np.sign(s1)
        if np.any(cross):
            return 0.0
        best = min(best, float(np.min(np.minimum(np.abs(s0), np.abs(s1)))))
    return best


def component_count(solution, mesh: Mesh | None = None) -> int:
    """Nodal domains: connected same-sign node sets over mesh edges.

    Nodes with ``|v| <= 1e-7 max|v|`` (including all Dirichlet nodes) are
    excluded. For a P1 field two nodes joined by an edge with equal strict
    sign lie in the same nodal domain, so this count is exact for the
    interpolant.
    """
    fld = _field_of(solution)
    mesh = mesh or fld.mesh
    v = fld.values
    eps = TOPOLOGY_EPS * (float(np.max(np.abs(v))) or 1.0)
    active = (np.abs(v) > eps) & ~mesh.boundary_mask
    pos, neg = _sign_components(mesh, v, active)
    return pos + neg


def raster_component_count(solution, mesh: Mesh | None = None, rows: int = 400) -> int:
    """Nodal domains by 4-connected flood fill of a ``rows x ceil(rows N)`` raster."""
    fld = _field_of(solution)
    mesh = mesh or fld.mesh
    N = mesh.spec.N
    cols = int(math.ceil(rows * N))
    xmin = min(0.0, float(np.min(mesh.nodes[:, 0])))
    xs = xmin + (np.arange(cols) + 0.5) * (N - xmin) / cols
    ys = (np.arange(rows) + 0.5) / rows
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    # only the triangulated region: extrapolating into the boundary sliver
    # would create specks of the wrong sign
    vals = interpolate_field(fld, np.column_stack([X.ravel(), Y.ravel()]), fill_value=np.nan,
                             strict=True)
    vals = vals.reshape(X.shape)
    eps = TOPOLOGY_EPS * (float(np.max(np.abs(fld.values))) or 1.0)
    four = ndi.generate_binary_structure(2, 1)
    _, npos = ndi.label(np.nan_to_num(vals, nan=0.0) > eps, structure=four)
    _, nneg = ndi.label(np.nan_to_num(vals, nan=0.0) < -eps, structure=four)
    return int(npos + nneg)


def _resample_slopes(points, along: int, step: float):
    """Slopes d(other)/d(along) of a polyline resampled at spacing ``step``."""
    t = points[:, along]
    o = points[:, 1 - along]
    order = np.argsort(t)
    t, o = t[order], o[order]
    keep = np.concatenate([[True], np.diff(t) > 1e-12])
    t, o = t[keep], o[keep]
    if len(t) < 3 or t[-1] - t[0] < 3 * step:
        return np.empty(0), np.empty(0)
    grid = np.arange(t[0] + step, t[-1] - step, step)
    og = np.interp(grid, t, o)
    slope = np.gradient(og, step)
    return grid, slope


def graph_derivative_bounds(nodal: NodalSet, eta: float, disc: float) -> dict:
    """Envelope constants for the graph parameterizations away from the centre.

    ``C_g = sup |g'(y)| |y - 1/2|^2 / eta`` over the near-vertical arms and
    ``C_h_outer = sup |h'(x)| (N |sin(2 pi x/N)| + 1) / eta`` over the
    horizontal arms with ``|x - N/2| >= 1/10``.
    """
    mesh = nodal.mesh
    N = mesh.spec.N
    step = 4 * mesh.h
    out = {"C_g": 0.0, "C_h_outer": 0.0, "C_h_inner": 0.0, "sup_g": 0.0, "sup_h": 0.0}
    if eta <= 0:
        return {k: math.nan for k in out}
    for b in nodal.branches:
        P = b.points
        dx, dy = P[:, 0] - N / 2, P[:, 1] - 0.5
        far = np.hypot(dx, dy) > disc
        vert = far & (np.abs(dx) < 0.1) & (np.abs(dy) > np.abs(dx))
        horiz = far & ~vert
        # split into contiguous runs so each run is a graph
        for mask, along in ((vert, 1), (horiz, 0)):
            idx = np.flatnonzero(mask)
            if len(idx) < 3:
                continue
            runs = np.split(idx, np.flatnonzero(np.diff(idx) > 1) + 1)
            for run in runs:
                grid, slope = _resample_slopes(P[run], along, step)
                if len(grid) == 0:
                    continue
                if along == 1:
                    cg = np.abs(slope) * (grid - 0.5) ** 2 / eta
                    out["C_g"] = max(out["C_g"], float(cg.max()))
                    out["sup_g"] = max(out["sup_g"], float(np.abs(slope).max()))
                else:
                    ox = np.abs(grid - N / 2)
                    outer = ox >= 0.1
                    if np.any(outer):
                        ch = (np.abs(slope[outer]) * (N * np.abs(np.sin(2 * np.pi * grid[outer] / N)) + 1)
                              / eta)
                        out["C_h_outer"] = max(out["C_h_outer"], float(ch.max()))
                    if np.any(~outer):
                        ci = np.abs(slope[~outer]) * ox[~outer] ** 2 / eta
                        out["C_h_inner"] = max(out["C_h_inner"], float(ci.max()))
                    out["sup_h"] = max(out["sup_h"], float(np.abs(slope).max()))
    return out


def boundary_tangent(spec, side: str, y: float) -> np.ndarray:
    if side == "left":
        t = np.array([float(spec.eta * spec.profile.derivative(y)) if spec.eta else 0.0, 1.0])
        return t / np.linalg.norm(t)
    if side == "right":
        return np.array([0.0, 1.0])
    return np.array([1.0, 0.0])


def _boundary_coords(spec, side: str, pts):
    """Approximate inward distance to ``side`` for points near it."""
    x, y = pts[:, 0], pts[:, 1]
    if side == "left":
        dphi = spec.eta * np.asarray(spec.profile.derivative(y), dtype=float) if spec.eta else 0.0
        return (x - np.asarray(spec.left(y), dtype=float)) / np.sqrt(1 + dphi**2)
    if side == "right":
        return spec.N - x
    if side == "bottom":
        return y
    return 1.0 - y


def _polyline_direction(P, E, bnd, n_fit):
    touch = bnd[E[:, 0]] | bnd[E[:, 1]]
    start = int(np.argmax(~touch)) if np.any(~touch) else len(P)
    seg = P[start:start + n_fit]
    if len(seg) < 2:
        raise TopologyError("branch too short near the boundary", len(seg))
    _, _, Vt = np.linalg.svd(seg - seg.mean(axis=0), full_matrices=False)
    return Vt[0]


def _field_direction(mesh, spec, values, side, end, tan, radius, min_nodes=12):
    """Zero-line direction at a boundary point from a local fit of the field.

    With ``n`` the distance to the boundary and ``s`` the tangential
    offset, ``v = n (a0 + a1 s + a2 n + cubic terms)`` vanishes on the
    boundary by construction; the zero line leaves it along ``(-a2, a1)``.
    """
    X = mesh.nodes
    dist = np.hypot(X[:, 0] - end[0], X[:, 1] - end[1])
    r = radius
    while np.count_nonzero(dist <= r) < min_nodes:
        r *= 1.25
    sel = dist <= r
    n = _boundary_coords(spec, side, X[sel])
    s = (X[sel] - end) @ tan
    A = np.column_stack([n, n * s, n * n, n * s * s, n * s * n, n**3])
    coef, *_ = np.linalg.lstsq(A, values[sel], rcond=None)
    a1, a2 = coef[1], coef[2]
    nrm = np.array([-tan[1], tan[0]])
    # (s, n) components back to (x, y); the sign of nrm is irrelevant for the angle
    d = -a2 * tan + a1 * nrm
    return d / np.linalg.norm(d)


def boundary_angles(nodal: NodalSet, mesh: Mesh | None = None, spec=None,
                    method: str = "field", n_fit: int = 5,
                    radius: float | None = None) -> list[dict]:
    """Angle between each nodal line and the boundary where it ends.

    ``method="field"`` (default) fits ``v = n (a0 + a1 s + a2 n + ...)`` to the
    nodal values within ``radius`` (default ``2 h``) of the endpoint, where
    ``n`` is the distance to the boundary and ``s`` the tangential offset,
    and reads the direction off the linear part. The P1 zero line itself is
    a poor direction estimate within a few cells of the boundary: the
    gradient vanishes at the endpoint, so O(h^2) field errors move the line
    by O(h) there.

    ``method="polyline"`` uses a least-squares line through ``n_fit``
    polyline vertices, skipping those on edges that touch a Dirichlet node.

    Raises
    ------
    TopologyError
        If the zero set does not have exactly four boundary endpoints.
    """
    mesh = mesh or nodal.mesh
    spec = spec or mesh.spec
    if method not in ("field", "polyline"):
        raise ValueError(f"unknown method {method!r}")
    if nodal.n_endpoints != 4:
        raise TopologyError(f"{nodal.n_endpoints} boundary endpoints, expected 4",
                            nodal.n_endpoints)
    r = radius or 2 * mesh.h
    bnd = mesh.boundary_mask
    out = []
    for b in nodal.branches:
        if b.closed:
            continue
        for end, side in ((0, b.sides[0]), (-1, b.sides[1])):
            P = b.points if end == 0 else b.points[::-1]
            E = b.edges if end == 0 else b.edges[::-1]
            tan = boundary_tangent(spec, side, float(P[0, 1]))
            if method == "polyline":
                d = _polyline_direction(P, E, bnd, n_fit)
            else:
                d = _field_direction(mesh, spec, nodal.traced_values, side, P[0], tan, r)
            ang = math.degrees(math.acos(min(1.0, abs(float(d @ tan)))))
            out.append({"side": side, "point": (float(P[0, 0]), float(P[0, 1])),
                        "angle_deg": ang})
    return out


def structure_check(solution, mesh: Mesh | None, nodal: NodalSet, dec,
                    with_raster: bool = False) -> StructureCheckReport:
    """Empirical envelope constants and geometric checks near the opening."""
    fld = _field_of(solution)
    mesh = mesh or fld.mesh
    spec = mesh.spec
    N, eta = spec.N, spec.eta
    notes = []
    direction = strip_direction(dec)
    width = strip_halfwidth(nodal, direction)
    P = nodal.all_points()
    dx, dy = np.abs(P[:, 0] - N / 2), np.abs(P[:, 1] - 0.5)
    inner = dx <= 0.1
    if eta > 0 and np.any(inner):
        A0 = float(np.max(dx[inner] * dy[inner]) / eta)
    else:
        A0 = math.nan
    outer = ~inner
    if eta > 0 and np.any(outer):
        A_out = float(np.max(dy[outer] * (N * np.abs(np.sin(2 * np.pi * P[outer, 0] / N)) + 1))
                      / eta)
    else:
        A_out = math.nan
    try:
        angles = tuple(a["angle_deg"] for a in boundary_angles(nodal, mesh, spec))
    except TopologyError as exc:
        angles = ()
        notes.append(str(exc))
    disc = max(math.sqrt(eta), 4 * mesh.h)
    gd = graph_derivative_bounds(nodal, eta, disc)
    cc = component_count(fld, mesh)
    raster = raster_component_count(fld, mesh) if with_raster else None
    ratio = dec.dv2_center / dec.v1_center_fit if dec.v1_center_fit else math.nan
    return StructureCheckReport(direction, width, A0, A_out, angles, gd, cc, raster, ratio,
                                tuple(notes))

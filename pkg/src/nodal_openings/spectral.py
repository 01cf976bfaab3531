"""Dirichlet eigenproblem assembly and shift-invert Lanczos.

The generalized problem ``K v = mu M v`` is posed on the interior nodes only
(Dirichlet rows and columns are eliminated). Eigenpairs near a shift
``sigma`` come from Lanczos on ``(K - sigma M)^{-1} M`` in the M-inner
product: a Ritz value ``theta`` maps back to ``mu = sigma + 1/theta``.
"""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph
import scipy.sparse.linalg as sla
from scipy.linalg import eigh, eigh_tridiagonal

from .errors import ConvergenceError, GeometryError, NumericalError, SelectionError
from .geometry import DomainSpec
from .mesh import Mesh, NodalField, build_mesh, interpolate_field

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-8
MAX_ITER = 500
RESONANCE_THRESHOLD = 0.05
_PIVOT_RTOL = 1e-13


@dataclass(frozen=True, eq=False)
class System:
    """Reduced stiffness and mass matrices.

    Attributes
    ----------
    K, M : scipy.sparse.csr_matrix
        Matrices on the free (interior) nodes.
    free : ndarray of int
        Mesh node index of each free degree of freedom.
    """

    K: sp.csr_matrix
    M: sp.csr_matrix
    free: np.ndarray
    mesh: Mesh

    @property
    def n(self) -> int:
        return self.K.shape[0]

    def expand(self, u) -> np.ndarray:
        """Full nodal vector with zeros on Dirichlet nodes."""
        out = np.zeros(self.mesh.n_nodes)
        out[self.free] = u
        return out


def assemble_full(mesh: Mesh) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """P1 stiffness and consistent mass matrices before elimination."""
    p = mesh.nodes[mesh.triangles]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    if np.any(det <= 0):
        raise GeometryError("singular or inverted element Jacobian")
    area = 0.5 * det
    g = np.empty((len(det), 3, 2))
    g[:, 1] = np.column_stack([e2[:, 1], -e2[:, 0]]) / det[:, None]
    g[:, 2] = np.column_stack([-e1[:, 1], e1[:, 0]]) / det[:, None]
    g[:, 0] = -g[:, 1] - g[:, 2]
    Ke = area[:, None, None] * np.einsum("tik,tjk->tij", g, g)
    Me = area[:, None, None] * ((np.ones((3, 3)) + np.eye(3)) / 12.0)
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    n = mesh.n_nodes
    K = sp.csr_matrix((Ke.ravel(), (rows, cols)), shape=(n, n))
    M = sp.csr_matrix((Me.ravel(), (rows, cols)), shape=(n, n))
    return K, M


def assemble(mesh: Mesh) -> System:
    """Assemble and eliminate the Dirichlet nodes."""
    K, M = assemble_full(mesh)
    free = np.flatnonzero(~mesh.boundary_mask)
    Kf = K[free][:, free].tocsr()
    Mf = M[free][:, free].tocsr()
    # exact symmetrization removes assembly round-off in the off-diagonals
    Kf = ((Kf + Kf.T) * 0.5).tocsr()
    Mf = ((Mf + Mf.T) * 0.5).tocsr()
    return System(Kf, Mf, free, mesh)


@dataclass(eq=False)
class ShiftedFactorization:
    """``K - sigma M = P^T L D L^T P`` via SuperLU in symmetric mode.

    With symmetric pivoting disabled the row and column permutations agree
    and ``diag(U)`` equals ``D``; its negative entries give the inertia.
    """

    sigma: float
    lu: object
    perm: np.ndarray | None
    n_negative: int | None
    ordering: str

    def solve(self, b):
        if self.perm is None:
            return self.lu.solve(b)
        out = np.empty_like(b)
        out[self.perm] = self.lu.solve(b[self.perm])
        return out


def _factor_once(A: sp.spmatrix, ordering: str):
    if ordering == "rcm":
        perm = csgraph.reverse_cuthill_mckee(A.tocsr(), symmetric_mode=True)
        Ap = A.tocsr()[perm][:, perm].tocsc()
        lu = sla.splu(Ap, permc_spec="NATURAL", diag_pivot_thresh=0.0,
                      options=dict(SymmetricMode=True))
    elif ordering == "mmd":
        perm = None
        lu = sla.splu(A.tocsc(), permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                      options=dict(SymmetricMode=True))
    else:
        raise ValueError(f"unknown ordering {ordering!r}")
    d = lu.U.diagonal()
    dmax = np.max(np.abs(d))
    if not np.all(np.isfinite(d)) or np.min(np.abs(d)) <= _PIVOT_RTOL * dmax:
        raise NumericalError("pivot breakdown: shift is (near) an eigenvalue")
    if np.array_equal(lu.perm_r, lu.perm_c):
        n_neg = int(np.count_nonzero(d < 0))
    else:
        warnings.warn("row and column permutations differ; inertia unavailable")
        n_neg = None
    return lu, perm, n_neg


def factorize_shifted(K, M, sigma: float, ordering: str = "mmd",
                      max_retries: int = 3) -> ShiftedFactorization:
    """Factor ``K - sigma M``.

    On pivot breakdown the shift is moved to ``sigma * (1 + 1e-6)`` and the
    factorization retried, up to ``max_retries`` times.
    """
    s = float(sigma)
    for attempt in range(max_retries + 1):
        try:
            lu, perm, n_neg = _factor_once((K - s * M), ordering)
            return ShiftedFactorization(s, lu, perm, n_neg, ordering)
        except (NumericalError, RuntimeError) as exc:
            if attempt == max_retries:
                raise NumericalError(f"factorization failed at sigma={s!r}: {exc}") from exc
            log.info("pivot breakdown at sigma=%r, retrying", s)
            s = s + 1e-6 * (s if s != 0 else 1.0)
    raise AssertionError("unreachable")


@dataclass(frozen=True)
class Signature:
    """Qualitative shape of a mode.

    ``dominant_k`` is the slice Fourier index with the largest energy,
    ``x_changes`` the sign changes of the k=2 slice mode across the
    interior columns and ``y_changes`` the sign changes of ``v(N/4, y)``.
    """

    dominant_k: int
    x_changes: int
    y_changes: int
    energies: tuple[float, ...] = ()

    @property
    def matches_target(self) -> bool:
        return self.dominant_k == 2 and self.x_changes == 1 and self.y_changes == 1


@dataclass(frozen=True, eq=False)
class EigenSolution:
    """One eigenpair with its bookkeeping.

    Attributes
    ----------
    mu : float
    field : NodalField
        Eigenfunction on all mesh nodes.
    residual : float
        ``||K v - mu M v||_2 / ||v||_M``.
    position_index : int or None
        1-based rank of ``mu`` in the discrete spectrum (from inertia).
    signature : Signature or None
    meta : dict
    """

    mu: float
    field: NodalField
    residual: float
    position_index: int | None = None
    signature: Signature | None = None
    meta: dict = field(default_factory=dict)

    @property
    def mesh(self) -> Mesh:
        return self.field.mesh


def _lanczos(op, Mmul, n, m, rng, max_iter, ritz_tol, check_every=5):
    """M-orthonormal Lanczos with full reorthogonalization.

    Returns Ritz values (largest magnitude first) and the basis data.
    """
    V = np.empty((n, min(max_iter, n) + 1))
    alpha = np.zeros(max_iter)
    beta = np.zeros(max_iter)
    q = rng.standard_normal(n)
    q /= math.sqrt(q @ Mmul(q))
    V[:, 0] = q
    k_last = 0
    best = np.inf
    for j in range(min(max_iter, n)):
        w = op(V[:, j])
        Mw = Mmul(w)
        alpha[j] = w @ Mmul(V[:, j])
        for _ in range(2):
            c = V[:, : j + 1].T @ Mw
            w -= V[:, : j + 1] @ c
            Mw = Mmul(w)
        b = math.sqrt(max(w @ Mw, 0.0))
        if b < 1e-14 * max(abs(alpha[j]), 1.0):
            # invariant subspace: continue with a fresh orthogonal direction
            w = rng.standard_normal(n)
            for _ in range(2):
                w -= V[:, : j + 1] @ (V[:, : j + 1].T @ Mmul(w))
            b_new = math.sqrt(w @ Mmul(w))
            V[:, j + 1] = w / b_new
            beta[j] = 0.0
        else:
            beta[j] = b
            V[:, j + 1] = w / b
        steps = j + 1
        if steps >= m and (steps % check_every == 0 or steps == min(max_iter, n)):
            theta, S = eigh_tridiagonal(alpha[:steps], beta[: steps - 1])
            order = np.argsort(-np.abs(theta))[:m]
            est = np.abs(beta[j] * S[-1, order]) / np.abs(theta[order])
            best = float(est.max())
            k_last = steps
            if best < ritz_tol or steps == min(max_iter, n):
                yield theta[order], V[:, :steps] @ S[:, order], steps
    if k_last == 0:
        raise ConvergenceError("Lanczos produced no Ritz values", best)


def _residuals(K, M, X, mus):
    X = X / np.sqrt(np.einsum("ij,ij->j", X, M @ X))
    R = K @ X - (M @ X) * mus[None, :]
    return X, np.linalg.norm(R, axis=0)


def _polish(K, M, fac, X, sweeps: int = 3):
    """Subspace iteration with ``(K - sigma M)^{-1} M`` plus Rayleigh-Ritz."""
    for _ in range(sweeps):
        Y = np.column_stack([fac.solve(M @ X[:, i]) for i in range(X.shape[1])])
        Kp = Y.T @ (K @ Y)
        Mp = Y.T @ (M @ Y)
        mus, S = eigh((Kp + Kp.T) / 2, (Mp + Mp.T) / 2)
        X, res = _residuals(K, M, Y @ S, mus)
        if res.max() <= RESIDUAL_TOL:
            break
    return mus, X, res


def solve_near(system: System | tuple, sigma: float, m: int = 6, seed: int = 0,
               max_iter: int = MAX_ITER, ordering: str = "mmd",
               factorization: ShiftedFactorization | None = None) -> list[EigenSolution]:
    """The ``m`` eigenpairs nearest ``sigma``, sorted by eigenvalue.

    Raises
    ------
    ConvergenceError
        If the residual target is not met within ``max_iter`` iterations.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if isinstance(system, tuple):
        K, M = system
        sysobj = None
    else:
        K, M, sysobj = system.K, system.M, system
    n = K.shape[0]
    m = min(m, n)
    fac = factorization or factorize_shifted(K, M, sigma, ordering=ordering)
    op = lambda v: fac.solve(M @ v)  # noqa: E731
    Mmul = lambda v: M @ v  # noqa: E731
    rng = np.random.default_rng(seed)
    best = np.inf
    for theta, X, steps in _lanczos(op, Mmul, n, m, rng, max_iter, ritz_tol=1e-10):
        mus = fac.sigma + 1.0 / theta
        X, res = _residuals(K, M, X, mus)
        best = float(res.max())
        if best <= RESIDUAL_TOL:
            break
        # Ritz estimates converged but the true residual lags (large systems):
        # a few shift-invert subspace sweeps usually close the gap
        mus, X, res = _polish(K, M, fac, X)
        best = float(res.max())
        if best <= RESIDUAL_TOL:
            break
    else:
        raise ConvergenceError(
            f"Lanczos did not reach residual {RESIDUAL_TOL:g} in {max_iter} iterations "
            f"(best {best:.3g})", best)
    if best > RESIDUAL_TOL:
        raise ConvergenceError(f"residual {best:.3g} above {RESIDUAL_TOL:g}", best)
    order = np.argsort(mus)
    below = int(np.count_nonzero(mus < fac.sigma))
    out = []
    for rank, i in enumerate(order):
        pos = None
        if fac.n_negative is not None:
            pos = fac.n_negative - below + rank + 1
        vec = X[:, i]
        full = sysobj.expand(vec) if sysobj is not None else vec
        fld = NodalField(full, sysobj.mesh) if sysobj is not None else None
        out.append(EigenSolution(mu=float(mus[i]), field=fld, residual=float(res[i]),
                                 position_index=pos,
                                 meta={"iterations": steps, "sigma": fac.sigma,
                                       "_vec": vec}))
    return out


def m_orthogonality_defect(solutions: Sequence[EigenSolution], M) -> float:
    """Largest ``|v_i^T M v_j|`` for ``i != j`` after M-normalization."""
    vecs = [s.meta["_vec"] for s in solutions]
    vecs = [v / math.sqrt(v @ (M @ v)) for v in vecs]
    worst = 0.0
    for i in range(len(vecs)):
        for j in range(i):
            worst = max(worst, abs(vecs[i] @ (M @ vecs[j])))
    return worst


def _simpson_weights(n: int, h: float) -> np.ndarray:
    if n % 2 == 0:
        raise ValueError("Simpson rule needs an odd number of samples")
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * h / 3.0


def _sign_changes(v, tol):
    v = np.asarray(v)
    s = np.sign(v[np.abs(v) > tol])
    return int(np.count_nonzero(s[1:] != s[:-1]))


def mode_signature(fld: NodalField, k_max: int = 8) -> Signature:
    """Cheap signature from the column data of the structured grid."""
    mesh = fld.mesh
    nx, ny = mesh.logical_dims
    N = mesh.spec.N
    V = mesh.grid(fld.values)
    vmax = float(np.max(np.abs(V))) or 1.0
    cols = np.flatnonzero((mesh.xi >= mesh.blend) & (mesh.xi <= N - 1e-12))
    y = mesh.y
    if ny % 2 == 1:
        wts = _simpson_weights(ny, 1.0 / (ny - 1))
    else:
        wts = np.full(ny, 1.0 / (ny - 1))
        wts[[0, -1]] *= 0.5
    ks = np.arange(1, k_max + 1)
    basis = np.sin(np.pi * ks[:, None] * y[None, :]) * wts[None, :]
    vk = 2.0 * V[cols] @ basis.T  # (ncols, k_max)
    energy = np.sum(vk**2, axis=0)
    dominant = int(ks[np.argmax(energy)])
    x_changes = _sign_changes(vk[:, 1], 1e-3 * np.max(np.abs(vk[:, 1])) + 1e-300)
    ys = np.linspace(0.05, 0.95, 181)
    vy = interpolate_field(fld, np.column_stack([np.full_like(ys, N / 4), ys]))
    y_changes = _sign_changes(vy, 1e-3 * vmax)
    return Signature(dominant, x_changes, y_changes, tuple(float(e) for e in energy))


def target_shift(N: float) -> float:
    """Eigenvalue of the (2, 2) mode on the unperturbed rectangle."""
    return 4 * math.pi**2 * (1 / N**2 + 1)


def select_mode(candidates: Sequence[EigenSolution], spec: DomainSpec,
                normalize: bool = True) -> EigenSolution:
    """Pick the candidate with the target signature nearest the shift.

    Raises
    ------
    SelectionError
        If no candidate matches; carries the resonance report.
    """
    from .modes import normalize_sign, resonance_report

    if not candidates:
        raise ValueError("no candidates")
    sigma = target_shift(spec.N)
    report = resonance_report(spec.N)
    tagged = []
    for c in candidates:
        sig = c.signature or mode_signature(c.field)
        tagged.append(replace(c, signature=sig))
    matches = [c for c in tagged if c.signature.matches_target]
    if not matches:
        raise SelectionError(
            f"no candidate has the target signature at N={spec.N:g} "
            f"(res={report.res_value:.3g}, nearest resonant N="
            f"{report.nearest_resonant:.6g})", report)
    best = min(matches, key=lambda c: abs(c.mu - sigma))
    meta = dict(best.meta)
    meta.update(res=report.res_value, unstable=report.res_value < RESONANCE_THRESHOLD,
                n_matches=len(matches))
    best = replace(best, meta=meta)
    return normalize_sign(best, best.mesh) if normalize else best


def compute_target_mode(spec: DomainSpec, n_y: int = 129, m: int = 6, seed: int = 0,
                        ordering: str = "mmd", max_m: int = 24):
    """Mesh, assemble, solve near the shift and select the target mode.

    The candidate count doubles (up to ``max_m``) while no candidate has the
    target signature.

    Returns
    -------
    mesh : Mesh
    system : System
    solution : EigenSolution
    candidates : list of EigenSolution
    """
    mesh = build_mesh(spec, n_y)
    system = assemble(mesh)
    sigma = target_shift(spec.N)
    fac = factorize_shifted(system.K, system.M, sigma, ordering=ordering)
    k = m
    last_exc = None
    while True:
        cands = solve_near(system, sigma, m=k, seed=seed, factorization=fac)
        cands = [replace(c, signature=mode_signature(c.field)) for c in cands]
        try:
            sol = select_mode(cands, spec)
            return mesh, system, sol, cands
        except SelectionError as exc:
            last_exc = exc
            if k >= max_m:
                raise last_exc
            k = min(2 * k, max_m)


def write_spectrum(solutions: Sequence[EigenSolution], path) -> Path:
    """CSV of ``index, position, mu, residual, dominant_k, x_changes, y_changes, match``."""
    path = Path(path)
    with path.open("w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "position", "mu", "residual", "dominant_k", "x_changes",
                    "y_changes", "match"])
        for i, s in enumerate(solutions):
            sig = s.signature or mode_signature(s.field)
            w.writerow([i, s.position_index if s.position_index is not None else "NA",
                        repr(s.mu), f"{s.residual:.3e}", sig.dominant_k, sig.x_changes,
                        sig.y_changes, int(sig.matches_target)])
    return path

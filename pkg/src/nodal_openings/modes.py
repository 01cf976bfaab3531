"""Slice Fourier modes, closed trigonometric forms and resonance diagnostics.

For a field ``v`` on the domain the slice modes are

    v_k(x) = 2 * int_0^1 v(x, y) sin(k pi y) dy,

with ``v`` extended by zero outside the domain. Away from the ends, ``v_1``
and ``v_2`` follow ``v_k'' = -(mu - k^2 pi^2) v_k``, so on the fit window
they are combinations of ``cos(mu_k x)`` and ``sin(mu_k x)`` with
``mu_k^2 = mu - k^2 pi^2``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from .errors import ResonanceError, SignatureError
from .geometry import DomainSpec, shape_integral
from .mesh import Mesh, NodalField, interpolate_field

DEFAULT_K_MAX = 8
DEFAULT_NY_SAMPLES = 513
RESONANCE_SIN_TOL = 1e-6


# resonance -------------------------------------------------------------------

@dataclass(frozen=True)
class ResonanceReport:
    """Distance of ``N`` from the resonant aspect ratios.

    ``res_value = min_k |3 + 4/N^2 - k^2/N^2|`` and ``N_k = sqrt((k^2-4)/3)``.
    """

    N: float
    res_value: float
    argmin_k: int
    nearby_resonant_N: tuple[float, ...]

    @property
    def nearest_resonant(self) -> float:
        return min(self.nearby_resonant_N, key=lambda r: abs(r - self.N))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["nearby_resonant_N"] = list(self.nearby_resonant_N)
        return d


def resonant_N(k: int) -> float:
    """Root ``N_k`` of ``3 + 4/N^2 - k^2/N^2`` (requires ``k >= 3``)."""
    if k < 3:
        raise ValueError("resonant aspect ratios exist only for k >= 3")
    return math.sqrt((k * k - 4) / 3.0)


def _k_upper(N: float, k_max: int | None) -> int:
    # k^2 near 3 N^2 + 4 is where the minimum sits; go a little beyond
    auto = int(math.ceil(math.sqrt(3 * N * N + 4))) + 2
    return max(3, auto if k_max is None else k_max)


def res_value(N, k_max: int | None = None):
    """``min_k |3 + 4/N^2 - k^2/N^2|`` over ``k = 1..k_max``; array-aware."""
    Na = np.atleast_1d(np.asarray(N, dtype=float))
    kk = np.arange(1, _k_upper(float(Na.max()), k_max) + 1)
    vals = np.abs(3 + 4 / Na[:, None] ** 2 - kk[None, :] ** 2 / Na[:, None] ** 2)
    out = vals.min(axis=1)
    return float(out[0]) if np.ndim(N) == 0 else out


def resonance_report(N: float, k_max: int | None = None) -> ResonanceReport:
    kmax = _k_upper(N, k_max)
    kk = np.arange(1, kmax + 1)
    vals = np.abs(3 + 4 / N**2 - kk**2 / N**2)
    roots = tuple(resonant_N(k) for k in range(3, kmax + 1))
    return ResonanceReport(float(N), float(vals.min()), int(kk[np.argmin(vals)]), roots)


@dataclass(frozen=True)
class ResonanceScan:
    N_grid: np.ndarray
    res: np.ndarray
    roots: tuple[tuple[int, float], ...]
    reports: tuple[ResonanceReport, ...] = field(default=(), repr=False)


def resonance_scan(N_lo: float, N_hi: float, k_max: int = 12,
                   spacing: float = 1e-3, with_reports: bool = False) -> ResonanceScan:
    """Evaluate ``res(N)`` on a grid and list the exact roots in range."""
    if not (1 < N_lo < N_hi < 100):
        raise ValueError("require 1 < N_lo < N_hi < 100")
    n = int(round((N_hi - N_lo) / spacing)) + 1
    grid = np.linspace(N_lo, N_hi, n)
    res = res_value(grid, k_max)
    roots = tuple((k, resonant_N(k)) for k in range(3, k_max + 1)
                  if N_lo <= resonant_N(k) <= N_hi)
    reports = tuple(resonance_report(float(g), k_max) for g in grid) if with_reports else ()
    return ResonanceScan(grid, res, roots, reports)


# Hadamard predictor -----------------------------------------------------------

def hadamard_predict(spec: DomainSpec, k: int, convention: str = "literal") -> float:
    """First-order prediction of ``v_k(0)``.

    ``convention="literal"`` gives ``(4 pi eta / N) I_k``.
    ``convention="sign_corrected"`` gives ``-(4 pi eta / N) I_k``, the sign
    obtained from ``v(0, y) ~ -eta phi(y) dv/dx(0, y)`` for the normalized
    mode (``dv/dx(0, y) ~ (2 pi / N) sin(2 pi y)``). The exactly solvable case
    ``phi = -1`` (a rectangle ``[-eta, N]``) has ``v_2(0) = sin(2 pi eta/(N+eta)) > 0``,
    which only the corrected sign reproduces.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if spec.eta == 0:
        return 0.0
    base = 4 * math.pi * spec.eta / spec.N * shape_integral(spec.profile, k)
    if convention == "literal":
        return base
    if convention == "sign_corrected":
        return -base
    raise ValueError(f"unknown convention {convention!r}")


# sign normalization ------------------------------------------------------------

QUADRANT_POINTS = ((0.25, 0.25, +1), (0.75, 0.25, -1), (0.25, 0.75, -1), (0.75, 0.75, +1))


def quadrant_signs(fld: NodalField) -> tuple[int, int, int, int]:
    """Signs at ``(N/4,1/4), (3N/4,1/4), (N/4,3/4), (3N/4,3/4)``."""
    N = fld.mesh.spec.N
    pts = np.array([[fx * N, fy] for fx, fy, _ in QUADRANT_POINTS])
    return tuple(int(s) for s in np.sign(interpolate_field(fld, pts)))


def normalize_sign(solution, mesh: Mesh | None = None):
    """Scale to ``max|v| = 1`` with ``v(N/4, 1/4) > 0`` and check the quadrants.

    Raises
    ------
    SignatureError
        If the quadrant signs are not ``(+, -, -, +)`` in the order of
        :func:`quadrant_signs`.
    """
    fld = solution.field
    if mesh is not None and mesh is not fld.mesh:
        fld = NodalField(fld.values, mesh)
    vals = fld.values / np.max(np.abs(fld.values))
    fld = NodalField(vals, fld.mesh)
    if interpolate_field(fld, np.array([fld.mesh.spec.N / 4, 0.25])) < 0:
        fld = fld.scaled(-1.0)
    signs = quadrant_signs(fld)
    want = tuple(s for _, _, s in QUADRANT_POINTS)
    if signs != want:
        raise SignatureError(f"quadrant signs {signs} differ from {want}")
    return replace(solution, field=fld)


# slice modes -------------------------------------------------------------------

@dataclass
class ModeDecomposition:
    """Sampled slice modes and fitted closed-form constants.

    Attributes
    ----------
    x_grid : ndarray
    v : ndarray, shape (k_max, n_x)
        ``v[k-1]`` holds the samples of ``v_k``.
    """

    N: float
    eta: float
    x_grid: np.ndarray
    v: np.ndarray
    mu: float
    h: float
    E_sup: float
    B_sup: float
    parseval_excess: float
    k_max: int = DEFAULT_K_MAX
    A1: float = math.nan
    A2: float = math.nan
    c1_fit: float = math.nan
    c2_fit: float = math.nan
    x_star: float = math.nan
    window: tuple[float, float] = (math.nan, math.nan)
    fit_residual_v1: float = math.nan
    fit_residual_v2: float = math.nan
    v2_vs_sine_sup: float = math.nan
    ode_residual: dict = field(default_factory=dict)
    v1_center_fit: float = math.nan
    v1_center_identity: float = math.nan
    identity_defect: float = math.nan
    dv2_center: float = math.nan
    sin_mu1_N: float = math.nan
    higher_mode_sup: dict = field(default_factory=dict)

    @property
    def mu1(self) -> float:
        return math.sqrt(self.mu - math.pi**2)

    @property
    def mu2(self) -> float:
        if self.mu <= 4 * math.pi**2:
            raise ValueError("mu <= 4 pi^2: mu2 is not real")
        return math.sqrt(self.mu - 4 * math.pi**2)

    def mode(self, k: int) -> np.ndarray:
        return self.v[k - 1]

    def value_at(self, k: int, x: float) -> float:
        return float(np.interp(x, self.x_grid, self.v[k - 1]))

    @property
    def v1_at_0(self) -> float:
        return float(self.v[0, 0])

    @property
    def v1_at_0_fit(self) -> float:
        """Intercept of the fitted ``v_1`` closed form at ``x = 0``."""
        return self.c1_fit

    @property
    def v2_at_0(self) -> float:
        return float(self.v[1, 0])

    @property
    def v1_at_center(self) -> float:
        return self.value_at(1, self.N / 2)

    def v_fit(self, k: int, x):
        """Fitted closed form for ``k`` in ``{1, 2}``."""
        x = np.asarray(x, dtype=float)
        if k == 1:
            return self.c1_fit * np.cos(self.mu1 * x) + self.A1 * np.sin(self.mu1 * x)
        if k == 2:
            return self.c2_fit * np.cos(self.mu2 * x) + self.A2 * np.sin(self.mu2 * x)
        raise ValueError("closed forms are fitted for k = 1, 2 only")

    def summary(self, spec: DomainSpec | None = None) -> dict:
        out = {
            "mu": self.mu, "mu1": self.mu1, "mu2": self.mu2, "A1": self.A1, "A2": self.A2,
            "x_star": self.x_star, "v1_at_0": self.v1_at_0, "v1_at_0_fit": self.c1_fit, "v2_at_0": self.v2_at_0,
            "v1_at_center": self.v1_at_center, "E_sup": self.E_sup, "B_sup": self.B_sup,
            "fit_residual_v1": self.fit_residual_v1, "fit_residual_v2": self.fit_residual_v2,
            "v2_vs_sine_sup": self.v2_vs_sine_sup, "identity_defect": self.identity_defect,
            "sin_mu1_N": self.sin_mu1_N, "ode_residual": dict(self.ode_residual),
        }
        if spec is not None:
            out["predictor_v1_at_0"] = hadamard_predict(spec, 1)
            out["predictor_v1_at_0_sign_corrected"] = hadamard_predict(spec, 1, "sign_corrected")
        return out

    def write_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="", encoding="ascii") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x"] + [f"v{k}" for k in range(1, self.k_max + 1)])
            for i, x in enumerate(self.x_grid):
                w.writerow([repr(float(x))] + [repr(float(c)) for c in self.v[:, i]])
        return path

    def write_json(self, path, spec: DomainSpec | None = None) -> Path:
        path = Path(path)
        path.write_text(json.dumps(_jsonable(self.summary(spec)), indent=2, sort_keys=True) + "\n")
        return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _simpson(n: int) -> np.ndarray:
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w / (3.0 * (n - 1))


def slice_modes(solution, mesh: Mesh | None = None, k_max: int = DEFAULT_K_MAX,
                n_x_samples: int | None = None,
                n_y_samples: int = DEFAULT_NY_SAMPLES) -> ModeDecomposition:
    """Sample ``v_k(x)`` for ``k = 1..k_max`` by composite Simpson in ``y``.

    The default abscissae coincide with the mesh columns of the
    undeformed part, extended uniformly down to ``x = 0``.
    """
    fld = solution.field if hasattr(solution, "field") else solution
    mesh = mesh or fld.mesh
    if n_y_samples < 513 or n_y_samples % 2 == 0:
        raise ValueError("n_y_samples must be odd and >= 513")
    spec = mesh.spec
    N = spec.N
    nx = n_x_samples or mesh.logical_dims[0]
    x = np.linspace(0.0, N, nx)
    y = np.linspace(0.0, 1.0, n_y_samples)
    X, Y = np.meshgrid(x, y, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    # zero extension where the slice leaves the domain (x < eta*phi(y))
    V = interpolate_field(fld, pts, fill_value=0.0, strict=True).reshape(X.shape)
    left = np.asarray(spec.left(y), dtype=float)
    V = np.where(X < left[None, :] - 1e-12, 0.0, V)
    w = _simpson(n_y_samples)
    ks = np.arange(1, k_max + 1)
    S = np.sin(np.pi * ks[:, None] * y[None, :])
    vk = 2.0 * (S * w[None, :]) @ V.T
    B = V - vk[1][:, None] * S[1][None, :]
    E = B - vk[0][:, None] * S[0][None, :]
    parseval = 0.5 * np.sum(vk**2, axis=0) - np.max(V**2, axis=1)
    mu = float(solution.mu) if hasattr(solution, "mu") else math.nan
    dec = ModeDecomposition(N=N, eta=spec.eta, x_grid=x, v=vk, mu=mu, h=mesh.h,
                            E_sup=float(np.max(np.abs(E))), B_sup=float(np.max(np.abs(B))),
                            parseval_excess=float(parseval.max()), k_max=k_max)
    return dec


def default_fit_window(N: float) -> tuple[float, float]:
    """``[w, N - w]`` with ``w = min(1, N/4)``."""
    w = min(1.0, N / 4)
    return (w, N - w)


def fit_trig_forms(dec: ModeDecomposition, window: tuple[float, float] | None = None,
                   check_resonance: bool = True) -> ModeDecomposition:
    """Least-squares fit of the closed forms for ``v_1`` and ``v_2``.

    Also records the zero ``x_star`` of the fitted ``v_2`` near ``N/2``,
    second-difference ODE residuals, and the defect of the centre identity
    ``v_1(N/2) = v_1(0) / (2 cos(mu_1 N / 2))``.

    Raises
    ------
    ResonanceError
        If ``|sin(mu_1 N)| <= 1e-6``.
    """
    N = dec.N
    mu1, mu2 = dec.mu1, dec.mu2
    s1 = math.sin(mu1 * N)
    if check_resonance and abs(s1) <= RESONANCE_SIN_TOL:
        raise ResonanceError(f"|sin(mu1 N)| = {abs(s1):.3g} is resonant", resonance_report(N))
    lo, hi = window or default_fit_window(N)
    x = dec.x_grid
    sel = (x >= lo - 1e-12) & (x <= hi + 1e-12)
    if np.count_nonzero(sel) < 4:
        raise ValueError("fit window holds fewer than 4 samples")
    xs = x[sel]
    out = {}
    for k, mk in ((1, mu1), (2, mu2)):
        A = np.column_stack([np.cos(mk * xs), np.sin(mk * xs)])
        coef, *_ = np.linalg.lstsq(A, dec.v[k - 1, sel], rcond=None)
        out[k] = coef
        resid = float(np.max(np.abs(A @ coef - dec.v[k - 1, sel])))
        out[f"r{k}"] = resid
    dec = replace(dec, c1_fit=float(out[1][0]), A1=float(out[1][1]),
                  c2_fit=float(out[2][0]), A2=float(out[2][1]),
                  window=(lo, hi), fit_residual_v1=out["r1"], fit_residual_v2=out["r2"],
                  sin_mu1_N=abs(s1))

    # zero of the fitted v2 near the centre (the sine form vanishes there at eta = 0)
    half = min(1.0, N / 4)
    f = lambda t: float(dec.v_fit(2, t))  # noqa: E731
    a, b = N / 2 - half, N / 2 + half
    if f(a) * f(b) < 0:
        x_star = brentq(f, a, b, xtol=1e-12, rtol=4 * np.finfo(float).eps)
    elif f(N / 2) == 0:
        x_star = N / 2
    else:
        x_star = math.nan

    # ODE check by second differences on the window
    dx = x[1] - x[0]
    ode = {}
    for k in (1, 2):
        vk = dec.v[k - 1]
        d2 = (vk[2:] - 2 * vk[1:-1] + vk[:-2]) / dx**2
        inner = sel[1:-1]
        scale = max(float(np.max(np.abs(vk[sel]))), 1e-300)
        ode[k] = float(np.max(np.abs(d2[inner] + (dec.mu - (k * math.pi) ** 2) * vk[1:-1][inner])))
        ode[f"{k}_relative"] = ode[k] / (scale * abs(dec.mu - (k * math.pi) ** 2))

    # the identity uses the closed-form constant v_1(0), i.e. the fitted intercept
    c = math.cos(mu1 * N / 2)
    v1_center_identity = dec.c1_fit / (2 * c) if c != 0 else math.nan
    v1_center_fit = float(dec.v_fit(1, N / 2))
    if abs(dec.v1_at_center) > 1e-10:
        identity_defect = abs(v1_center_identity - dec.v1_at_center) / abs(dec.v1_at_center)
    else:
        identity_defect = math.nan
    sine = np.sin(2 * math.pi * x / N)
    higher = {k: float(np.max(np.abs(dec.v[k - 1, sel]))) for k in range(3, dec.k_max + 1)}
    return replace(dec, x_star=float(x_star), ode_residual=ode,
                   v1_center_fit=v1_center_fit, v1_center_identity=v1_center_identity,
                   identity_defect=float(identity_defect),
                   dv2_center=float(mu2 * (-dec.c2_fit * math.sin(mu2 * N / 2)
                                           + dec.A2 * math.cos(mu2 * N / 2))),
                   v2_vs_sine_sup=float(np.max(np.abs(dec.v[1] - sine))),
                   higher_mode_sup=higher)


def analyze_modes(solution, mesh: Mesh | None = None, **kw) -> ModeDecomposition:
    """:func:`slice_modes` followed by :func:`fit_trig_forms`."""
    fit_kw = {k: kw.pop(k) for k in ("window", "check_resonance") if k in kw}
    return fit_trig_forms(slice_modes(solution, mesh, **kw), **fit_kw)

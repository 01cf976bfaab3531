"""Boundary profiles for the perturbed left side and the domains they define.

The domain is ``{(x, y) : 0 <= y <= 1, eta * phi(y) <= x <= N}`` where ``phi``
is a :class:`BoundaryProfile`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import DomainError, GeometryError, NumericalError

SMOOTHNESS_CLASSES = ("C5", "Lipschitz")
PROFILE_KINDS = ("sinusoid", "hat", "bump", "polynomial", "tabulated")

_VALIDATION_GRID = 4096
_QUAD_TOL = 1e-10
_QUAD_ORDER = 10
_QUAD_MAX_DOUBLINGS = 20


@dataclass(frozen=True)
class BoundaryProfile:
    """Left-boundary shape ``phi`` on ``[0, 1]``.

    Use the classmethod constructors rather than filling fields by hand; each
    kind only reads the fields relevant to it.
    """

    kind: str
    frequency: int = 0
    phase: str = "sin"
    centers: tuple[float, ...] = ()
    radius: float = 0.0
    amplitudes: tuple[float, ...] = ()
    coefficients: tuple[float, ...] = ()
    values: tuple[float, ...] = ()
    smoothness_class: str = "C5"

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise ValueError(f"unknown profile kind {self.kind!r}")
        if self.smoothness_class not in SMOOTHNESS_CLASSES:
            raise ValueError(f"unknown smoothness class {self.smoothness_class!r}")
        if self.kind == "sinusoid" and self.phase not in ("sin", "cos"):
            raise ValueError("sinusoid phase must be 'sin' or 'cos'")
        if self.kind in ("hat", "bump"):
            if self.radius <= 0:
                raise ValueError("hat/bump radius must be positive")
            if len(self.amplitudes) != len(self.centers):
                raise ValueError("one amplitude per center required")
        if self.kind == "tabulated" and len(self.values) < 2:
            raise ValueError("tabulated profile needs at least two samples")

    # constructors -------------------------------------------------------
    @classmethod
    def sinusoid(cls, frequency: int, phase: str = "sin", smoothness_class: str = "Lipschitz"):
        """``sin(frequency*pi*y)`` or ``cos(frequency*pi*y)``."""
        return cls("sinusoid", frequency=int(frequency), phase=phase,
                   smoothness_class=smoothness_class)

    @classmethod
    def hat(cls, centers, radius, amplitudes=None, smoothness_class="Lipschitz"):
        """Sum of triangular pulses of half-width ``radius``."""
        centers = tuple(float(c) for c in centers)
        amplitudes = tuple(float(a) for a in (amplitudes or [1.0] * len(centers)))
        return cls("hat", centers=centers, radius=float(radius), amplitudes=amplitudes,
                   smoothness_class=smoothness_class)

    @classmethod
    def bump(cls, centers, radius, amplitudes=None, smoothness_class="Lipschitz"):
        """Sum of sine crests ``cos(pi*(y-c)/(2r))`` supported on ``|y-c| <= r``."""
        centers = tuple(float(c) for c in centers)
        amplitudes = tuple(float(a) for a in (amplitudes or [1.0] * len(centers)))
        return cls("bump", centers=centers, radius=float(radius), amplitudes=amplitudes,
                   smoothness_class=smoothness_class)

    @classmethod
    def polynomial(cls, coefficients, smoothness_class="C5"):
        """Polynomial with coefficients in increasing powers of ``y``."""
        return cls("polynomial", coefficients=tuple(float(c) for c in coefficients),
                   smoothness_class=smoothness_class)

    @classmethod
    def zero(cls):
        return cls.polynomial(())

    @classmethod
    def tabulated(cls, values, smoothness_class="Lipschitz"):
        """Samples on the uniform grid ``linspace(0, 1, len(values))``."""
        return cls("tabulated", values=tuple(float(v) for v in values),
                   smoothness_class=smoothness_class)

    # evaluation ---------------------------------------------------------
    def __call__(self, y):
        return eval_profile(self, y)

    def derivative(self, y, order: int = 1):
        """Derivative of the given order.

        Exact for sinusoids and polynomials. Hats, bumps and tabulated data
        use centred finite differences on a fine grid (one-sided at the ends).
        """
        y = np.asarray(y, dtype=float)
        if self.kind == "sinusoid":
            w = self.frequency * math.pi
            # d^j/dy^j sin(w y) = w^j sin(w y + j pi/2)
            shift = order * math.pi / 2 + (math.pi / 2 if self.phase == "cos" else 0.0)
            return w**order * np.sin(w * y + shift)
        if self.kind == "polynomial":
            p = np.polynomial.Polynomial(self.coefficients or (0.0,))
            return p.deriv(order)(y) if order <= p.degree() else np.zeros_like(y)
        return _fd_derivative(self, y, order)

    def kinks(self) -> tuple[float, ...]:
        """Abscissae in ``(0, 1)`` where the profile is not smooth."""
        if self.kind in ("hat", "bump"):
            pts = []
            for c in self.centers:
                pts.extend([c - self.radius, c + self.radius])
                if self.kind == "hat":
                    pts.append(c)
            return tuple(sorted({p for p in pts if 0.0 < p < 1.0}))
        if self.kind == "tabulated":
            return tuple(np.linspace(0.0, 1.0, len(self.values))[1:-1])
        return ()

    def identifier(self) -> str:
        """Short stable label used in reports."""
        if self.kind == "sinusoid":
            return f"{self.phase}{self.frequency}"
        if self.kind in ("hat", "bump"):
            cs = ",".join(f"{c:g}" for c in self.centers)
            return f"{self.kind}[{cs}]r{self.radius:g}"
        if self.kind == "polynomial":
            return "zero" if not any(self.coefficients) else f"poly{len(self.coefficients) - 1}"
        return f"tab{len(self.values)}"

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"kind": self.kind, "smoothness_class": self.smoothness_class}
        if self.kind == "sinusoid":
            d.update(frequency=self.frequency, phase=self.phase)
        elif self.kind in ("hat", "bump"):
            d.update(centers=list(self.centers), radius=self.radius,
                     amplitudes=list(self.amplitudes))
        elif self.kind == "polynomial":
            d.update(coefficients=list(self.coefficients))
        else:
            d.update(values=list(self.values))
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "BoundaryProfile":
        d = dict(d)
        kind = d.pop("kind")
        sc = d.pop("smoothness_class", None)
        if kind == "sinusoid":
            return cls.sinusoid(d["frequency"], d.get("phase", "sin"), sc or "Lipschitz")
        if kind in ("hat", "bump"):
            ctor = cls.hat if kind == "hat" else cls.bump
            return ctor(d["centers"], d["radius"], d.get("amplitudes"), sc or "Lipschitz")
        if kind == "polynomial":
            return cls.polynomial(d.get("coefficients", ()), sc or "C5")
        if kind == "zero":
            return cls.zero()
        if kind == "tabulated":
            return cls.tabulated(d["values"], sc or "Lipschitz")
        raise ValueError(f"unknown profile kind {kind!r}")


@dataclass(frozen=True)
class DomainSpec:
    """Aspect ratio ``N``, amplitude ``eta`` and the left-boundary profile."""

    N: float
    eta: float
    profile: BoundaryProfile = field(default_factory=BoundaryProfile.zero)

    def __post_init__(self):
        if not self.N > 1:
            raise ValueError(f"aspect ratio must exceed 1, got {self.N}")
        if self.eta < 0:
            raise ValueError(f"eta must be non-negative, got {self.eta}")

    def left(self, y):
        """x-coordinate of the left boundary at height ``y``."""
        if self.eta == 0:
            return np.zeros_like(np.asarray(y, dtype=float))
        return self.eta * eval_profile(self.profile, y)

    @property
    def center(self) -> tuple[float, float]:
        return (self.N / 2, 0.5)

    @property
    def sigma(self) -> float:
        """Eigenvalue of sin(2 pi x/N) sin(2 pi y) on the unperturbed rectangle."""
        return 4 * math.pi**2 * (1 / self.N**2 + 1)

    def to_dict(self) -> dict[str, Any]:
        return {"N": self.N, "eta": self.eta, "profile": self.profile.to_dict()}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "DomainSpec":
        prof = d.get("profile")
        prof = BoundaryProfile.from_dict(prof) if prof else BoundaryProfile.zero()
        return cls(float(d["N"]), float(d.get("eta", 0.0)), prof)


@dataclass
class ValidationReport:
    violations: list[str]
    lipschitz_estimate: float

    @property
    def ok(self) -> bool:
        return not self.violations


def eval_profile(profile: BoundaryProfile, y):
    """Evaluate ``phi(y)``; ``y`` may be a scalar or array inside ``[0, 1]``."""
    ya = np.asarray(y, dtype=float)
    if np.any(ya < -1e-12) or np.any(ya > 1 + 1e-12) or np.any(~np.isfinite(ya)):
        raise DomainError("profile evaluated outside [0, 1]")
    ya = np.clip(ya, 0.0, 1.0)
    kind = profile.kind
    if kind == "sinusoid":
        w = profile.frequency * math.pi
        out = np.sin(w * ya) if profile.phase == "sin" else np.cos(w * ya)
    elif kind == "polynomial":
        out = np.polynomial.polynomial.polyval(ya, profile.coefficients or (0.0,))
        out = out + 0.0 * ya
    elif kind == "hat":
        out = np.zeros_like(ya)
        for c, a in zip(profile.centers, profile.amplitudes):
            out = out + a * np.maximum(0.0, 1.0 - np.abs(ya - c) / profile.radius)
    elif kind == "bump":
        out = np.zeros_like(ya)
        for c, a in zip(profile.centers, profile.amplitudes):
            t = (ya - c) / profile.radius
            out = out + np.where(np.abs(t) <= 1.0, a * np.cos(0.5 * math.pi * t), 0.0)
    else:
        grid = np.linspace(0.0, 1.0, len(profile.values))
        out = np.interp(ya, grid, profile.values)
    if np.ndim(y) == 0:
        return float(out)
    return out


def _fd_derivative(profile: BoundaryProfile, y, order: int):
    # finite differences of the sampled profile on the validation grid
    grid = np.linspace(0.0, 1.0, _VALIDATION_GRID)
    d = np.asarray(eval_profile(profile, grid), dtype=float)
    for _ in range(order):
        d = np.gradient(d, grid, edge_order=1)
    return np.interp(y, grid, d)


def validate_profile(spec: DomainSpec | BoundaryProfile) -> ValidationReport:
    """List the constraints the profile violates for its declared class."""
    profile = spec.profile if isinstance(spec, DomainSpec) else spec
    y = np.linspace(0.0, 1.0, _VALIDATION_GRID)
    phi = np.asarray(eval_profile(profile, y))
    tol = 1e-12
    violations = []
    lip = float(np.max(np.abs(np.diff(phi)) / np.diff(y))) if len(y) > 1 else 0.0
    if not np.all(np.isfinite(phi)):
        violations.append("non-finite values")
    if profile.smoothness_class == "C5":
        if abs(phi[0]) > tol or abs(phi[-1]) > tol:
            violations.append("endpoint: phi(0) and phi(1) must vanish")
        if phi.max() > tol or phi.min() < -1 - tol:
            violations.append(f"range: phi must lie in [-1, 0] (got [{phi.min():.4g}, {phi.max():.4g}])")
        if profile.kinks() and profile.kind != "tabulated":
            violations.append("smoothness: profile has kinks, not C5")
        for j in range(1, 6):
            dj = np.max(np.abs(profile.derivative(y, j)))
            if dj > 1 + 1e-9:
                violations.append(f"derivative bound: max|phi^({j})| = {dj:.4g} > 1")
    else:
        if phi.max() > 1 + tol or phi.min() < -1 - tol:
            violations.append(f"range: phi must lie in [-1, 1] (got [{phi.min():.4g}, {phi.max():.4g}])")
        if not np.isfinite(lip):
            violations.append("Lipschitz bound is not finite")
    if isinstance(spec, DomainSpec) and spec.eta * np.max(np.abs(phi)) >= spec.N:
        violations.append("domain: eta*|phi| must stay below N")
    return ValidationReport(violations, lip)


def _breakpoints(profile: BoundaryProfile) -> np.ndarray:
    return np.unique(np.concatenate([[0.0, 1.0], profile.kinks()]))


def integrate_profile(profile: BoundaryProfile, weight, tol: float = _QUAD_TOL) -> float:
    """``int_0^1 phi(y) weight(y) dy`` by composite Gauss-Legendre.

    Panels are aligned with the profile kinks and halved until two
    successive results agree to ``tol``.
    """
    nodes, wts = np.polynomial.legendre.leggauss(_QUAD_ORDER)
    edges = _breakpoints(profile)
    prev = None
    for level in range(_QUAD_MAX_DOUBLINGS + 1):
        m = 2**level
        a = np.concatenate([np.linspace(l, r, m + 1)[:-1] for l, r in zip(edges[:-1], edges[1:])])
        b = np.concatenate([np.linspace(l, r, m + 1)[1:] for l, r in zip(edges[:-1], edges[1:])])
        half = 0.5 * (b - a)
        pts = (0.5 * (a + b))[:, None] + half[:, None] * nodes[None, :]
        pts = np.clip(pts, 0.0, 1.0)
        vals = np.asarray(eval_profile(profile, pts)) * weight(pts)
        total = float(np.sum(half * (vals @ wts)))
        if prev is not None and abs(total - prev) < tol:
            return total
        prev = total
    raise NumericalError("shape integral quadrature did not converge")


def shape_integral(profile: BoundaryProfile, k: int) -> float:
    """``I_k = int_0^1 phi(y) sin(2 pi y) sin(k pi y) dy``."""
    if k < 1:
        raise ValueError("mode index k must be >= 1")
    return integrate_profile(
        profile, lambda y: np.sin(2 * math.pi * y) * np.sin(k * math.pi * y))


def shape_integrals(profile: BoundaryProfile, k_max: int = 8) -> dict[int, float]:
    return {k: shape_integral(profile, k) for k in range(1, k_max + 1)}


def symmetry_defect(profile: BoundaryProfile) -> float:
    """``sup |phi(y) - phi(1 - y)|`` over the validation grid."""
    y = np.linspace(0.0, 1.0, _VALIDATION_GRID)
    return float(np.max(np.abs(eval_profile(profile, y) - eval_profile(profile, 1.0 - y))))


def boundary_polyline(spec: DomainSpec, step: float = 1e-3) -> np.ndarray:
    """Closed counterclockwise polygon of the domain (first vertex not repeated).

    The left side is sampled every ``step`` in ``y`` plus at each kink,
    the other three sides are straight.
    """
    if not 0 < step <= 0.01:
        raise ValueError("step must lie in (0, 0.01]")
    n = int(math.ceil(1.0 / step - 1e-9))
    ys = np.unique(np.concatenate([np.linspace(0.0, 1.0, n + 1), spec.profile.kinks()]))
    xs = np.asarray(spec.left(ys), dtype=float)
    if np.any(xs >= spec.N):
        raise GeometryError("left boundary reaches the right side; polygon self-intersects")
    left = np.column_stack([xs, ys])[::-1]  # top to bottom
    poly = np.vstack([left[-1:], [[spec.N, 0.0], [spec.N, 1.0]], left[:-1]])
    return poly


def polygon_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))

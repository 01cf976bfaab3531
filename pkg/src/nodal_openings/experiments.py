"""Experiment campaigns: configuration, per-run pipeline and persisted reports.

A campaign is described by one TOML file::

    experiment = "eta_scan"          # single | eta_scan | n_scan | resonance_sweep | table1
    N = 2.886751345948129
    eta = 0.04
    eta_list = [0.02, 0.04, 0.08]
    [profile]
    kind = "sinusoid"
    frequency = 6
    phase = "sin"
    [resolution]
    n_y = 129                        # or h = 0.01
    [solver]
    m = 6
    seed = 0
    [output]
    directory = "out"
    formats = ["csv", "json"]

Every key may be overridden from the command line.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, NodalOpeningsError, ResonanceError
from .geometry import BoundaryProfile, DomainSpec
from .mesh import min_angle, ny_for_h
from .modes import analyze_modes, hadamard_predict, res_value, resonance_report
from .nodal import (boundary_angles, component_count, extract_nodal_set,
                    local_quadratic_model, measure_gap, raster_component_count)
from .spectral import RESONANCE_THRESHOLD, compute_target_mode

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
EXPERIMENTS = ("single", "eta_scan", "n_scan", "resonance_sweep", "table1")
OUTPUT_ROOT_ENV = "NODAL_OUTPUT_ROOT"
LARGE_TIER_ENV = "NODAL_LARGE_TIER"

# aspect ratios, gaps and eigenvalues of the reference table (eta = 0.5, sin 6 pi y)
TABLE1 = (
    (4.7741, 0.0552, 41.1558, False),
    (10.0400, 0.0447, 39.8550, False),
    (18.7350, 0.0545, 39.5699, True),
    (36.0785, 0.0480, 39.4881, True),
)
TABLE1_H = 3.16e-3


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "single"
    N: float = 5 / math.sqrt(3)
    eta: float = 0.04
    profile: dict = field(default_factory=lambda: BoundaryProfile.sinusoid(6).to_dict())
    n_y: int | None = 129
    h: float | None = None
    m: int = 6
    seed: int = 0
    ordering: str = "mmd"
    eta_list: tuple[float, ...] = ()
    N_list: tuple[float, ...] = ()
    N_range: tuple[float, float] | None = None
    n_points: int = 7
    allow_resonant: bool = False
    large_tier: bool = False
    with_raster: bool = True
    workers: int = 1
    output_dir: str = "out"
    formats: tuple[str, ...] = ("csv", "json")
    label: str = ""

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        for name in ("eta_list", "N_list"):
            vals = getattr(self, name)
            if list(vals) != sorted(vals):
                raise ConfigError(f"{name} must be sorted")
        if self.experiment == "eta_scan" and not self.eta_list:
            raise ConfigError("eta_scan needs a nonempty eta_list")
        if self.experiment == "n_scan" and not self.N_list:
            raise ConfigError("n_scan needs a nonempty N_list")
        if self.experiment == "resonance_sweep" and self.N_range is None:
            raise ConfigError("resonance_sweep needs N_range")
        if self.n_y is None and self.h is None:
            raise ConfigError("resolution needs n_y or h")
        bad = set(self.formats) - {"csv", "json"}
        if bad:
            raise ConfigError(f"unknown output formats {sorted(bad)}")
        try:
            self.domain()
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"invalid domain: {exc}") from exc

    def domain(self, N: float | None = None, eta: float | None = None) -> DomainSpec:
        return DomainSpec(float(self.N if N is None else N), float(self.eta if eta is None else eta),
                          BoundaryProfile.from_dict(dict(self.profile)))

    def resolution(self, N: float) -> int:
        if self.h is not None:
            return ny_for_h(N, self.h)
        return int(self.n_y)

    def output_path(self) -> Path:
        root = os.environ.get(OUTPUT_ROOT_ENV)
        p = Path(self.output_dir)
        return p if p.is_absolute() or not root else Path(root) / p


_SECTIONS = {
    "resolution": ("n_y", "h"),
    "solver": ("m", "seed", "ordering", "workers"),
    "output": ("directory", "formats"),
}


def config_from_dict(data: dict, overrides: dict | None = None) -> ExperimentConfig:
    """Flatten the TOML layout into an :class:`ExperimentConfig`."""
    flat = {}
    for k, v in data.items():
        if k in _SECTIONS and isinstance(v, dict):
            for kk, vv in v.items():
                if kk not in _SECTIONS[k]:
                    raise ConfigError(f"unknown key {k}.{kk}")
                flat["output_dir" if kk == "directory" else kk] = vv
        else:
            flat[k] = v
    if "h" in flat and "n_y" not in flat:
        flat["n_y"] = None
    flat.update({k: v for k, v in (overrides or {}).items() if v is not None})
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(flat) - known
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    for k in ("eta_list", "N_list", "formats"):
        if k in flat:
            flat[k] = tuple(flat[k])
    if flat.get("N_range") is not None:
        lo, hi = flat["N_range"]
        flat["N_range"] = (float(lo), float(hi))
    return ExperimentConfig(**flat)


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    try:
        with Path(path).open("rb") as fh:
            data = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(data, overrides)


# reports ---------------------------------------------------------------------

@dataclass
class RunReport:
    """One pipeline run. ``None`` marks a value that does not apply."""

    label: str
    N: float
    eta: float
    profile: str
    n_y: int
    status: str = "ok"
    error: str | None = None
    h: float | None = None
    min_angle: float | None = None
    mu: float | None = None
    residual: float | None = None
    position: int | None = None
    crossing: bool | None = None
    d: float | None = None
    phi: float | None = None
    vertex_distance: float | None = None
    phi_model: float | None = None
    vertex_distance_model: float | None = None
    v1_at_0: float | None = None
    v1_at_0_fit: float | None = None
    v1_at_0_predicted: float | None = None
    v1_at_0_predicted_sign_corrected: float | None = None
    v2_at_0: float | None = None
    dv2_center: float | None = None
    v1_center: float | None = None
    x_star: float | None = None
    v2_vs_sine_sup: float | None = None
    sin_mu1_N: float | None = None
    component_count: int | None = None
    component_count_raster: int | None = None
    n_endpoints: int | None = None
    angle_left: float | None = None
    angle_right: float | None = None
    angle_bottom: float | None = None
    angle_top: float | None = None
    res: float | None = None
    wall_time: float | None = None

    def payload(self) -> dict:
        """Deterministic part of the record (everything but the wall time)."""
        d = asdict(self)
        d.pop("wall_time")
        return {k: (_num(v) if isinstance(v, float) else v) for k, v in d.items()}

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @property
    def angle_max_deviation(self) -> float | None:
        vals = [a for a in (self.angle_left, self.angle_right, self.angle_bottom,
                            self.angle_top) if a is not None]
        return max(abs(90.0 - a) for a in vals) if len(vals) == 4 else None


REPORT_COLUMNS = tuple(f.name for f in fields(RunReport))


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def run_single(spec: DomainSpec, n_y: int, *, m: int = 6, seed: int = 0, ordering: str = "mmd",
               with_raster: bool = True, label: str = "") -> RunReport:
    """Full pipeline for one domain; errors are captured in the report."""
    t0 = time.perf_counter()
    rep = RunReport(label=label, N=spec.N, eta=spec.eta, profile=spec.profile.identifier(),
                    n_y=int(n_y), res=_num(res_value(spec.N)))
    try:
        _fill(rep, spec, n_y, m, seed, ordering, with_raster)
    except (NodalOpeningsError, ValueError, ArithmeticError, MemoryError) as exc:
        rep.status = "error"
        rep.error = f"{type(exc).__name__}: {exc}"
        log.warning("run N=%g eta=%g failed: %s", spec.N, spec.eta, rep.error)
    rep.wall_time = time.perf_counter() - t0
    return rep


def _fill(rep: RunReport, spec, n_y, m, seed, ordering, with_raster):
    mesh, _, sol, _ = compute_target_mode(spec, n_y=n_y, m=m, seed=seed, ordering=ordering)
    rep.h = mesh.h
    rep.min_angle = min_angle(mesh)
    rep.mu, rep.residual, rep.position = sol.mu, sol.residual, sol.position_index
    dec = analyze_modes(sol, mesh, check_resonance=False)
    rep.v1_at_0, rep.v1_at_0_fit, rep.v2_at_0 = dec.v1_at_0, _num(dec.c1_fit), dec.v2_at_0
    if spec.eta > 0:
        rep.v1_at_0_predicted = hadamard_predict(spec, 1)
        rep.v1_at_0_predicted_sign_corrected = hadamard_predict(spec, 1, "sign_corrected")
    rep.dv2_center = _num(dec.dv2_center)
    rep.v1_center = _num(dec.v1_at_center)
    rep.x_star = _num(dec.x_star)
    rep.v2_vs_sine_sup = _num(dec.v2_vs_sine_sup)
    rep.sin_mu1_N = _num(dec.sin_mu1_N)
    nodal = extract_nodal_set(sol, mesh)
    rep.crossing = bool(nodal.crossing_detected)
    rep.n_endpoints = nodal.n_endpoints
    rep.component_count = component_count(sol, mesh)
    if with_raster:
        rep.component_count_raster = raster_component_count(sol, mesh)
    if not nodal.crossing_detected:
        rep.d = measure_gap(nodal).d
        try:
            qm = local_quadratic_model(sol, mesh, dec, nodal)
            rep.phi, rep.vertex_distance = qm.fit.phi, qm.fit.vertex_distance
            if qm.model is not None:
                rep.phi_model = qm.model.phi
                rep.vertex_distance_model = qm.model.vertex_distance
        except NodalOpeningsError as exc:
            log.info("hyperbola fit skipped: %s", exc)
    if nodal.n_endpoints == 4:
        for a in boundary_angles(nodal, mesh):
            setattr(rep, f"angle_{a['side']}", a["angle_deg"])


def _run_many(jobs: Sequence[tuple], workers: int = 1) -> list[RunReport]:
    """Run ``(spec, n_y, kwargs)`` jobs; ``workers > 1`` uses a process pool."""
    if workers <= 1 or len(jobs) <= 1:
        return [run_single(s, n, **kw) for s, n, kw in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futs = [pool.submit(run_single, s, n, **kw) for s, n, kw in jobs]
        return [f.result() for f in futs]


def _kw(config: ExperimentConfig, label: str = "") -> dict:
    return dict(m=config.m, seed=config.seed, ordering=config.ordering,
                with_raster=config.with_raster, label=label or config.label)


def _guard(N: float, config: ExperimentConfig):
    rep = resonance_report(N)
    if rep.res_value < RESONANCE_THRESHOLD and not config.allow_resonant:
        raise ResonanceError(
            f"N={N:g} is near resonance (res={rep.res_value:.3g} < {RESONANCE_THRESHOLD}); "
            "pass allow_resonant to run anyway", rep)


# campaigns -------------------------------------------------------------------

@dataclass
class SlopeFit:
    slope: float | None
    stderr: float | None
    n_points: int
    degenerate: bool = False
    note: str = ""


def loglog_slope(x, y, zero_tol: float = 1e-6) -> SlopeFit:
    """OLS slope of ``log y`` against ``log x`` with its standard error.

    Rows with ``y <= zero_tol`` (a closed opening) make the fit degenerate.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray([np.nan if v is None else v for v in y], dtype=float)
    ok = np.isfinite(x) & np.isfinite(y)
    if np.count_nonzero(ok) < 3:
        raise ValueError("need at least 3 points for a slope")
    if np.any(y[ok] <= zero_tol):
        return SlopeFit(None, None, int(ok.sum()), True, "gap vanishes: opening degenerate")
    lx, ly = np.log(x[ok]), np.log(y[ok])
    n = len(lx)
    A = np.column_stack([lx, np.ones(n)])
    coef, res, *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - A @ coef
    if n > 2:
        s2 = float(resid @ resid) / (n - 2)
        se = math.sqrt(s2 / float(np.sum((lx - lx.mean()) ** 2)))
    else:
        se = math.nan
    return SlopeFit(float(coef[0]), se, n)


@dataclass
class EtaScan:
    reports: list[RunReport]
    fit: SlopeFit


def scan_eta(config: ExperimentConfig, eta_list: Sequence[float] | None = None) -> EtaScan:
    """Gaps over a list of amplitudes and the slope of ``log d`` vs ``log eta``.

    Raises
    ------
    ValueError
        Fewer than three amplitudes.
    ResonanceError
        ``res(N) < 0.05`` without ``allow_resonant``.
    """
    etas = list(eta_list if eta_list is not None else config.eta_list)
    if len(etas) < 3:
        raise ValueError("need at least 3 amplitudes for a slope")
    _guard(config.N, config)
    n_y = config.resolution(config.N)
    jobs = [(config.domain(eta=e), n_y, _kw(config, f"eta={e:g}")) for e in etas]
    reports = _run_many(jobs, config.workers)
    d = [0.0 if r.crossing else r.d for r in reports]
    try:
        fit = loglog_slope(etas, d)
    except ValueError as exc:
        fit = SlopeFit(None, None, 0, True, str(exc))
    return EtaScan(reports, fit)


def scan_N(config: ExperimentConfig, N_list: Sequence[float] | None = None) -> list[RunReport]:
    """One run per aspect ratio at a common mesh size (``config.h`` if set)."""
    Ns = list(N_list if N_list is not None else config.N_list)
    if not Ns:
        raise ValueError("empty N list")
    for N in Ns:
        _guard(N, config)
    jobs = [(config.domain(N=N), config.resolution(N), _kw(config, f"N={N:g}")) for N in Ns]
    return _run_many(jobs, config.workers)


def resonance_sweep(config: ExperimentConfig, N_lo: float | None = None,
                    N_hi: float | None = None, n_points: int | None = None) -> list[RunReport]:
    """Runs across an interval of aspect ratios, resonant ones included."""
    lo, hi = (N_lo, N_hi) if N_lo is not None else config.N_range
    n = n_points or config.n_points
    Ns = np.linspace(lo, hi, n)
    jobs = [(config.domain(N=float(N)), config.resolution(float(N)),
             _kw(config, f"N={N:.6g}")) for N in Ns]
    return _run_many(jobs, config.workers)


def table1(config: ExperimentConfig, large: bool | None = None) -> list[RunReport]:
    """The reference table rows; the two long domains only in the large tier."""
    large = config.large_tier if large is None else large
    large = large or os.environ.get(LARGE_TIER_ENV, "") not in ("", "0")
    cfg = replace(config, eta=0.5, profile=BoundaryProfile.sinusoid(6).to_dict())
    rows = [N for N, _, _, big in TABLE1 if large or not big]
    jobs = [(cfg.domain(N=N), cfg.resolution(N), _kw(cfg, f"table1 N={N:g}")) for N in rows]
    return _run_many(jobs, cfg.workers)


def run_experiment(config: ExperimentConfig, write: bool = True):
    """Dispatch on ``config.experiment`` and persist the reports.

    Returns
    -------
    reports : list of RunReport
    extra : dict
        Campaign-level results (the slope fit of an amplitude scan).
    """
    extra = {}
    if config.experiment == "single":
        reports = [run_single(config.domain(), config.resolution(config.N), **_kw(config))]
    elif config.experiment == "eta_scan":
        scan = scan_eta(config)
        reports = scan.reports
        extra["slope"] = asdict(scan.fit)
    elif config.experiment == "n_scan":
        reports = scan_N(config)
    elif config.experiment == "resonance_sweep":
        reports = resonance_sweep(config)
    else:
        reports = table1(config)
    if write:
        out = config.output_path()
        for fmt in config.formats:
            emit_report(reports, fmt, out / f"{config.experiment}.{fmt}", extra=extra)
    return reports, extra


# persistence -----------------------------------------------------------------

def _csv_cell(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit_report(reports: Sequence[RunReport], fmt: str, path, extra: dict | None = None) -> Path:
    """Write ``reports`` as CSV (columns :data:`REPORT_COLUMNS`) or JSON.

    The JSON document is ``{"schema_version", "columns", "runs", "extra",
    "timing"}``; wall times live only under ``timing`` so ``runs`` is
    reproducible byte for byte.
    """
    if not reports:
        raise ValueError("no reports to write")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        with path.open("w", newline="", encoding="ascii") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(REPORT_COLUMNS)
            for r in reports:
                row = asdict(r)
                w.writerow([_csv_cell(row[c]) for c in REPORT_COLUMNS])
    elif fmt == "json":
        doc = {
            "schema_version": SCHEMA_VERSION,
            "columns": list(REPORT_COLUMNS),
            "runs": [r.payload() for r in reports],
            "extra": extra or {},
            "timing": [r.wall_time for r in reports],
        }
        path.write_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n",
                        encoding="ascii")
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    return path


def read_json_report(path) -> list[RunReport]:
    doc = json.loads(Path(path).read_text(encoding="ascii"))
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema version {doc.get('schema_version')!r}")
    timing = doc.get("timing") or [None] * len(doc["runs"])
    return [RunReport(**run, wall_time=t) for run, t in zip(doc["runs"], timing)]


def read_csv_report(path) -> list[dict]:
    """Rows of a CSV report with ``NA`` mapped to None (values stay strings)."""
    with Path(path).open(newline="", encoding="ascii") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (None if v == "NA" else v) for k, v in row.items()} for row in rows]

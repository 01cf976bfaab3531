"""Command line interface: ``nodal-openings <command> [options]``.

Exit status is 0 on success, 1 when a run failed and 2 for configuration
errors (including a refused near-resonant scan).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, NodalOpeningsError, ResonanceError, SelectionError
from .experiments import (ExperimentConfig, config_from_dict, emit_report, load_config,
                          resonance_sweep, scan_eta, scan_N, table1)
from .geometry import BoundaryProfile, shape_integral, validate_profile
from .modes import analyze_modes, hadamard_predict, resonance_scan
from .nodal import (Window, extract_nodal_set, local_quadratic_model, measure_gap,
                    structure_check)
from .spectral import compute_target_mode, write_spectrum
from .svg import RenderOptions, render_svg

log = logging.getLogger("nodal_openings")

EXIT_OK, EXIT_RUN, EXIT_CONFIG = 0, 1, 2


def parse_profile(text: str) -> dict:
    """``sin:6``, ``cos:5``, ``zero`` or a JSON profile record."""
    text = text.strip()
    if text.startswith("{"):
        try:
            return BoundaryProfile.from_dict(json.loads(text)).to_dict()
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"bad profile record: {exc}") from exc
    if text == "zero":
        return BoundaryProfile.zero().to_dict()
    phase, _, freq = text.partition(":")
    if phase in ("sin", "cos") and freq.isdigit():
        return BoundaryProfile.sinusoid(int(freq), phase).to_dict()
    raise ConfigError(f"cannot parse profile {text!r}")


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError as exc:
        raise ConfigError(f"bad number list {text!r}") from exc


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="TOML experiment file")
    p.add_argument("--N", type=float, dest="N")
    p.add_argument("--eta", type=float)
    p.add_argument("--profile", help="sin:K, cos:K, zero or a JSON record")
    p.add_argument("--n-y", type=int, dest="n_y")
    p.add_argument("--h", type=float, help="target mesh size (overrides n_y)")
    p.add_argument("--m", type=int, help="eigenpairs requested near the shift")
    p.add_argument("--seed", type=int)
    p.add_argument("--ordering", choices=["mmd", "rcm"])
    p.add_argument("--workers", type=int)
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--format", dest="formats", action="append", choices=["csv", "json"])
    p.add_argument("--no-raster", dest="with_raster", action="store_false", default=None)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nodal-openings",
                                 description="Nodal set openings of perturbed rectangles.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (("solve", "eigenpairs near the target shift"),
                        ("modes", "slice Fourier modes and closed-form fits"),
                        ("nodal", "nodal set, gap, hyperbola fit and envelope checks"),
                        ("predict", "first-order prediction of v_k(0), no solve"),
                        ("render", "SVG of the mode and its nodal set")):
        p = sub.add_parser(name, help=help_)
        _common(p)
        if name == "predict":
            p.add_argument("--k", type=int, default=1)
        if name == "render":
            p.add_argument("--zoom", type=float, metavar="HALF",
                           help="half-width of a square window around (N/2, 1/2)")
            p.add_argument("--rows", type=int, default=160)
    p = sub.add_parser("scan-eta", help="gap against amplitude, log-log slope")
    _common(p)
    p.add_argument("--eta-list", dest="eta_list")
    p.add_argument("--allow-resonant", action="store_true", default=None)
    p = sub.add_parser("scan-n", help="gap against aspect ratio")
    _common(p)
    p.add_argument("--N-list", dest="N_list")
    p.add_argument("--allow-resonant", action="store_true", default=None)
    p = sub.add_parser("resonance", help="res(N) table, or solves across an N interval")
    _common(p)
    p.add_argument("--N-range", dest="N_range")
    p.add_argument("--n-points", type=int, dest="n_points")
    p.add_argument("--solve", action="store_true", help="run the pipeline at each N")
    p = sub.add_parser("table1", help="reference table rows at eta = 0.5")
    _common(p)
    p.add_argument("--large", dest="large_tier", action="store_true", default=None)
    return ap


_EXPERIMENT = {"scan-eta": "eta_scan", "scan-n": "n_scan", "resonance": "resonance_sweep",
               "table1": "table1"}


def make_config(args) -> ExperimentConfig:
    over = {}
    for key in ("N", "eta", "n_y", "h", "m", "seed", "ordering", "workers", "output_dir",
                "with_raster", "allow_resonant", "large_tier", "n_points"):
        val = getattr(args, key, None)
        if val is not None:
            over[key] = val
    if args.formats:
        over["formats"] = tuple(args.formats)
    if args.profile:
        over["profile"] = parse_profile(args.profile)
    if getattr(args, "eta_list", None):
        over["eta_list"] = _floats(args.eta_list)
    if getattr(args, "N_list", None):
        over["N_list"] = _floats(args.N_list)
    if getattr(args, "N_range", None):
        rng = _floats(args.N_range)
        if len(rng) != 2:
            raise ConfigError("--N-range needs two numbers")
        over["N_range"] = rng
    if args.h is not None and args.n_y is None:
        over["n_y"] = None
    experiment = _EXPERIMENT.get(args.command, "single")
    if args.command == "resonance" and not args.solve:
        over.setdefault("N_range", over.get("N_range") or (1.2, 12.0))
    if args.config:
        cfg = load_config(args.config, over)
        return replace(cfg, experiment=experiment) if cfg.experiment != experiment else cfg
    return config_from_dict({"experiment": experiment}, over)


def _write_json(path: Path, obj) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_default) + "\n",
                    encoding="ascii")
    return path


def _default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _reports_out(cfg: ExperimentConfig, name: str, reports, extra=None) -> int:
    out = cfg.output_path()
    for fmt in cfg.formats:
        p = emit_report(reports, fmt, out / f"{name}.{fmt}", extra=_clean(extra or {}))
        print(p)
    bad = [r for r in reports if not r.ok]
    for r in bad:
        print(f"run {r.label or r.N} failed: {r.error}", file=sys.stderr)
    return EXIT_RUN if bad else EXIT_OK


def cmd_solve(cfg: ExperimentConfig, args) -> int:
    spec = cfg.domain()
    mesh, _, sol, cands = compute_target_mode(spec, cfg.resolution(spec.N), m=cfg.m,
                                              seed=cfg.seed, ordering=cfg.ordering)
    out = cfg.output_path()
    out.mkdir(parents=True, exist_ok=True)
    print(write_spectrum(cands, out / "spectrum.csv"))
    print(f"mu = {sol.mu!r}  residual = {sol.residual:.3e}  position = {sol.position_index}"
          f"  h = {mesh.h:.4g}")
    return EXIT_OK


def cmd_modes(cfg: ExperimentConfig, args) -> int:
    spec = cfg.domain()
    mesh, _, sol, _ = compute_target_mode(spec, cfg.resolution(spec.N), m=cfg.m, seed=cfg.seed,
                                          ordering=cfg.ordering)
    dec = analyze_modes(sol, mesh)
    out = cfg.output_path()
    out.mkdir(parents=True, exist_ok=True)
    print(dec.write_csv(out / "modes.csv"))
    print(dec.write_json(out / "modes.json", spec))
    return EXIT_OK


def cmd_nodal(cfg: ExperimentConfig, args) -> int:
    spec = cfg.domain()
    mesh, _, sol, _ = compute_target_mode(spec, cfg.resolution(spec.N), m=cfg.m, seed=cfg.seed,
                                          ordering=cfg.ordering)
    dec = analyze_modes(sol, mesh, check_resonance=False)
    nodal = extract_nodal_set(sol, mesh)
    out = cfg.output_path()
    out.mkdir(parents=True, exist_ok=True)
    print(nodal.write_csv(out / "nodal.csv"))
    gap = measure_gap(nodal)
    doc = {"gap": {"d": gap.d, "p_star": gap.p_star, "q_star": gap.q_star,
                   "crossing": gap.crossing, "window": gap.window.to_dict()}}
    if not nodal.crossing_detected:
        try:
            qm = local_quadratic_model(sol, mesh, dec, nodal)
            doc["hyperbola_fit"] = qm.fit.to_dict()
            doc["hyperbola_model"] = qm.model.to_dict() if qm.model else None
        except NodalOpeningsError as exc:
            doc["hyperbola_fit"] = None
            doc["hyperbola_error"] = str(exc)
    doc["structure"] = structure_check(sol, mesh, nodal, dec,
                                       with_raster=cfg.with_raster).to_dict()
    print(_write_json(out / "nodal.json", _clean(doc)))
    print(f"d = {gap.d!r}  crossing = {gap.crossing}")
    return EXIT_OK


def cmd_predict(cfg: ExperimentConfig, args) -> int:
    spec = cfg.domain()
    rep = validate_profile(spec.profile)
    doc = {"N": spec.N, "eta": spec.eta, "k": args.k, "profile": spec.profile.identifier(),
           "shape_integral": shape_integral(spec.profile, args.k),
           "predicted": hadamard_predict(spec, args.k),
           "predicted_sign_corrected": hadamard_predict(spec, args.k, "sign_corrected"),
           "profile_violations": list(rep.violations)}
    print(json.dumps(doc, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_render(cfg: ExperimentConfig, args) -> int:
    spec = cfg.domain()
    mesh, _, sol, _ = compute_target_mode(spec, cfg.resolution(spec.N), m=cfg.m, seed=cfg.seed,
                                          ordering=cfg.ordering)
    nodal = extract_nodal_set(sol, mesh)
    zoom = Window.centered(spec.N, args.zoom, args.zoom) if args.zoom else None
    path = cfg.output_path() / ("mode_zoom.svg" if zoom else "mode.svg")
    print(render_svg(sol, nodal, path, RenderOptions(zoom=zoom, raster_rows=args.rows)))
    return EXIT_OK


def cmd_scan_eta(cfg: ExperimentConfig, args) -> int:
    scan = scan_eta(cfg)
    fit = scan.fit
    if fit.degenerate:
        print(f"slope: degenerate ({fit.note})")
    else:
        print(f"slope = {fit.slope:.4f} +/- {fit.stderr:.4f} over {fit.n_points} amplitudes")
    return _reports_out(cfg, "eta_scan", scan.reports, {"slope": asdict(fit)})


def cmd_scan_n(cfg: ExperimentConfig, args) -> int:
    return _reports_out(cfg, "n_scan", scan_N(cfg))


def cmd_resonance(cfg: ExperimentConfig, args) -> int:
    lo, hi = cfg.N_range
    if args.solve:
        return _reports_out(cfg, "resonance_sweep", resonance_sweep(cfg))
    scan = resonance_scan(lo, hi)
    out = cfg.output_path()
    out.mkdir(parents=True, exist_ok=True)
    path = out / "resonance.csv"
    with path.open("w", encoding="ascii") as fh:
        fh.write("N,res\n")
        for N, r in zip(scan.N_grid, scan.res):
            fh.write(f"{N!r},{r!r}\n")
    print(path)
    for k, N in scan.roots:
        print(f"k = {k:2d}  N_k = {N:.6f}")
    return EXIT_OK


def cmd_table1(cfg: ExperimentConfig, args) -> int:
    return _reports_out(cfg, "table1", table1(cfg))


COMMANDS = {"solve": cmd_solve, "modes": cmd_modes, "nodal": cmd_nodal, "predict": cmd_predict,
            "render": cmd_render, "scan-eta": cmd_scan_eta, "scan-n": cmd_scan_n,
            "resonance": cmd_resonance, "table1": cmd_table1}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = make_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](cfg, args)
    except SelectionError as exc:
        print(f"run error: {exc}", file=sys.stderr)
        return EXIT_RUN
    except (ConfigError, ResonanceError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NodalOpeningsError, ValueError, ArithmeticError) as exc:
        print(f"run error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUN


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

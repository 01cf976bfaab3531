import json
import math

import pytest

from nodal_openings.errors import ConfigError, ResonanceError
from nodal_openings.experiments import (REPORT_COLUMNS, ExperimentConfig, RunReport,
                                        config_from_dict, emit_report, load_config,
                                        loglog_slope, read_csv_report, read_json_report,
                                        run_experiment, run_single, scan_eta, scan_N)
from nodal_openings.geometry import BoundaryProfile, DomainSpec

N0 = 5 / math.sqrt(3)


@pytest.fixture(scope="module")
def report():
    spec = DomainSpec(N0, 0.04, BoundaryProfile.sinusoid(6))
    return run_single(spec, 33, label="smoke")


def test_run_single_fields(report):
    assert report.ok
    assert report.position == 7
    assert report.residual <= 1e-8
    assert report.crossing is False and report.d > 0
    assert report.component_count == report.component_count_raster == 3
    assert report.res == pytest.approx(0.48)


def test_report_csv_one_row(tmp_path, report):
    path = emit_report([report], "csv", tmp_path / "r.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(REPORT_COLUMNS)
    assert len(lines) == 2
    row = read_csv_report(path)[0]
    assert row["label"] == "smoke" and row["error"] is None
    assert float(row["mu"]) == report.mu


def test_report_json_round_trip(tmp_path, report):
    first = emit_report([report], "json", tmp_path / "a.json", extra={"k": 1})
    back = read_json_report(first)
    assert back[0].payload() == report.payload()
    second = emit_report(back, "json", tmp_path / "b.json", extra={"k": 1})
    assert first.read_bytes() == second.read_bytes()
    doc = json.loads(first.read_text())
    assert doc["schema_version"] == 1 and doc["columns"] == list(REPORT_COLUMNS)
    assert "wall_time" not in doc["runs"][0]


def test_report_nonfinite_is_null(tmp_path):
    rep = RunReport(label="x", N=3.0, eta=0.0, profile="zero", n_y=9, mu=math.nan)
    doc = json.loads(emit_report([rep], "json", tmp_path / "n.json").read_text())
    assert doc["runs"][0]["mu"] is None
    assert "NA" in emit_report([rep], "csv", tmp_path / "n.csv").read_text()


def test_emit_rejects(tmp_path, report):
    with pytest.raises(ValueError):
        emit_report([], "csv", tmp_path / "e.csv")
    with pytest.raises(ValueError):
        emit_report([report], "xml", tmp_path / "e.xml")


@pytest.mark.parametrize("data", [
    {"experiment": "nope"},
    {"experiment": "eta_scan"},
    {"experiment": "eta_scan", "eta_list": [0.1, 0.05, 0.2]},
    {"experiment": "n_scan"},
    {"experiment": "resonance_sweep"},
    {"resolution": {"bogus": 1}},
    {"colour": "red"},
    {"output": {"formats": ["xml"]}},
    {"N": -1.0},
    {"profile": {"kind": "spline"}},
])
def test_config_rejects(data):
    with pytest.raises(ConfigError):
        config_from_dict(data)


def test_load_config(tmp_path, monkeypatch):
    path = tmp_path / "c.toml"
    path.write_text('experiment = "eta_scan"\nN = 2.9\neta_list = [0.02, 0.04, 0.08]\n'
                    '[resolution]\nh = 0.01\n[solver]\nm = 8\n[output]\ndirectory = "runs"\n')
    cfg = load_config(path, overrides={"seed": 3})
    assert cfg.eta_list == (0.02, 0.04, 0.08) and cfg.m == 8 and cfg.seed == 3
    assert cfg.n_y is None and cfg.resolution(cfg.N) >= 100
    monkeypatch.setenv("NODAL_OUTPUT_ROOT", str(tmp_path))
    assert cfg.output_path() == tmp_path / "runs"
    (tmp_path / "bad.toml").write_text("N = = 1")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.toml")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")


def test_scan_needs_three_amplitudes():
    cfg = ExperimentConfig(n_y=17)
    with pytest.raises(ValueError):
        scan_eta(cfg, [0.04])


def test_resonance_guard():
    cfg = ExperimentConfig(N=math.sqrt(7), n_y=17)
    with pytest.raises(ResonanceError):
        scan_eta(cfg, [0.01, 0.02, 0.04])
    with pytest.raises(ResonanceError):
        scan_N(cfg, [math.sqrt(7)])


def test_slope_on_power_law():
    fit = loglog_slope([0.01, 0.02, 0.04, 0.08], [3 * e**0.5 for e in (0.01, 0.02, 0.04, 0.08)])
    assert fit.slope == pytest.approx(0.5, abs=1e-12)
    assert fit.stderr < 1e-10
    assert not fit.degenerate
    with pytest.raises(ValueError):
        loglog_slope([0.1, 0.2], [1.0, 2.0])


def test_symmetric_profile_gives_degenerate_slope(tmp_path, monkeypatch):
    # cos(6 pi y) is even about y = 1/2, the mirror symmetry keeps the crossing
    monkeypatch.setenv("NODAL_OUTPUT_ROOT", str(tmp_path))
    cfg = ExperimentConfig(experiment="eta_scan", N=N0, n_y=33, eta_list=(0.02, 0.04, 0.08),
                           profile=BoundaryProfile.sinusoid(6, "cos").to_dict(), with_raster=False)
    reports, extra = run_experiment(cfg)
    assert all(r.crossing for r in reports)
    assert all(r.d is None for r in reports)
    assert extra["slope"]["degenerate"] and extra["slope"]["slope"] is None
    assert (tmp_path / "out" / "eta_scan.csv").exists()
    assert (tmp_path / "out" / "eta_scan.json").exists()


def test_failed_run_is_isolated(monkeypatch):
    from nodal_openings import experiments

    real = experiments._fill

    def flaky(rep, spec, *args):
        if spec.eta == 0.04:
            raise ArithmeticError("injected")
        return real(rep, spec, *args)

    monkeypatch.setattr(experiments, "_fill", flaky)
    scan = scan_eta(ExperimentConfig(N=N0, n_y=33, with_raster=False), [0.02, 0.04, 0.08])
    status = [r.status for r in scan.reports]
    assert status == ["ok", "error", "ok"]
    assert "injected" in scan.reports[1].error
    assert scan.reports[0].d > 0 and scan.reports[2].d > 0
    # the failed amplitude drops out and two points cannot carry a slope
    assert scan.fit.degenerate

import json
import math

import pytest

from nodal_openings.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUN, main, parse_profile
from nodal_openings.errors import ConfigError


@pytest.fixture(autouse=True)
def out_root(tmp_path, monkeypatch):
    monkeypatch.setenv("NODAL_OUTPUT_ROOT", str(tmp_path))
    return tmp_path


def test_predict(capsys):
    assert main(["predict", "--eta", "0.04"]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc["shape_integral"] == pytest.approx(-16 / (315 * math.pi))
    assert doc["predicted_sign_corrected"] == pytest.approx(-doc["predicted"])


def test_solve_writes_spectrum(out_root):
    assert main(["solve", "--n-y", "17", "--output-dir", "s"]) == EXIT_OK
    lines = (out_root / "s" / "spectrum.csv").read_text().splitlines()
    assert len(lines) > 1


def test_nodal_outputs(out_root):
    assert main(["nodal", "--n-y", "33", "--output-dir", "n", "--no-raster"]) == EXIT_OK
    doc = json.loads((out_root / "n" / "nodal.json").read_text())
    assert doc["gap"]["d"] > 0 and not doc["gap"]["crossing"]
    assert (out_root / "n" / "nodal.csv").exists()


def test_render(out_root):
    assert main(["render", "--n-y", "17", "--zoom", "0.3", "--rows", "20"]) == EXIT_OK
    assert (out_root / "out" / "mode_zoom.svg").exists()


def test_resonance_table(out_root, capsys):
    assert main(["resonance", "--N-range", "3.8,3.95"]) == EXIT_OK
    assert "k =  7" in capsys.readouterr().out
    assert (out_root / "out" / "resonance.csv").read_text().startswith("N,res\n")


def test_scan_eta_writes_reports(out_root):
    code = main(["scan-eta", "--eta-list", "0.02,0.04,0.08", "--n-y", "33", "--no-raster",
                 "--format", "json"])
    assert code == EXIT_OK
    doc = json.loads((out_root / "out" / "eta_scan.json").read_text())
    assert len(doc["runs"]) == 3 and doc["extra"]["slope"]["n_points"] == 3
    assert not (out_root / "out" / "eta_scan.csv").exists()


@pytest.mark.parametrize("argv", [
    ["scan-n", "--N-list", "2.6458", "--n-y", "17"],  # resonant without --allow-resonant
    ["solve", "--profile", "tri:3"],
    ["resonance", "--N-range", "1,2,3"],
    ["scan-eta", "--eta-list", "0.1,x,0.3"],
    ["solve", "--N", "-2"],
])
def test_config_errors(argv, capsys):
    assert main(argv) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_config_file_missing(tmp_path):
    assert main(["solve", "--config", str(tmp_path / "none.toml")]) == EXIT_CONFIG


def test_run_error_exit():
    # two amplitudes cannot carry a slope
    assert main(["scan-eta", "--eta-list", "0.02,0.04", "--n-y", "17"]) == EXIT_RUN


def test_parse_profile():
    assert parse_profile("sin:6") == {"kind": "sinusoid", "frequency": 6, "phase": "sin",
                                      "smoothness_class": "Lipschitz"}
    assert parse_profile('{"kind": "hat", "centers": [0.5], "radius": 0.1}')["kind"] == "hat"
    with pytest.raises(ConfigError):
        parse_profile('{"kind": "hat"}')

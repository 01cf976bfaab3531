import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nodal_openings.errors import ResonanceError, SignatureError
from nodal_openings.geometry import BoundaryProfile, DomainSpec
from nodal_openings.modes import (ModeDecomposition, analyze_modes, fit_trig_forms,
                                  hadamard_predict, normalize_sign, quadrant_signs,
                                  res_value, resonance_report, resonance_scan, resonant_N,
                                  slice_modes)
from nodal_openings.spectral import compute_target_mode

FLAT = BoundaryProfile.polynomial([-1.0], smoothness_class="Lipschitz")


@pytest.mark.parametrize("k, expected", [(3, math.sqrt(5 / 3)), (4, 2.0), (5, math.sqrt(7))])
def test_resonant_N(k, expected):
    assert resonant_N(k) == pytest.approx(expected, rel=1e-15)
    assert res_value(expected) == pytest.approx(0.0, abs=1e-12)


def test_resonant_N_domain():
    with pytest.raises(ValueError):
        resonant_N(2)


def test_res_value_reference_ratio():
    # 3 + 4/N^2 - k^2/N^2 at N^2 = 25/3: 3.48 - 0.12 k^2, minimum at k = 5
    rep = resonance_report(5 / math.sqrt(3))
    assert rep.res_value == pytest.approx(0.48, abs=1e-12)
    assert rep.argmin_k == 5
    assert rep.nearest_resonant == pytest.approx(math.sqrt(7))


@settings(max_examples=60, deadline=None)
@given(st.integers(3, 40))
def test_res_value_vanishes_at_roots(k):
    assert res_value(resonant_N(k)) < 1e-12


@settings(max_examples=60, deadline=None)
@given(st.floats(1.01, 20.0))
def test_res_value_matches_brute_force(N):
    brute = min(abs(3 + 4 / N**2 - k * k / N**2) for k in range(1, 200))
    assert res_value(N) == pytest.approx(brute, abs=1e-13)


def test_resonance_scan():
    scan = resonance_scan(1.2, 3.0, k_max=8)
    assert [k for k, _ in scan.roots] == [3, 4, 5]
    assert np.all(scan.res >= 0)
    assert len(scan.N_grid) == 1801
    with pytest.raises(ValueError):
        resonance_scan(0.5, 2.0)


@pytest.mark.parametrize("convention, sign", [("literal", 1), ("sign_corrected", -1)])
def test_hadamard_predict_sin6(convention, sign):
    N, eta = 5 / math.sqrt(3), 0.04
    spec = DomainSpec(N, eta, BoundaryProfile.sinusoid(6))
    expected = sign * 4 * math.pi * eta / N * (-16 / (315 * math.pi))
    assert hadamard_predict(spec, 1, convention) == pytest.approx(expected, rel=1e-10)
    assert hadamard_predict(DomainSpec(N, 0.0), 1, convention) == 0.0


def test_hadamard_predict_rejects():
    spec = DomainSpec(3.0, 0.1, FLAT)
    with pytest.raises(ValueError):
        hadamard_predict(spec, 0)
    with pytest.raises(ValueError):
        hadamard_predict(spec, 1, "other")


@pytest.fixture(scope="module")
def shifted_rectangle():
    # phi = -1 moves the left side to x = -eta: the domain is a longer rectangle
    # with v = sin(2 pi (x + eta)/(N + eta)) sin(2 pi y)
    N, eta = 3.0, 0.05
    spec = DomainSpec(N, eta, FLAT)
    mesh, _, sol, _ = compute_target_mode(spec, n_y=65)
    return spec, mesh, sol


def test_shifted_rectangle_v2_at_zero(shifted_rectangle):
    spec, mesh, sol = shifted_rectangle
    N, eta = spec.N, spec.eta
    exact = math.sin(2 * math.pi * eta / (N + eta))
    dec = slice_modes(sol, mesh)
    assert dec.v2_at_0 == pytest.approx(exact, abs=2e-3)
    # only the corrected sign agrees, up to O(eta^2)
    assert hadamard_predict(spec, 2, "sign_corrected") == pytest.approx(exact, abs=5 * eta**2)
    assert hadamard_predict(spec, 2, "literal") < 0 < exact


def test_shifted_rectangle_eigenvalue(shifted_rectangle):
    spec, _, sol = shifted_rectangle
    exact = 4 * math.pi**2 * (1 / (spec.N + spec.eta) ** 2 + 1)
    assert sol.mu == pytest.approx(exact, rel=2e-3)


@pytest.fixture(scope="module")
def rectangle_mode():
    spec = DomainSpec(3.0, 0.0)
    mesh, _, sol, _ = compute_target_mode(spec, n_y=65)
    return spec, mesh, sol


def test_normalized_quadrants(rectangle_mode):
    _, _, sol = rectangle_mode
    assert quadrant_signs(sol.field) == (1, -1, -1, 1)
    assert np.max(np.abs(sol.field.values)) == pytest.approx(1.0)
    flipped = normalize_sign(type(sol)(mu=sol.mu, field=sol.field.scaled(-3.0),
                                       residual=sol.residual))
    assert np.allclose(flipped.field.values, sol.field.values)


def test_normalize_rejects_wrong_mode(rectangle_mode):
    _, mesh, sol = rectangle_mode
    fld = mesh.sample(lambda x, y: np.sin(np.pi * x / 3) * np.sin(np.pi * y))
    with pytest.raises(SignatureError):
        normalize_sign(type(sol)(mu=1.0, field=fld, residual=0.0))


def test_rectangle_decomposition(rectangle_mode):
    spec, mesh, sol = rectangle_mode
    dec = analyze_modes(sol, mesh)
    h2 = mesh.h**2
    assert np.max(np.abs(dec.mode(1))) < 1e-10
    assert dec.v2_vs_sine_sup < 10 * h2
    assert dec.E_sup < 5 * h2  # P1 interpolation in y
    assert dec.x_star == pytest.approx(1.5, abs=1e-9)
    assert dec.parseval_excess < 1e-3
    assert math.isnan(dec.identity_defect)
    # the eigenvalue error enters through mu - 4 pi^2
    dmu = (sol.mu - 4 * math.pi**2 * (1 / 9 + 1)) / dec.mu2**2
    assert dec.ode_residual["2_relative"] < 1.5 * dmu + 10 * h2


def test_slice_modes_validates_samples(rectangle_mode):
    _, mesh, sol = rectangle_mode
    with pytest.raises(ValueError):
        slice_modes(sol, mesh, n_y_samples=257)


def _synthetic(N, mu, c1, A1, c2, A2, nx=401):
    x = np.linspace(0, N, nx)
    m1, m2 = math.sqrt(mu - math.pi**2), math.sqrt(mu - 4 * math.pi**2)
    v = np.zeros((8, nx))
    v[0] = c1 * np.cos(m1 * x) + A1 * np.sin(m1 * x)
    v[1] = c2 * np.cos(m2 * x) + A2 * np.sin(m2 * x)
    return ModeDecomposition(N=N, eta=0.0, x_grid=x, v=v, mu=mu, h=N / (nx - 1),
                             E_sup=0.0, B_sup=0.0, parseval_excess=0.0)


@settings(max_examples=40, deadline=None)
@given(st.floats(-0.1, 0.1), st.floats(-0.1, 0.1), st.floats(-0.05, 0.05),
       st.floats(0.5, 1.5), st.floats(2.2, 5.0))
def test_fit_recovers_closed_forms(c1, A1, c2, A2, N):
    mu = 4 * math.pi**2 * (1 / N**2 + 1)
    if abs(math.sin(math.sqrt(mu - math.pi**2) * N)) < 1e-3:
        return
    dec = fit_trig_forms(_synthetic(N, mu, c1, A1, c2, A2))
    assert dec.c1_fit == pytest.approx(c1, abs=1e-10)
    assert dec.A1 == pytest.approx(A1, abs=1e-10)
    assert dec.c2_fit == pytest.approx(c2, abs=1e-10)
    assert dec.A2 == pytest.approx(A2, abs=1e-10)
    assert abs(float(dec.v_fit(2, dec.x_star))) < 1e-10
    assert dec.fit_residual_v1 < 1e-10


def test_center_identity_on_closed_form():
    # v1 = c cos + A sin with v1(N) = 0 satisfies v1(N/2) = c / (2 cos(mu1 N/2))
    N = 5 / math.sqrt(3)
    mu = 4 * math.pi**2 * (1 / N**2 + 1)
    m1 = math.sqrt(mu - math.pi**2)
    c = 0.01
    A = -c * math.cos(m1 * N) / math.sin(m1 * N)
    dec = fit_trig_forms(_synthetic(N, mu, c, A, 0.0, 1.0))
    assert dec.identity_defect < 1e-9
    assert dec.v1_center_identity == pytest.approx(c / (2 * math.cos(m1 * N / 2)), rel=1e-9)


def test_resonant_fit_raises():
    # mu1 N = 6 pi exactly at N = 3, mu = 5 pi^2
    dec = _synthetic(3.0, 5 * math.pi**2, 0.0, 0.0, 0.0, 1.0)
    with pytest.raises(ResonanceError) as info:
        fit_trig_forms(dec)
    assert info.value.report.N == 3.0
    assert math.isfinite(fit_trig_forms(dec, check_resonance=False).A2)


def test_decomposition_export(tmp_path, rectangle_mode):
    spec, mesh, sol = rectangle_mode
    dec = analyze_modes(sol, mesh)
    rows = dec.write_csv(tmp_path / "m.csv").read_text().splitlines()
    assert rows[0] == "x," + ",".join(f"v{k}" for k in range(1, 9))
    assert len(rows) == len(dec.x_grid) + 1
    data = json.loads(dec.write_json(tmp_path / "m.json", spec).read_text())
    assert data["mu"] == sol.mu
    assert data["identity_defect"] is None

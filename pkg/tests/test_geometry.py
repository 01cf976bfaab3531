import math

import numpy as np
import pytest
import sympy
from scipy import integrate
from hypothesis import given, settings
from hypothesis import strategies as st

from nodal_openings.errors import DomainError
from nodal_openings.geometry import (BoundaryProfile, DomainSpec, boundary_polyline,
                                     eval_profile, integrate_profile, polygon_area,
                                     shape_integral, symmetry_defect, validate_profile)

SIN6 = BoundaryProfile.sinusoid(6)
COS6 = BoundaryProfile.sinusoid(6, "cos")


def _sympy_shape_integral(freq, phase, k):
    y = sympy.symbols("y")
    base = sympy.sin if phase == "sin" else sympy.cos
    expr = base(freq * sympy.pi * y) * sympy.sin(2 * sympy.pi * y) * sympy.sin(k * sympy.pi * y)
    return float(sympy.integrate(expr, (y, 0, 1)))


@pytest.mark.parametrize("profile, y, expected", [
    (SIN6, 0.25, -1.0),
    (COS6, 0.0, 1.0),
    (BoundaryProfile.hat([0.25, 0.75], 0.05), 0.5, 0.0),
    (BoundaryProfile.hat([0.25], 0.05), 0.25, 1.0),
    (BoundaryProfile.bump([0.5], 0.1, [-1.0]), 0.5, -1.0),
    (BoundaryProfile.polynomial([0, 1, -1]), 0.5, 0.25),
    (BoundaryProfile.tabulated([0, 1, 0]), 0.25, 0.5),
])
def test_eval_profile_values(profile, y, expected):
    assert eval_profile(profile, y) == pytest.approx(expected, abs=1e-14)


@pytest.mark.parametrize("y", [-0.1, 1.5, float("nan")])
def test_eval_profile_outside_unit_interval(y):
    with pytest.raises(DomainError):
        eval_profile(SIN6, y)


def test_validate_profile_classes():
    strict = validate_profile(BoundaryProfile.sinusoid(6, smoothness_class="C5"))
    assert any(v.startswith("derivative bound") for v in strict.violations)
    assert validate_profile(SIN6).ok
    assert validate_profile(BoundaryProfile.zero()).ok


def test_validate_reports_endpoint_and_range():
    rep = validate_profile(BoundaryProfile.polynomial([0.5], smoothness_class="C5"))
    assert any("endpoint" in v for v in rep.violations)
    assert any("range" in v for v in rep.violations)
    rep = validate_profile(BoundaryProfile.tabulated([0, 2, 0]))
    assert any("range" in v for v in rep.violations)


def test_small_smooth_profile_passes_c5():
    # -0.1 y (1 - y): vanishes at both ends, derivatives well below 1
    prof = BoundaryProfile.polynomial([0.0, -0.1, 0.1], smoothness_class="C5")
    assert validate_profile(prof).ok


@pytest.mark.parametrize("freq, phase, k", [
    (6, "sin", 1), (6, "sin", 3), (6, "cos", 1), (5, "cos", 1), (5, "cos", 2), (3, "sin", 4),
])
def test_shape_integral_matches_symbolic(freq, phase, k):
    prof = BoundaryProfile.sinusoid(freq, phase)
    assert shape_integral(prof, k) == pytest.approx(_sympy_shape_integral(freq, phase, k),
                                                    abs=1e-12)


def test_shape_integral_closed_form_sin6():
    assert shape_integral(SIN6, 1) == pytest.approx(-16 / (315 * math.pi), abs=1e-12)


def test_shape_integral_hat_kinks():
    # piecewise-linear integrand: exact value from a fine trapezoid rule on kink-aligned
    # nodes
    hat = BoundaryProfile.hat([0.25, 0.95], 0.05, [-1.0, -1.0])
    y = np.linspace(0, 1, 2_000_001)
    f = eval_profile(hat, y) * np.sin(2 * np.pi * y) * np.sin(np.pi * y)
    ref = integrate.trapezoid(f, y)
    assert shape_integral(hat, 1) == pytest.approx(ref, abs=1e-10)


def test_shape_integral_rejects_bad_index():
    with pytest.raises(ValueError):
        shape_integral(SIN6, 0)


@pytest.mark.parametrize("profile, expected", [(COS6, 0.0), (SIN6, 2.0)])
def test_symmetry_defect(profile, expected):
    assert symmetry_defect(profile) == pytest.approx(expected, abs=1e-5)


def test_symmetry_defect_asymmetric_hats():
    assert symmetry_defect(BoundaryProfile.hat([0.25, 0.95], 0.05)) > 0.5


def test_boundary_polyline_rectangle():
    poly = boundary_polyline(DomainSpec(2.0, 0.0), step=1e-3)
    assert polygon_area(poly) == pytest.approx(2.0, abs=1e-12)
    left = poly[np.isclose(poly[:, 0], 0.0)]
    assert len(left) == 1001
    assert {(2.0, 0.0), (2.0, 1.0)} <= {tuple(p) for p in poly}


def test_boundary_polyline_amplitude():
    poly = boundary_polyline(DomainSpec(2.0, 0.04, SIN6), step=1e-3)
    left = poly[poly[:, 0] < 1.0]
    assert left[:, 0].min() == pytest.approx(-0.04, abs=1e-6)
    assert left[:, 0].max() == pytest.approx(0.04, abs=1e-6)


def test_boundary_polyline_hits_kinks():
    hat = BoundaryProfile.hat([0.2537], 0.0411)
    poly = boundary_polyline(DomainSpec(2.0, 0.1, hat), step=1e-2)
    for kink in hat.kinks():
        assert np.any(np.isclose(poly[:, 1], kink, atol=0, rtol=0) & (poly[:, 0] < 1))


def test_boundary_polyline_rejects_step():
    with pytest.raises(ValueError):
        boundary_polyline(DomainSpec(2.0, 0.0), step=0.02)


@pytest.mark.parametrize("step", [4e-3, 2e-3, 1e-3])
def test_polyline_area_second_order(step):
    prof = BoundaryProfile.bump([0.5], 0.5, [-1.0])
    spec = DomainSpec(2.0, 0.3, prof)
    exact = 2.0 + 0.3 * integrate_profile(prof, lambda y: -np.ones_like(y))
    err = abs(polygon_area(boundary_polyline(spec, step)) - exact)
    # trapezoid leading term: eta h^2/12 * int |f''| = eta h^2 pi / 6
    assert err <= 0.3 * step**2 * math.pi / 6 * 1.01


def test_profile_roundtrip():
    for prof in (SIN6, COS6, BoundaryProfile.hat([0.25, 0.95], 0.05, [-1, -1]),
                 BoundaryProfile.zero(), BoundaryProfile.tabulated([0, -0.5, 0])):
        assert BoundaryProfile.from_dict(prof.to_dict()) == prof
    spec = DomainSpec(3.0, 0.1, SIN6)
    assert DomainSpec.from_dict(spec.to_dict()) == spec


def test_domain_spec_invariants():
    with pytest.raises(ValueError):
        DomainSpec(1.0, 0.1)
    with pytest.raises(ValueError):
        DomainSpec(2.0, -0.1)
    assert np.all(DomainSpec(2.0, 0.0, SIN6).left(np.linspace(0, 1, 5)) == 0)


coeffs = st.lists(st.floats(-1, 1, allow_nan=False), min_size=1, max_size=4)


@settings(max_examples=40, deadline=None)
@given(coeffs, coeffs, st.floats(-2, 2), st.floats(-2, 2), st.integers(1, 6))
def test_shape_integral_linear(c1, c2, a, b, k):
    p = BoundaryProfile.polynomial(c1)
    q = BoundaryProfile.polynomial(c2)
    n = max(len(c1), len(c2))
    comb = [a * (c1 + [0] * n)[i] + b * (c2 + [0] * n)[i] for i in range(n)]
    lhs = shape_integral(BoundaryProfile.polynomial(comb), k)
    rhs = a * shape_integral(p, k) + b * shape_integral(q, k)
    assert lhs == pytest.approx(rhs, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-1, 1, allow_nan=False), min_size=2, max_size=9))
def test_symmetric_profiles_have_zero_first_integral(half):
    vals = half + half[-2::-1]
    prof = BoundaryProfile.tabulated(vals)
    assert symmetry_defect(prof) < 1e-12
    assert abs(shape_integral(prof, 1)) < 1e-9


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1, 1, allow_nan=False), min_size=2, max_size=12),
       st.integers(1, 8))
def test_shape_integral_bounded(vals, k):
    assert abs(shape_integral(BoundaryProfile.tabulated(vals), k)) <= 1.0

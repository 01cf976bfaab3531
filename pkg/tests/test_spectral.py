import math

import numpy as np
import pytest
import scipy.linalg as la
from hypothesis import given, settings
from hypothesis import strategies as st

from nodal_openings.errors import ConvergenceError, SelectionError
from nodal_openings.geometry import BoundaryProfile, DomainSpec
from nodal_openings.mesh import build_mesh
from nodal_openings.spectral import (assemble, assemble_full, compute_target_mode,
                                     factorize_shifted, m_orthogonality_defect, mode_signature,
                                     select_mode, solve_near, target_shift, write_spectrum)

SIN6 = BoundaryProfile.sinusoid(6)


@pytest.fixture(scope="module")
def small():
    spec = DomainSpec(2.0, 0.05, SIN6)
    system = assemble(build_mesh(spec, n_y=17))
    evals = la.eigh(system.K.toarray(), system.M.toarray(), eigvals_only=True)
    return spec, system, evals


def test_mass_and_stiffness_invariants():
    mesh = build_mesh(DomainSpec(2.0, 0.04, SIN6), n_y=21)
    K, M = assemble_full(mesh)
    assert M.sum() == pytest.approx(mesh.triangle_areas().sum(), rel=1e-13)
    assert np.abs(K @ np.ones(mesh.n_nodes)).max() < 1e-12
    u = 2 * mesh.nodes[:, 0] - mesh.nodes[:, 1]
    assert u @ (K @ u) == pytest.approx(5 * mesh.triangle_areas().sum(), rel=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.0, 0.08), st.integers(17, 23), st.floats(-2, 2), st.floats(-2, 2))
def test_stiffness_annihilates_affine_in_interior(eta, n_y, a, b):
    mesh = build_mesh(DomainSpec(2.5, eta, SIN6), n_y=n_y)
    K, _ = assemble_full(mesh)
    r = K @ (a * mesh.nodes[:, 0] + b * mesh.nodes[:, 1] + 1)
    assert np.abs(r[~mesh.boundary_mask]).max() < 1e-10


def test_reduced_system_symmetric(small):
    _, system, _ = small
    assert abs(system.K - system.K.T).max() == 0
    assert abs(system.M - system.M.T).max() == 0
    assert system.n == 15 * 31


def test_solve_near_matches_dense(small):
    spec, system, evals = small
    sigma = target_shift(spec.N)
    sols = solve_near(system, sigma, m=6)
    mus = np.array([s.mu for s in sols])
    nearest = np.sort(evals[np.argsort(np.abs(evals - sigma))[:6]])
    assert np.allclose(mus, nearest, rtol=1e-10)
    for s in sols:
        assert s.residual <= 1e-8
        # position from inertia equals the dense rank
        assert s.position_index == int(np.searchsorted(evals, s.mu - 1e-8 * s.mu)) + 1
    assert m_orthogonality_defect(sols, system.M) < 1e-8


@pytest.mark.parametrize("ordering", ["mmd", "rcm"])
def test_inertia_counts_eigenvalues_below_shift(small, ordering):
    _, system, evals = small
    for sigma in (20.0, 50.0, 95.0):
        fac = factorize_shifted(system.K, system.M, sigma, ordering=ordering)
        assert fac.n_negative == int(np.count_nonzero(evals < sigma))


def test_shift_on_eigenvalue_is_nudged(small):
    _, system, evals = small
    fac = factorize_shifted(system.K, system.M, float(evals[3]))
    assert fac.sigma != evals[3]
    assert fac.sigma == pytest.approx(evals[3], rel=1e-5)


def test_seed_determinism(small):
    spec, system, _ = small
    a = solve_near(system, target_shift(spec.N), m=4, seed=7)
    b = solve_near(system, target_shift(spec.N), m=4, seed=7)
    assert [s.mu for s in a] == [s.mu for s in b]


def test_iteration_cap_raises(small):
    _, system, _ = small
    with pytest.raises(ConvergenceError) as info:
        solve_near(system, 60.0, m=6, max_iter=8)
    assert info.value.best_residual > 1e-8


def test_rectangle_eigenvalue_second_order():
    N = 3.0
    exact = target_shift(N)
    errs = []
    for n_y in (17, 33, 65):
        _, _, sol, _ = compute_target_mode(DomainSpec(N, 0.0), n_y=n_y)
        errs.append(sol.mu - exact)
    errs = np.array(errs)
    assert np.all(errs > 0)  # conforming P1 overshoots
    assert np.all(np.log2(errs[:-1] / errs[1:]) > 1.9)


def test_rectangle_target_mode_signature():
    _, _, sol, cands = compute_target_mode(DomainSpec(3.0, 0.0), n_y=33)
    assert sol.signature.matches_target
    assert sol.signature.dominant_k == 2
    # m^2/9 + n^2 ordering: (1,1) (2,1) (3,1) (4,1) (5,1) (1,2) (2,2)
    assert sol.position_index == 7
    assert sum(c.signature.matches_target for c in cands) >= 1


def test_mode_signature_of_interpolated_product():
    mesh = build_mesh(DomainSpec(3.0, 0.0), n_y=33)
    f = mesh.sample(lambda x, y: np.sin(2 * np.pi * x / 3) * np.sin(2 * np.pi * y))
    sig = mode_signature(f)
    assert (sig.dominant_k, sig.x_changes, sig.y_changes) == (2, 1, 1)
    g = mesh.sample(lambda x, y: np.sin(np.pi * x / 3) * np.sin(3 * np.pi * y))
    assert not mode_signature(g).matches_target


def test_select_mode_raises_without_match(small):
    spec, system, _ = small
    sols = solve_near(system, 15.0, m=1)
    with pytest.raises(SelectionError) as info:
        select_mode(sols, spec)
    assert info.value.report is not None


def test_write_spectrum(tmp_path, small):
    spec, system, _ = small
    sols = solve_near(system, target_shift(spec.N), m=3)
    text = write_spectrum(sols, tmp_path / "s.csv").read_text().splitlines()
    assert text[0].split(",")[:3] == ["index", "position", "mu"]
    assert len(text) == 4
    assert float(text[1].split(",")[2]) == sols[0].mu

import numpy as np
import pytest

from gdflows.flows import (TIME_FACTOR, BlowUpError, evolve, hamiltonians,
                           linear_multipliers, partial_fraction_residual, plemelj_phi,
                           quadrature_radii, set_quadrature)
from gdflows.potential import builtin
from gdflows.symbols import derive_flow
from gdflows.waves import compute_record


@pytest.fixture(scope="module")
def g2():
    return builtin("gaussian", n=2, amplitude=0.3, sigma=0.7)


def test_translation_flow_shifts_profile(g2):
    run = evolve(g2, derive_flow(2, 1), 0.5, snapshots=[0.0, 0.5])
    x = g2.x
    exact = 0.3 * np.exp(-(x + 0.5) ** 2 / 0.98)
    assert np.max(np.abs(run.snapshots[-1].samples[0] - exact)) < 1e-10
    assert complex(*run.meta["time_factor"]) == TIME_FACTOR


def test_kdv_conserves_mass_and_reality(g2):
    run = evolve(g2, derive_flow(2, 3), 0.02, snapshots=3)
    mass = [np.sum(s.samples[0, :-1]) for s in run.snapshots]
    assert max(abs(m - mass[0]) for m in mass) < 1e-10
    assert max(np.max(np.abs(s.samples.imag)) for s in run.snapshots) < 1e-12


def test_boussinesq_is_flagged_ill_posed():
    p = builtin("gaussian", n=3, amplitude=[0.1, 0.05], sigma=1.2)
    kap = np.array([1.0, 2.0])
    M = linear_multipliers(derive_flow(3, 2), kap)
    eig = np.linalg.eigvals(M[1])
    np.testing.assert_allclose(np.sort(eig.real), [-4 / np.sqrt(3), 4 / np.sqrt(3)], rtol=1e-12)
    run = evolve(p, derive_flow(3, 2), 0.01, snapshots=2)
    assert run.meta["ill_posed"]


def test_time_step_guard(g2):
    with pytest.raises(ValueError):
        evolve(g2, derive_flow(2, 3), 0.01, dt=0.5, snapshots=2)


def test_blow_up_guard():
    p = builtin("gaussian", n=2, amplitude=0.3, sigma=0.7)
    with pytest.raises((BlowUpError, ValueError)):
        evolve(p, derive_flow(2, 3), 0.01, snapshots=2, blowup=1e-12)


def test_partial_fractions():
    for n, k in ((2, 1), (3, 2), (7, 3)):
        lhs, rhs = partial_fraction_residual(n, k, 1.1 + 0.4j, 0.3 - 0.9j)
        assert abs(lhs - rhs) < 1e-12 * abs(rhs)


def test_quadrature_radii_integrate_log_grid():
    r, w = quadrature_radii(8.0, 32)
    assert r.min() > 1e-4 and r.max() < 8.0
    assert np.sum(w) == pytest.approx(8.0 - 1e-4, rel=1e-12)


def test_first_hamiltonian_is_quadratic_mass(g2):
    r, w = quadrature_radii(8.0, 32)
    rec = compute_record(g2, r)
    set_quadrature(rec, w, 1e-4)
    H1 = hamiltonians(rec, [1]).values[1]
    expected = 0.25j * np.sum(g2.samples[0, :-1] ** 2) * g2.h
    assert abs(H1 - expected) < 1e-5 * abs(expected)


def test_zero_potential_hamiltonians_vanish():
    rec = compute_record(builtin("zero", n=2), np.geomspace(0.3, 8, 8))
    vals = hamiltonians(rec, [1, 3]).values
    assert all(abs(v) < 1e-12 for v in vals.values())


def test_plemelj_rejects_points_on_the_contour(g2):
    r, w = quadrature_radii(8.0, 8)
    rec = compute_record(g2, r)
    set_quadrature(rec, w, 1e-4)
    with pytest.raises(ValueError, match="contour"):
        plemelj_phi(rec, 1, 2.0 + 0.0j)

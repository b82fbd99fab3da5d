import numpy as np
import pytest

from gdflows.analysis import (DegenerateError, _unwrap_from_tail, block_indices, canonical,
                              check_selfadjoint, extract_blocks, factorize)
from gdflows.potential import builtin
from gdflows.sectors import RayPoint
from gdflows.waves import ScatteringRecord, compute_record


@pytest.fixture(scope="module")
def rec2():
    p = builtin("gaussian", n=2, amplitude=0.1)
    return p, compute_record(p, np.geomspace(0.3, 8, 8))


def test_block_indices():
    assert block_indices(2, 1) == (1, 0, 1)
    assert block_indices(3, 1)[0] == 1 and block_indices(3, 2)[0] == 0


def test_factorization_triangular():
    pt = RayPoint(2, 1, 1.0)
    a = np.array([[1.2 + 0.1j, 0.3j], [0.2, 0.9]])
    f = factorize(a, pt)
    assert abs(f.a_plus[1, 0]) < 1e-15 and abs(f.a_minus[0, 1]) < 1e-15
    Delta = np.linalg.det(a)
    np.testing.assert_allclose(f.ratio(), [Delta / a[1, 1] / a[0, 0], a[1, 1] * a[0, 0] / Delta])


def test_factorization_vanishing_pivot():
    with pytest.raises(DegenerateError):
        factorize(np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex), RayPoint(2, 1, 1.0))


def test_unwrap_from_tail_principal_at_largest_radius():
    phase = np.linspace(6 * np.pi, 0.1, 200)
    lg, wind = _unwrap_from_tail(np.exp(1j * phase))
    np.testing.assert_allclose(lg.imag, phase, atol=1e-12)
    assert wind[-1] == 0 and wind[0] == 3


def test_actions_real_for_real_n2_potential(rec2):
    _, rec = rec2
    cv = canonical(rec, 1)
    assert np.max(np.abs(cv.p.imag)) < 1e-8
    assert np.all(cv.p.real >= 0) and cv.p.real[0] > 0


def test_degenerate_angles_are_nan():
    rec = compute_record(builtin("zero", n=2), [0.5, 1.0])
    cv = canonical(rec, 1)
    assert not np.any(cv.q_valid)
    np.testing.assert_allclose(cv.p, 0, atol=1e-12)


def test_vanishing_delta_raises():
    a = np.zeros((2, 2, 2), dtype=complex)
    rec = ScatteringRecord(2, np.array([1, 1]), np.array([0.5, 1.0]), a)
    with pytest.raises(DegenerateError):
        canonical(rec, 1)


def test_extract_blocks(rec2):
    _, rec = rec2
    bd = extract_blocks(rec.a[0], rec.points()[0])
    assert bd.block(1).shape == (2, 2)
    assert abs(bd.determinants[0] - 1) < 1e-8


def test_selfadjoint_identities(rec2):
    p, rec = rec2
    out = check_selfadjoint(p, rec)
    for key in ("identity_delta", "identity_p", "identity_q"):
        assert out[key] < 1e-8


def test_canonical_csv_rows(rec2):
    _, rec = rec2
    rows = canonical(rec, 1).to_csv_rows()
    assert len(rows) == 8
    assert all("np." not in r for r in rows)
    assert len(rows[0].split(",")) == 9

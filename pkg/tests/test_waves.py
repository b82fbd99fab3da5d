import numpy as np
import pytest

from gdflows.analysis import check_rotation
from gdflows.potential import builtin
from gdflows.sectors import RayPoint
from gdflows.waves import (THREADS_ENV, ScatteringRecord, compute_record, delta_of_z,
                           scatter_point, square_well_oracle, square_well_transmission,
                           thread_count)


@pytest.fixture(scope="module")
def gauss3():
    return builtin("gaussian", n=3, amplitude=[0.1, 0.05])


def test_zero_potential_identity():
    rec = compute_record(builtin("zero", n=3), [0.5, 2.0])
    np.testing.assert_allclose(rec.a, np.broadcast_to(np.eye(3), rec.a.shape), atol=1e-10)


def test_square_well_oracle():
    A, w = 0.5, 2.0
    p = builtin("square_well", n=2, amplitude=A, width=w)
    for r in (0.3, 1.1, 4.0):
        pt = RayPoint(2, 1, r)
        a = scatter_point(p, pt).a
        o = square_well_oracle(A, w, pt)
        assert np.max(np.abs(a - o) / np.abs(o)) < 1e-6


def test_delta_matches_transmission_off_axis():
    A, w = 0.5, 2.0
    p = builtin("square_well", n=2, amplitude=A, width=w)
    for z in (1.0 + 0.5j, -0.7 - 0.4j):
        d = delta_of_z(p, z)
        t = square_well_transmission(A, w, z)
        assert abs(d[0, 0] - t) < 1e-8 * abs(t)
        assert abs(d[0, 0] * d[1, 1] - 1) < 1e-8


def test_structural_invariants(gauss3):
    res = scatter_point(gauss3, RayPoint(3, 1, 1.0))
    assert res.x_dependence < 1e-7
    assert res.det_error < 1e-8
    assert res.leakage < 1e-6


def test_rotation_invariance(gauss3):
    out = check_rotation(gauss3, [RayPoint(3, 0, 0.8), RayPoint(3, 1, 1.3)])
    assert out["max_deviation"] < 1e-8


def test_record_csv_round_trip(tmp_path):
    p = builtin("gaussian", n=2, amplitude=0.3, sigma=0.7)
    rec = compute_record(p, [0.4, 1.7])
    rec.save(tmp_path / "rec")
    back = ScatteringRecord.load(tmp_path / "rec")
    assert np.array_equal(back.a, rec.a) and np.array_equal(back.radii, rec.radii)
    assert back.to_csv() == rec.to_csv()
    assert back.meta["potential_hash"] == p.hash()


def test_thread_count_precedence(monkeypatch):
    monkeypatch.setenv(THREADS_ENV, "3")
    assert thread_count() == 3
    assert thread_count(2) == 2
    monkeypatch.delenv(THREADS_ENV)
    assert thread_count() == 1


def test_threads_do_not_change_results():
    p = builtin("gaussian", n=2, amplitude=0.3, sigma=0.7)
    a = compute_record(p, [0.5, 1.5, 3.0], threads=1).a
    b = compute_record(p, [0.5, 1.5, 3.0], threads=3).a
    assert np.array_equal(a, b)

import cmath
import math

import numpy as np
import pytest

from gdflows.sectors import (RayPoint, RootSystem, block_layout, block_ray, frame_at,
                             local_ordering, permutation_cycles, permutation_matrix,
                             projection_mask, star)


def test_ray_count_and_first_ray():
    rs = RootSystem(3)
    assert rs.num_rays == 6
    assert cmath.isclose(rs.rays[0], -1j, abs_tol=1e-15)


def test_n3_orderings():
    a = cmath.exp(2j * math.pi / 3)
    np.testing.assert_allclose(local_ordering(3, 0), [1, a, 1 / a], atol=1e-14)
    np.testing.assert_allclose(local_ordering(3, 1), [1, 1 / a, a], atol=1e-14)


def test_printed_permutations():
    assert permutation_cycles(3, 0) == [(2, 3)]
    assert permutation_cycles(3, 1) == [(1, 2)]
    assert permutation_cycles(4, 1) == [(1, 2), (3, 4)]


def test_permutation_conjugates_orderings():
    for n in (2, 3, 4):
        for j in range(2 * n if n > 2 else 2):
            P = permutation_matrix(n, j)
            J0 = np.diag(local_ordering(n, j))
            J1 = np.diag(local_ordering(n, (j + 1) % RootSystem(n).num_rays))
            np.testing.assert_allclose(P @ J0 @ P.T, J1, atol=1e-14)


def test_ordering_decreases_inside_sector():
    for n in (2, 3, 4):
        rs = RootSystem(n)
        for j in range(rs.num_rays):
            z = cmath.exp(1j * rs.sector_angle(j))
            keys = (1j * local_ordering(n, j) * z).real
            assert np.all(np.diff(keys) < 0)


def test_n2_conventions():
    rs = RootSystem(2)
    assert rs.fundamental_rays() == (1,)
    assert RayPoint(2, 0, 1.0).value == pytest.approx(1.0)
    assert RayPoint(2, 1, 1.0).value == pytest.approx(-1.0)


def test_block_placement():
    assert block_ray(3, 1) == 1 and block_ray(3, 2) == 0
    assert block_ray(2, 1) == 1
    assert block_layout(3, 1)


def test_rotation_maps_rays():
    xi = RayPoint(3, 0, 1.5)
    rot = xi.rotate()
    assert rot.radius == pytest.approx(1.5)
    assert rot.ray != xi.ray


def test_frame_and_mask_shapes():
    fr = frame_at(RayPoint(3, 1, 1.0))
    assert fr.Lambda_z.shape == (3, 3)
    np.testing.assert_allclose(fr.Lambda_z @ fr.Lambda_z_inv, np.eye(3), atol=1e-12)
    m = projection_mask(RayPoint(3, 1, 1.0))
    a = np.arange(9.0).reshape(3, 3) + 1
    b = m.apply(a)
    assert np.count_nonzero(b) < 9


def test_invalid_sector_index():
    with pytest.raises(ValueError):
        local_ordering(3, 99)


def test_star_is_involution():
    xi = RayPoint(3, 1, 0.7)
    back = star(star(xi))
    assert back.ray == xi.ray and back.radius == pytest.approx(xi.radius)

import numpy as np
import pytest

from gdflows.potential import (DecayError, Potential, builtin, companion, is_self_adjoint)


def test_gaussian_samples_match_closure():
    p = builtin("gaussian", n=2, amplitude=0.3, sigma=0.7)
    np.testing.assert_allclose(p.samples[0], 0.3 * np.exp(-p.x**2 / (2 * 0.49)), atol=1e-15)
    np.testing.assert_allclose(p(0.123)[0], 0.3 * np.exp(-0.123**2 / 0.98), atol=1e-15)


def test_zero_potential():
    p = builtin("zero", n=3)
    assert p.is_zero
    assert p.samples.shape == (2, p.x.size)


def test_unknown_builtin():
    with pytest.raises(ValueError, match="unknown potential"):
        builtin("nope")


def test_decay_guard():
    with pytest.raises(DecayError):
        builtin("gaussian", n=2, amplitude=0.1, sigma=8.0)


def test_small_amplitude_guard():
    with pytest.raises(ValueError):
        builtin("gaussian", n=3, amplitude=[5.0, 5.0])


def test_square_well_edges_on_grid():
    with pytest.raises(ValueError, match="grid nodes"):
        builtin("square_well", n=2, width=2.005)


def test_csv_round_trip_is_exact():
    p = builtin("gaussian", n=3, amplitude=[0.2, 0.1], sigma=0.7)
    q = Potential.from_csv(p.to_csv())
    assert np.array_equal(p.samples, q.samples)
    assert q.hash() == p.hash()
    assert q.to_csv() == p.to_csv()


def test_off_grid_interpolation_for_sampled_data():
    p = builtin("gaussian", n=2, amplitude=0.3, sigma=0.7)
    q = Potential.from_csv(p.to_csv())
    for off in (0.2113, 0.5, 0.7887):
        np.testing.assert_allclose(q.node_values(off), p.node_values(off), atol=1e-12)


def test_companion_free_part():
    p = builtin("zero", n=3)
    sys_ = companion(p, 1.0 + 0.5j)
    assert sys_ is not None


def test_self_adjoint_n2_real():
    p = builtin("gaussian", n=2, amplitude=0.3)
    ok, _ = is_self_adjoint(p)
    assert ok
    q = p.replace_samples(p.samples * 1j)
    assert not is_self_adjoint(q)[0]


def test_self_adjoint_n3_hermitian_example():
    # u_1 real, u_0 = v - (i/2) u_1' with v real gives a Hermitian n = 3 operator
    x = np.linspace(-20, 20, 4001)
    u1 = 0.1 * np.exp(-x**2)
    v = 0.05 * np.exp(-x**2 / 2)
    u0 = v - 0.5j * np.gradient(u1, x)
    u0 = v - 0.5j * (-2 * x) * u1
    p = Potential(3, 20.0, 0.01, np.array([u0, u1]))
    assert is_self_adjoint(p, tol=1e-8)[0]

import numpy as np
import pytest

from gdflows import brackets
from gdflows.brackets import (SmearedFunctional, WaveCache, block_flow,
                              bracket_form_symmetric, bracket_form_by_parts, derivative, fd_weights,
                              gradient_fd_check, plane_wave_wronskian,
                              plane_wave_wronskian_direct, predicted_bracket, raw_bracket,
                              wave_data, wronskian_of_waves)
from gdflows.potential import builtin
from gdflows.sectors import RayPoint


def test_fd_weights_central():
    np.testing.assert_allclose(fd_weights(1, (-1, 0, 1)), [-0.5, 0, 0.5], atol=1e-15)
    np.testing.assert_allclose(fd_weights(2, (-1, 0, 1)), [1, -2, 1], atol=1e-15)


def test_sixth_order_derivative():
    x = np.linspace(-3, 3, 601)
    y = np.sin(2 * x)
    np.testing.assert_allclose(derivative(y, x[1] - x[0], 1).real, 2 * np.cos(2 * x), atol=1e-9)
    np.testing.assert_allclose(derivative(y, x[1] - x[0], 2).real, -4 * y, atol=1e-7)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_plane_wave_wronskian(n):
    x = np.linspace(-1, 1, 5)
    a = np.exp(2j * np.pi * np.arange(n) / n)
    xi, eta = 1.3 * np.exp(0.2j), 0.7 * np.exp(-0.4j)
    np.testing.assert_allclose(plane_wave_wronskian(n, xi, eta, a[0], a[1], x),
                               plane_wave_wronskian_direct(n, xi, eta, a[0], a[1], x), rtol=1e-12)


def test_wronskian_identity_on_solver_waves():
    p = builtin("gaussian", n=2, amplitude=0.1)
    A = wave_data(p, RayPoint(2, 1, 1.3))
    B = wave_data(p, RayPoint(2, 1, 1.7))
    assert wronskian_of_waves(p, A, 0, B, 1)["relative_residual"] < 1e-8


def test_gradient_second_order():
    p = builtin("gaussian", n=2, amplitude=0.1)
    r = gradient_fd_check(p, (0, 1), RayPoint(2, 1, 1.0))
    assert abs(r["order"] - 2) < 0.2
    assert r["final_rel_error"] < 1e-5


def test_symmetric_and_integrated_forms_agree():
    rng = np.random.default_rng(1)
    p = builtin("gaussian", n=3, amplitude=[0.1, 0.1], sigma=0.7)
    x = p.x
    f = np.array([(rng.normal() + 1j) * np.exp(-(x - 0.3) ** 2) for _ in range(2)])
    g = np.array([(1 - 1j * rng.normal()) * np.exp(-(x + 0.2) ** 2 / 0.7) for _ in range(2)])
    a, b = bracket_form_symmetric(f, g, p, p.X), bracket_form_by_parts(f, g, p, p.X)
    assert abs(a - b) < 1e-6 * abs(a)


def test_test_function_is_compact():
    f = brackets.TestFunction(2, 1, 1.2, 0.3, 0.2, 2.4)
    assert f(0.2) == 0 and f(2.4) == 0 and f(1.2) > 0
    r, w = f.quadrature()
    assert np.all((r > 0.2) & (r < 2.4)) and w.sum() == pytest.approx(2.2)


def test_raw_bracket_matches_kernel_n2():
    p = builtin("gaussian", n=2, amplitude=0.3, sigma=0.7)
    cache = WaveCache(p)
    f = brackets.TestFunction(2, 1, 1.2, 0.3, 0.2, 2.4, nodes=40)
    g = brackets.TestFunction(2, 1, 1.5, 0.3, 0.2, 2.4, nodes=40)
    F, G = SmearedFunctional(f, (0, 1)), SmearedFunctional(g, (1, 0))
    raw = raw_bracket(F, G, p, cache=cache)
    pred = predicted_bracket(F, G, p, cache=cache)["value"]
    assert abs(raw["value"] - pred) < 0.02 * abs(pred)
    assert len(raw["trace"]) == 3


def test_block_flow_is_conjugation():
    B = np.array([[1.0, 0.2j], [0.3, 1.1]])
    Bt = block_flow(B, 0.7)
    np.testing.assert_allclose(np.diag(Bt), np.diag(B))
    assert Bt[0, 1] == pytest.approx(B[0, 1] * np.exp(0.7j))

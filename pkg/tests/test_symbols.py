import numpy as np
import pytest

from gdflows.symbols import (DiffPoly, FlowEquation, GaussRational, compose, derive_flow,
                             identity_symbol, operator_symbol, order_drop_holds,
                             recomposition_residual)


def test_gauss_rational_arithmetic():
    a = GaussRational.parse("(1/2+3/4i)")
    assert complex(a * a) == pytest.approx(complex(0.5 + 0.75j) ** 2)
    assert complex(a / a) == pytest.approx(1.0)


def test_diffpoly_leibniz():
    u = DiffPoly.var(0)
    lhs = (u * u).dx()
    rhs = (u * DiffPoly.var(0, 1)).scale(2)
    assert lhs == rhs


def test_identity_is_neutral():
    L = operator_symbol(3)
    assert compose(identity_symbol(), L, depth=6).coefficient(3) == L.coefficient(3)


@pytest.mark.parametrize("nk", [(2, 1), (2, 3), (3, 1), (3, 2), (4, 3)])
def test_order_drop(nk):
    assert order_drop_holds(*nk)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_root_recomposition(n):
    assert not recomposition_residual(n, 6).coeffs


def test_translation_flows():
    f = derive_flow(2, 1)
    assert f.rhs[0] == DiffPoly.var(0, 1).scale(GaussRational.parse("(0-1i)"))
    g = derive_flow(3, 1)
    for j in range(2):
        assert g.rhs[j] == DiffPoly.var(j, 1).scale(GaussRational.parse("(0-1i)"))


def test_kdv_form():
    f = derive_flow(2, 3)
    expected = (DiffPoly.var(0, 3).scale(GaussRational.parse("(0+1/4i)"))
                + (DiffPoly.var(0) * DiffPoly.var(0, 1)).scale(GaussRational.parse("(0-3/2i)")))
    assert f.rhs[0] == expected


def test_integer_ratio_rejected():
    with pytest.raises(ValueError, match="k/n is not an integer"):
        derive_flow(2, 4)


def test_flow_text_round_trip():
    f = derive_flow(3, 2)
    g = FlowEquation.from_text(f.to_text())
    assert g.rhs == f.rhs and (g.n, g.k, g.depth) == (f.n, f.k, f.depth)


def test_evaluate_matches_numpy():
    f = derive_flow(2, 3)
    x = np.linspace(-3, 3, 7)
    u = np.exp(-x**2)
    # derivs[m, j] = d^m u_j / dx^m
    derivs = np.array([[u], [-2 * x * u], [(4 * x**2 - 2) * u], [(-8 * x**3 + 12 * x) * u]])
    out = f.evaluate(derivs)[0]
    np.testing.assert_allclose(out, 0.25j * derivs[3, 0] - 1.5j * u * derivs[1, 0])

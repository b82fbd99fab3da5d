"""Exact pseudodifferential symbol calculus over differential polynomials.

A symbol is a truncated Laurent series ``sum_d c_d(x) xi^d`` whose
coefficients are polynomials in the formal variables ``u_j^{(m)}`` (the m-th
x-derivative of u_j) with Gaussian-rational coefficients.  Composition uses
``D = -i d/dx``:

    (A o B)(x, xi) = sum_m (1/m!) d_xi^m A  D_x^m B.

The engine derives the flows ``dL/dt = [L^{k/n}_+, L]`` as exact
differential polynomials.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce
from math import factorial
from typing import Iterable, Mapping

import numpy as np

__all__ = [
    "GaussRational",
    "DiffPoly",
    "PsdoSymbol",
    "FlowEquation",
    "compose",
    "power",
    "nth_root",
    "positive_part",
    "operator_symbol",
    "derive_flow",
    "DepthExhausted",
]


class DepthExhausted(ValueError):
    """A composition would have no reliable terms left."""


# --- Gaussian rationals -----------------------------------------------------------


@dataclass(frozen=True, slots=True)
class GaussRational:
    re: Fraction = Fraction(0)
    im: Fraction = Fraction(0)

    @classmethod
    def of(cls, v) -> "GaussRational":
        if isinstance(v, GaussRational):
            return v
        if isinstance(v, complex):
            return cls(Fraction(v.real), Fraction(v.imag))
        return cls(Fraction(v), Fraction(0))

    def __add__(self, o):
        o = GaussRational.of(o)
        return GaussRational(self.re + o.re, self.im + o.im)

    __radd__ = __add__

    def __neg__(self):
        return GaussRational(-self.re, -self.im)

    def __sub__(self, o):
        return self + (-GaussRational.of(o))

    def __mul__(self, o):
        o = GaussRational.of(o)
        return GaussRational(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)

    __rmul__ = __mul__

    def __truediv__(self, o):
        o = GaussRational.of(o)
        den = o.re * o.re + o.im * o.im
        if den == 0:
            raise ZeroDivisionError("division by zero Gaussian rational")
        return self * GaussRational(o.re / den, -o.im / den)

    def __bool__(self):
        return bool(self.re) or bool(self.im)

    def __complex__(self):
        return complex(float(self.re), float(self.im))

    def __str__(self):
        return f"({self.re}{'+' if self.im >= 0 else '-'}{abs(self.im)}i)"

    @classmethod
    def parse(cls, text: str) -> "GaussRational":
        m = re.fullmatch(r"\(\s*(-?[\d/]+)\s*([+-])\s*([\d/]+)i\s*\)", text.strip())
        if not m:
            raise ValueError(f"cannot parse coefficient {text!r}")
        im = Fraction(m.group(3)) * (1 if m.group(2) == "+" else -1)
        return cls(Fraction(m.group(1)), im)


ONE = GaussRational(Fraction(1))
I = GaussRational(Fraction(0), Fraction(1))
MINUS_I = GaussRational(Fraction(0), Fraction(-1))

# --- differential polynomials -----------------------------------------------------

Monomial = tuple  # sorted tuple of (j, m) factors, repetitions allowed


def _mono_key(mono: Monomial):
    # graded lexicographic on (u-index, derivative order)
    return (len(mono), sum(m for _, m in mono), mono)


class DiffPoly:
    """Polynomial in the variables u_j^{(m)} with Gaussian-rational coefficients."""

    __slots__ = ("terms",)

    def __init__(self, terms: Mapping[Monomial, GaussRational] | None = None):
        clean = {}
        for mono, c in (terms or {}).items():
            c = GaussRational.of(c)
            if c:
                clean[tuple(sorted(mono))] = clean.get(tuple(sorted(mono)), GaussRational()) + c
        self.terms = {k: v for k, v in sorted(clean.items(), key=lambda kv: _mono_key(kv[0])) if v}

    @classmethod
    def const(cls, c) -> "DiffPoly":
        return cls({(): GaussRational.of(c)})

    @classmethod
    def var(cls, j: int, m: int = 0) -> "DiffPoly":
        return cls({((j, m),): ONE})

    def is_zero(self) -> bool:
        return not self.terms

    def __eq__(self, o):
        return isinstance(o, DiffPoly) and self.terms == o.terms

    def __hash__(self):
        return hash(tuple(self.terms.items()))

    def __add__(self, o: "DiffPoly") -> "DiffPoly":
        t = dict(self.terms)
        for k, v in o.terms.items():
            t[k] = t.get(k, GaussRational()) + v
        return DiffPoly(t)

    def __neg__(self):
        return DiffPoly({k: -v for k, v in self.terms.items()})

    def __sub__(self, o):
        return self + (-o)

    def scale(self, c) -> "DiffPoly":
        c = GaussRational.of(c)
        return DiffPoly({k: v * c for k, v in self.terms.items()})

    def __mul__(self, o: "DiffPoly") -> "DiffPoly":
        t: dict = {}
        for k1, v1 in self.terms.items():
            for k2, v2 in o.terms.items():
                k = tuple(sorted(k1 + k2))
                t[k] = t.get(k, GaussRational()) + v1 * v2
        return DiffPoly(t)

    def dx(self) -> "DiffPoly":
        """Total x-derivative (product rule)."""
        t: dict = {}
        for mono, c in self.terms.items():
            for i, (j, m) in enumerate(mono):
                new = tuple(sorted(mono[:i] + ((j, m + 1),) + mono[i + 1:]))
                t[new] = t.get(new, GaussRational()) + c
        return DiffPoly(t)

    def D(self, times: int = 1) -> "DiffPoly":
        """Apply D = -i d/dx repeatedly."""
        p = self
        for _ in range(times):
            p = p.dx().scale(MINUS_I)
        return p

    def substitute_zero(self, j: int) -> "DiffPoly":
        return DiffPoly({k: v for k, v in self.terms.items() if all(a != j for a, _ in k)})

    def max_derivative(self) -> int:
        return max((m for mono in self.terms for _, m in mono), default=0)

    def linear_part(self) -> dict[tuple[int, int], complex]:
        return {mono[0]: complex(c) for mono, c in self.terms.items() if len(mono) == 1}

    def evaluate(self, derivs: np.ndarray) -> np.ndarray:
        """Evaluate on grid data ``derivs[m, j, :] = d^m u_j / dx^m``."""
        out = np.zeros(derivs.shape[-1], dtype=complex)
        for mono, c in self.terms.items():
            term = np.full(derivs.shape[-1], complex(c))
            for j, m in mono:
                term = term * derivs[m, j]
            out += term
        return out

    def to_text(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for mono, c in self.terms.items():
            name = "*".join(f"u{j}_{m}" for j, m in mono) or "1"
            parts.append(f"{c} {name}")
        return " + ".join(parts)

    @classmethod
    def from_text(cls, text: str) -> "DiffPoly":
        text = text.strip()
        if text == "0":
            return cls()
        t = {}
        for m in re.finditer(r"(\([^)]*\))\s+([\w*]+)", text):
            c = GaussRational.parse(m.group(1))
            name = m.group(2)
            mono = () if name == "1" else tuple(
                (int(f[1:].split("_")[0]), int(f.split("_")[1])) for f in name.split("*"))
            t[mono] = t.get(mono, GaussRational()) + c
        return cls(t)

    def __repr__(self):
        return f"DiffPoly({self.to_text()})"


# --- symbols -------------------------------------------------------------------------


def _falling(a: int, m: int) -> int:
    return reduce(lambda acc, i: acc * (a - i), range(m), 1)


@dataclass(frozen=True)
class PsdoSymbol:
    """Truncated symbol; terms of degree < ``valid_min`` are unknown."""

    coeffs: Mapping[int, DiffPoly]
    valid_min: int

    def __post_init__(self):
        c = {d: p for d, p in self.coeffs.items() if d >= self.valid_min and not p.is_zero()}
        object.__setattr__(self, "coeffs", dict(sorted(c.items(), reverse=True)))

    @property
    def top(self) -> int:
        return max(self.coeffs, default=self.valid_min)

    @property
    def depth(self) -> int:
        return self.top - self.valid_min

    def coefficient(self, d: int) -> DiffPoly:
        if d < self.valid_min:
            raise DepthExhausted(f"degree {d} lies below the retained depth ({self.valid_min})")
        return self.coeffs.get(d, DiffPoly())

    def truncate(self, valid_min: int) -> "PsdoSymbol":
        return PsdoSymbol(self.coeffs, max(valid_min, self.valid_min))

    def __add__(self, o: "PsdoSymbol") -> "PsdoSymbol":
        c = dict(self.coeffs)
        for d, p in o.coeffs.items():
            c[d] = c.get(d, DiffPoly()) + p
        return PsdoSymbol(c, max(self.valid_min, o.valid_min))

    def __neg__(self):
        return PsdoSymbol({d: -p for d, p in self.coeffs.items()}, self.valid_min)

    def __sub__(self, o):
        return self + (-o)

    def is_exact(self) -> bool:
        """True for a differential operator stored without truncation."""
        return self.valid_min == EXACT

    def __eq__(self, o):
        return isinstance(o, PsdoSymbol) and self.valid_min == o.valid_min and \
            self.coeffs == o.coeffs

    def to_text(self) -> str:
        return " + ".join(f"[{p.to_text()}] xi^{d}" for d, p in self.coeffs.items()) or "0"


# sentinel for "no truncation": far below any degree reached in practice
EXACT = -(10**6)


def operator_symbol(n: int) -> PsdoSymbol:
    """Symbol of L = xi^n + sum_{j<=n-2} u_j xi^j with formal u_j."""
    c = {n: DiffPoly.const(1)}
    for j in range(n - 1):
        c[j] = DiffPoly.var(j)
    return PsdoSymbol(c, EXACT)


def identity_symbol() -> PsdoSymbol:
    return PsdoSymbol({0: DiffPoly.const(1)}, EXACT)


def compose(A: PsdoSymbol, B: PsdoSymbol, depth: int | None = None) -> PsdoSymbol:
    """Asymptotic composition, exact when both inputs are differential operators."""
    valid = max(A.valid_min + B.top, A.top + B.valid_min)
    if depth is not None:
        valid = max(valid, A.top + B.top - depth)
    exact_poly = A.is_exact() and B.is_exact() and min(A.coeffs, default=0) >= 0
    if exact_poly:
        valid = EXACT
    out: dict[int, DiffPoly] = {}
    for a, pa in A.coeffs.items():
        for b, pb in B.coeffs.items():
            m = 0
            while True:
                deg = a + b - m
                if deg < valid:
                    break
                fall = _falling(a, m)
                if a >= 0 and m > a:
                    break
                if fall:
                    c = GaussRational(Fraction(fall, factorial(m)))
                    term = (pa * pb.D(m)).scale(c)
                    out[deg] = out.get(deg, DiffPoly()) + term
                m += 1
    res = PsdoSymbol(out, valid)
    if not res.coeffs and valid > A.top + B.top:
        raise DepthExhausted("composition retains no terms at this depth")
    return res


def power(b: PsdoSymbol, k: int, depth: int | None = None) -> PsdoSymbol:
    if k < 0:
        raise ValueError("negative powers are not supported")
    out = identity_symbol()
    for _ in range(k):
        out = compose(out, b, depth)
    return out


def nth_root(L: PsdoSymbol, n: int, depth: int) -> PsdoSymbol:
    """The root b = xi + w_0 + w_{-1} xi^{-1} + ... with b^n = L, to ``depth`` terms below xi."""
    if L.top != n or L.coefficient(n) != DiffPoly.const(1):
        raise ValueError("nth_root needs a monic symbol of degree n")
    if not L.coefficient(n - 1).is_zero():
        raise ValueError("nth_root needs a vanishing xi^(n-1) coefficient")
    coeffs = {1: DiffPoly.const(1)}
    for d in range(0, -depth, -1):
        trial = PsdoSymbol(coeffs, d)
        pw = power(trial, n)
        target = n - 1 + d
        resid = L.coefficient(target) - pw.coefficient(target)
        coeffs[d] = resid.scale(GaussRational(Fraction(1, n)))
    return PsdoSymbol(coeffs, 1 - depth)


def positive_part(B: PsdoSymbol) -> PsdoSymbol:
    if B.valid_min > 0:
        raise DepthExhausted("the degree-0 coefficient is not retained")
    return PsdoSymbol({d: p for d, p in B.coeffs.items() if d >= 0}, EXACT)


# --- flows ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FlowEquation:
    """du_j/dt = rhs[j] for the flow dL/dt = [L^{k/n}_+, L] (literal form)."""

    n: int
    k: int
    rhs: tuple[DiffPoly, ...]
    depth: int

    def evaluate(self, derivs: np.ndarray) -> np.ndarray:
        return np.array([p.evaluate(derivs) for p in self.rhs])

    def max_derivative(self) -> int:
        return max(p.max_derivative() for p in self.rhs)

    def to_text(self) -> str:
        lines = [f"# flow n={self.n} k={self.k} depth={self.depth}"]
        lines += [f"du{j}/dt = {p.to_text()}" for j, p in enumerate(self.rhs)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "FlowEquation":
        lines = [ln for ln in text.strip().splitlines() if ln.strip()]
        m = re.match(r"#\s*flow n=(\d+) k=(\d+) depth=(\d+)", lines[0])
        if not m:
            raise ValueError("missing flow header")
        rhs = tuple(DiffPoly.from_text(ln.split("=", 1)[1]) for ln in lines[1:])
        return cls(int(m.group(1)), int(m.group(2)), rhs, int(m.group(3)))


def commutator(A: PsdoSymbol, B: PsdoSymbol) -> PsdoSymbol:
    return compose(A, B) - compose(B, A)


def derive_flow(n: int, k: int, depth: int | None = None) -> FlowEquation:
    """Differential polynomials du_j/dt from the commutator [L^{k/n}_+, L]."""
    if n < 2 or k < 1:
        raise ValueError("need n >= 2 and k >= 1")
    if k % n == 0:
        raise ValueError(f"flows are defined only where k/n is not an integer; got k/n = {k // n}")
    depth = n + k + 2 if depth is None else depth
    L = operator_symbol(n)
    b = nth_root(L, n, depth)
    bk = power(b, k)
    if bk.valid_min > 0:
        raise DepthExhausted(f"depth {depth} too small to resolve the differential part")
    P = positive_part(bk)
    C = commutator(P, L)
    for d in (n, n - 1):
        if not C.coefficient(d).is_zero():
            raise AssertionError(f"commutator has a nonzero xi^{d} coefficient")
    if any(d >= n - 1 for d in C.coeffs) or any(d < 0 for d in C.coeffs):
        raise AssertionError("commutator is not a differential operator of order <= n-2")
    rhs = tuple(C.coefficient(j) for j in range(n - 1))
    return FlowEquation(n, k, rhs, depth)


def order_drop_holds(n: int, k: int, depth: int | None = None) -> bool:
    """Symbolic check that the xi^n and xi^(n-1) coefficients of the commutator vanish."""
    depth = n + k + 2 if depth is None else depth
    L = operator_symbol(n)
    P = positive_part(power(nth_root(L, n, depth), k))
    C = commutator(P, L)
    return C.coefficient(n).is_zero() and C.coefficient(n - 1).is_zero()


def recomposition_residual(n: int, depth: int) -> PsdoSymbol:
    """b^n - L on the retained degrees (zero symbol if the root is exact there)."""
    L = operator_symbol(n)
    b = nth_root(L, n, depth)
    pw = power(b, n)
    return (pw - L).truncate(pw.valid_min)

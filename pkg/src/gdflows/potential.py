"""Coefficients of the operator L = D^n + u_{n-2} D^{n-2} + ... + u_0.

``D = -i d/dx``.  Only u_0 .. u_{n-2} are stored; u_{n-1} = 0 and u_n = 1.
"""
from __future__ import annotations

import hashlib
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import hermite as H

from .sectors import SectorFrame

__all__ = [
    "Potential",
    "CompanionSystem",
    "GaugedSystem",
    "DecayError",
    "companion",
    "gauge",
    "gauged_matrix",
    "is_self_adjoint",
    "builtin",
    "BUILTINS",
]

Coefficient = Callable[[np.ndarray], np.ndarray]


class DecayError(ValueError):
    """Potential does not decay to the required tolerance at x = +-X."""


def _grid(X: float, h: float) -> np.ndarray:
    N = int(round(2 * X / h))
    if abs(N * h - 2 * X) > 1e-9 * X:
        raise ValueError(f"2X = {2 * X} is not a multiple of h = {h}")
    return -X + h * np.arange(N + 1)


def _spectral_shift(samples: np.ndarray, h: float, shift: float) -> np.ndarray:
    """Trigonometric interpolation of periodic samples at x + shift."""
    N = samples.shape[-1]
    k = 2 * np.pi * np.fft.fftfreq(N, d=h)
    return np.fft.ifft(np.fft.fft(samples, axis=-1) * np.exp(1j * k * shift), axis=-1)


@dataclass(eq=False)
class Potential:
    """Sampled (and optionally analytic) coefficients u_0 .. u_{n-2}.

    Parameters
    ----------
    n : int
        Order of the operator.
    X, h : float
        Half-width of the truncated line and the grid step.
    samples : array of shape (n - 1, N + 1)
        Values of u_j on the grid ``-X + h*i``.
    funcs : sequence of callables, optional
        Exact coefficient functions; used in preference to interpolating the
        samples when the solver needs values off the grid.
    """

    n: int
    X: float
    h: float
    samples: np.ndarray
    funcs: Sequence[Coefficient] | None = None
    name: str = "custom"
    params: dict = field(default_factory=dict)
    decay_tol: float = 1e-12

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("order must be at least 2")
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=complex))
        x = self.x
        if self.samples.shape != (self.n - 1, x.size):
            raise ValueError(
                f"samples must have shape {(self.n - 1, x.size)}, got {self.samples.shape}"
            )
        self.samples.setflags(write=False)

    @classmethod
    def from_functions(cls, n, funcs, X=20.0, h=0.01, **kw) -> "Potential":
        x = _grid(X, h)
        samples = np.array([np.asarray(f(x), dtype=complex) * np.ones_like(x) for f in funcs])
        return cls(n, X, h, samples, funcs=tuple(funcs), **kw)

    @property
    def x(self) -> np.ndarray:
        return _grid(self.X, self.h)

    @property
    def is_zero(self) -> bool:
        return not np.any(self.samples)

    def __call__(self, x) -> np.ndarray:
        """Coefficient values, shape (n - 1, len(x))."""
        x = np.asarray(x, dtype=float)
        if self.funcs is not None:
            return np.array([np.asarray(f(x), dtype=complex) * np.ones_like(x) for f in self.funcs])
        return np.array([np.interp(x, self.x, s.real) + 1j * np.interp(x, self.x, s.imag)
                         for s in self.samples])

    def node_values(self, offset: float) -> np.ndarray:
        """Coefficients at ``x_i + offset*h`` for every grid cell i (N cells)."""
        x = self.x[:-1] + offset * self.h
        if self.funcs is not None:
            return self(x)
        return _spectral_shift(self.samples[:, :-1], self.h, offset * self.h)

    def derivatives(self, order: int) -> np.ndarray:
        """Spectral x-derivatives, shape (order + 1, n - 1, N + 1)."""
        s = self.samples[:, :-1]
        N = s.shape[-1]
        k = 2 * np.pi * np.fft.fftfreq(N, d=self.h)
        sh = np.fft.fft(s, axis=-1)
        out = np.empty((order + 1, self.n - 1, N + 1), dtype=complex)
        for m in range(order + 1):
            d = np.fft.ifft(sh * (1j * k) ** m, axis=-1)
            out[m, :, :-1] = d
            out[m, :, -1] = d[:, 0]
        out[0] = self.samples
        return out

    def full_coefficients(self) -> np.ndarray:
        """u_0 .. u_n on the grid, including u_{n-1} = 0 and u_n = 1."""
        N1 = self.x.size
        return np.vstack([self.samples, np.zeros((1, N1)), np.ones((1, N1))])

    def boundary_magnitude(self) -> float:
        return float(np.max(np.abs(self.samples[:, [0, -1]])))

    def check_decay(self, tol: float | None = None) -> None:
        tol = self.decay_tol if tol is None else tol
        b = self.boundary_magnitude()
        if b >= tol:
            raise DecayError(f"|u(+-X)| = {b:.3g} exceeds decay_tol = {tol:.3g} at X = {self.X}")

    def effective_support(self, tol: float = 1e-17) -> tuple[float, float]:
        """Smallest grid interval outside of which all |u_j| < tol."""
        big = np.nonzero(np.max(np.abs(self.samples), axis=0) >= tol)[0]
        x = self.x
        if big.size == 0:
            return 0.0, 0.0
        return float(x[big[0]]), float(x[big[-1]])

    def hash(self) -> str:
        m = hashlib.sha256()
        m.update(f"{self.n}|{self.X!r}|{self.h!r}|".encode())
        m.update(np.ascontiguousarray(self.samples).tobytes())
        return m.hexdigest()[:16]

    def replace_samples(self, samples: np.ndarray, name: str | None = None) -> "Potential":
        return Potential(self.n, self.X, self.h, samples, None, name or self.name,
                         dict(self.params), self.decay_tol)

    # --- plain-text persistence -------------------------------------------------

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write(f"# n={self.n},X={self.X!r},h={self.h!r},name={self.name}\n")
        cols = ["x"] + [f"u{j}_{p}" for j in range(self.n - 1) for p in ("re", "im")]
        buf.write(",".join(cols) + "\n")
        for i, xi in enumerate(self.x):
            row = [repr(float(xi))]
            for j in range(self.n - 1):
                v = self.samples[j, i]
                row += [repr(float(v.real)), repr(float(v.imag))]
            buf.write(",".join(row) + "\n")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source) -> "Potential":
        text = str(source)
        if isinstance(source, Path) or "\n" not in text:
            text = Path(source).read_text()
        lines = text.strip().splitlines()
        if not lines[0].startswith("#"):
            raise ValueError("potential file must start with a '# n=...,X=...,h=...' header")
        meta = dict(item.split("=", 1) for item in lines[0][1:].strip().split(","))
        n, X, h = int(meta["n"]), float(meta["X"]), float(meta["h"])
        data = np.array([[float(v) for v in ln.split(",")] for ln in lines[2:]])
        samples = data[:, 1::2] + 1j * data[:, 2::2]
        return cls(n, X, h, samples.T.copy(), name=meta.get("name", "file"))


# --- companion system and gauge --------------------------------------------------


@dataclass(frozen=True)
class CompanionSystem:
    """``D Phi = (J_z + q) Phi``; q has only its last row populated."""

    z: complex
    J_z: np.ndarray
    q: np.ndarray  # shape (N + 1, n, n)


@dataclass(frozen=True)
class GaugedSystem:
    frame: SectorFrame
    q_xi: np.ndarray  # shape (N + 1, n, n)


def companion(potential: Potential, z: complex) -> CompanionSystem:
    if z == 0:
        raise ValueError("companion system needs z != 0")
    n = potential.n
    Jz = np.diag(np.ones(n - 1, dtype=complex), 1)
    Jz[n - 1, 0] = z**n
    u = potential.samples
    q = np.zeros((u.shape[1], n, n), dtype=complex)
    q[:, n - 1, : n - 1] = -u.T
    return CompanionSystem(complex(z), Jz, q)


def gauged_matrix(u: np.ndarray, frame: SectorFrame) -> np.ndarray:
    """q_z = Lambda_z^{-1} q Lambda_z for coefficient values u of shape (n-1, M).

    Only the last row of q is nonzero, so q_z is the rank-one product of the
    last column of Lambda_z^{-1} with the last row of q Lambda_z.
    """
    n = frame.n
    left = frame.Lambda_z_inv[:, n - 1]                      # alpha_k / (n z^{n-1})
    kz = frame.wavenumbers
    powers = kz[None, :] ** np.arange(n - 1)[:, None]         # (z alpha_l)^j, j < n-1
    row = -np.einsum("jm,jl->ml", u, powers)                  # (M, n)
    return left[None, :, None] * row[:, None, :]


def gauge(system: CompanionSystem, frame: SectorFrame) -> GaugedSystem:
    if abs(system.z - frame.z) > 1e-14 * max(1.0, abs(frame.z)):
        raise ValueError("frame and companion system are at different spectral points")
    Lz = frame.Lambda_z
    Li = frame.Lambda_z_inv
    return GaugedSystem(frame, Li[None] @ system.q @ Lz[None])


def is_self_adjoint(potential: Potential, tol: float = 1e-10) -> tuple[bool, np.ndarray]:
    """Compare L with its formal adjoint ``L* = sum_j D^j o conj(u_j)``.

    Returns the verdict and the sup-norm residual of each coefficient
    u_0 .. u_{n-1} of ``L* - L``.
    """
    n = potential.n
    ders = potential.derivatives(n)           # d^m/dx^m u_j
    full = np.zeros((n + 1, n + 1, potential.x.size), dtype=complex)
    full[:, : n - 1] = ders
    full[0, n] = 1.0
    res = np.zeros(n)
    for p in range(n):
        adj = np.zeros(potential.x.size, dtype=complex)
        for j in range(p, n + 1):
            m = j - p
            # D^m conj(u_j) = (-i)^m d^m conj(u_j)
            adj += math.comb(j, m) * (-1j) ** m * np.conj(full[m, j])
        res[p] = np.max(np.abs(adj - full[0, p]))
    scale = max(1.0, float(np.max(np.abs(potential.samples)))) if potential.samples.size else 1.0
    return bool(np.all(res < tol * scale)), res


# --- built-in potentials --------------------------------------------------------------


def _listify(v, n):
    if np.isscalar(v):
        return [v] + [0.0] * (n - 2)
    v = list(v)
    if len(v) != n - 1:
        raise ValueError(f"expected {n - 1} per-coefficient values, got {len(v)}")
    return v


def _gaussian_funcs(n, amplitude, sigma, center):
    amps = _listify(amplitude, n)
    sig = sigma if not np.isscalar(sigma) else [sigma] * (n - 1)
    cen = center if not np.isscalar(center) else [center] * (n - 1)
    return [(lambda x, A=complex(A), s=float(s), c=float(c): A * np.exp(-((x - c) ** 2) / (2 * s * s)))
            for A, s, c in zip(amps, sig, cen)]


def gaussian_derivative(x, amplitude, sigma, center, m):
    """m-th derivative of A exp(-(x-c)^2 / 2 sigma^2) via Hermite polynomials."""
    t = (x - center) / (sigma * math.sqrt(2))
    coef = np.zeros(m + 1)
    coef[m] = 1.0
    return amplitude * (-1 / (sigma * math.sqrt(2))) ** m * H.hermval(t, coef) * np.exp(-t * t)


def _zero(n, X=20.0, h=0.01, **_):
    return Potential.from_functions(n, [lambda x: np.zeros_like(x)] * (n - 1), X, h, name="zero")


def _gaussian(n, amplitude=0.1, sigma=1.0, center=0.0, X=20.0, h=0.01, **_):
    p = Potential.from_functions(n, _gaussian_funcs(n, amplitude, sigma, center), X, h,
                                 name="gaussian",
                                 params=dict(amplitude=amplitude, sigma=sigma, center=center))
    return p


def _sech2(n, amplitude=0.1, width=1.0, X=20.0, h=0.01, **_):
    amps = _listify(amplitude, n)
    funcs = [(lambda x, A=complex(A): A / np.cosh(x / width) ** 2) for A in amps]
    return Potential.from_functions(n, funcs, X, h, name="sech2",
                                    params=dict(amplitude=amplitude, width=width))


def _square_well(n, amplitude=0.5, width=2.0, X=20.0, h=0.01, **_):
    half = width / 2
    if abs(round(half / h) * h - half) > 1e-12:
        raise ValueError("square well edges must fall on grid nodes (width/2 a multiple of h)")
    amps = _listify(amplitude, n)

    def make(A):
        def f(x):
            x = np.asarray(x, dtype=float)
            return np.where(np.abs(x) < half - 1e-12, complex(A), 0.0)
        return f

    return Potential.from_functions(n, [make(A) for A in amps], X, h, name="square_well",
                                    params=dict(amplitude=amplitude, width=width))


BUILTINS = {"zero": _zero, "gaussian": _gaussian, "sech2": _sech2, "square_well": _square_well}

# weighted L1 bound below which the built-ins are accepted as free of discrete data
SMALL_AMPLITUDE_BOUND = 1.0


def check_no_discrete_regime(p: Potential) -> None:
    """Reject built-ins outside the documented small-amplitude regime.

    For n = 2 a real potential has no bound state iff it is not attractive
    anywhere relevant; we use the sufficient condition u_0 >= 0.  For other
    cases we require ``sum_j int (1+|x|)|u_j| dx`` below SMALL_AMPLITUDE_BOUND.
    """
    u = p.samples
    if p.n == 2 and np.allclose(u.imag, 0.0):
        if np.min(u.real) < -1e-14:
            raise ValueError("n=2 real potential with a negative part has a bound state; "
                             "use a non-negative amplitude")
        return
    w = (1 + np.abs(p.x)) * np.sum(np.abs(u), axis=0)
    mass = float(np.sum(w) * p.h)
    if mass > SMALL_AMPLITUDE_BOUND:
        raise ValueError(f"potential mass {mass:.3g} exceeds the small-amplitude bound "
                         f"{SMALL_AMPLITUDE_BOUND}; discrete data cannot be excluded")


def builtin(name: str, n: int = 2, **params) -> Potential:
    """Construct a named test potential and validate decay and regime."""
    try:
        factory = BUILTINS[name]
    except KeyError:
        raise ValueError(f"unknown potential {name!r}; choose from {sorted(BUILTINS)}") from None
    decay_tol = params.pop("decay_tol", 1e-12)
    p = factory(n, **params)
    p.decay_tol = decay_tol
    p.check_decay()
    if name != "zero":
        check_no_discrete_regime(p)
    return p

"""Variational gradients, Wronskians and Poisson brackets of scattering data.

Gradients are read off the companion wave functions without numerical
differentiation:

    delta a_jk(xi) / delta u_l(x) = -i (D^l phi_k)(x, xi) psi_j(x, xi),

with ``D^l phi_k = Phi[l, k]`` (Phi = Lambda_z phi) and ``psi_j = Psi[j, n-1]``
(Psi = psi Lambda_z^{-1}).  The overall sign follows from the minus sign of
the last row of q; it cancels in every bracket.

Brackets of smeared functionals ``F = int a_jk(xi) f(xi) dxi`` are computed in
two independent ways:

* raw: smear the gradients over xi, apply the Gel'fand-Dikii operator
  matrix with finite-difference stencils, integrate over [-N, N];
* predicted: quadrature of the distributional kernel (principal-value part
  plus delta part) against f and g.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

from .potential import Potential
from .sectors import RayPoint, RootSystem, frame_at, permutation_matrix, projection_mask
from .waves import WaveFunction, scattering_matrix, solve_left, solve_right

__all__ = [
    "GRADIENT_SIGN",
    "WaveData",
    "wave_data",
    "GradientField",
    "gradient",
    "gradient_fd_check",
    "fd_weights",
    "derivative",
    "adjoint_derivatives",
    "wronskian",
    "wronskian_of_waves",
    "plane_wave_wronskian",
    "ell_apply",
    "bracket_form_symmetric",
    "bracket_form_by_parts",
    "TestFunction",
    "SmearedFunctional",
    "raw_bracket",
    "predicted_bracket",
    "kernel_Q",
    "canonical_gradient",
    "canonical_brackets",
    "pointwise_bracket",
    "pointwise_canonical",
    "block_flow",
    "canonical_coefficients",
    "local_bracket",
    "local_canonical",
    "KERNEL_SIGN",
    "WRONSKIAN_FORM_SIGN",
]

GRADIENT_SIGN = -1j
# Overall sign relating the exact-derivative bracket integrand to the Gel'fand-Dikii form.
WRONSKIAN_FORM_SIGN = 1.0
# Overall sign of the bracket kernel in these conventions (plane-wave Wronskian without i^{n-1}).
KERNEL_SIGN = 1.0


# --- wave data ----------------------------------------------------------------------


@dataclass
class WaveData:
    """Companion wave matrices and the scattering matrix at one ray point."""

    point: RayPoint
    x: np.ndarray
    Phi: np.ndarray   # (Nx, n, n)  rows: D^c phi_k
    Psi: np.ndarray   # (Nx, n, n)  last column: psi_j
    a: np.ndarray     # projected, local ordering

    @property
    def z(self) -> complex:
        return self.point.value


def wave_data(potential: Potential, point: RayPoint) -> WaveData:
    phi = solve_left(potential, point)
    psi = solve_right(potential, point)
    res = scattering_matrix(phi, psi)
    return WaveData(point, potential.x, phi.companion_matrix(), psi.companion_matrix(), res.a)


class WaveCache:
    def __init__(self, potential: Potential):
        self.potential = potential
        self._store: dict[tuple[int, float], WaveData] = {}

    def __call__(self, point: RayPoint) -> WaveData:
        key = (point.ray, float(point.radius))
        if key not in self._store:
            self._store[key] = wave_data(self.potential, point)
        return self._store[key]


# --- gradients ----------------------------------------------------------------------


@dataclass
class GradientField:
    entry: tuple[int, int]
    point: RayPoint
    x: np.ndarray
    values: np.ndarray  # (n - 1, Nx): delta a_jk / delta u_l

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))


def _grad_values(w: WaveData, j: int, k: int) -> np.ndarray:
    n = w.Phi.shape[1]
    return GRADIENT_SIGN * w.Phi[:, : n - 1, k].T * w.Psi[:, j, n - 1][None, :]


def gradient(potential: Potential, entry: tuple[int, int], point: RayPoint,
             waves: WaveData | None = None) -> GradientField:
    """Gradient of a_jk(xi) (local ordering, 0-based indices) w.r.t. u_0..u_{n-2}."""
    w = waves if waves is not None else wave_data(potential, point)
    j, k = entry
    return GradientField(entry, point, w.x, _grad_values(w, j, k))


def _bump(x: np.ndarray, center: float, width: float) -> np.ndarray:
    t = (x - center) / width
    out = np.zeros_like(x)
    inside = np.abs(t) < 1
    out[inside] = np.exp(-1.0 / (1.0 - t[inside] ** 2))
    return out


def gradient_fd_check(potential: Potential, entry: tuple[int, int], point: RayPoint,
                      coeff: int = 0, eps_list=(1e-3, 1e-4, 1e-5), amplitude: float = 100.0,
                      center: float = 0.0, width: float = 2.0) -> dict:
    """Central differences of a_jk under u_l -> u_l +- eps*bump versus the gradient.

    The bump amplitude is large so that the O(eps^2) truncation error dominates
    round-off over the whole eps sweep and the convergence order is measurable.
    """
    n = potential.n
    if potential.funcs is None:
        raise ValueError("finite-difference check needs an analytic potential")
    j, k = entry
    grad = gradient(potential, entry, point)
    x = potential.x

    def bump(xx):
        return amplitude * _bump(np.asarray(xx, dtype=float), center, width)

    predicted = np.sum(grad.values[coeff] * bump(x)) * potential.h  # integrand vanishes at +-X

    def perturbed(eps):
        funcs = list(potential.funcs)
        base = funcs[coeff]
        funcs[coeff] = lambda xx, base=base, eps=eps: base(xx) + eps * bump(xx)
        p = Potential.from_functions(n, funcs, potential.X, potential.h)
        return scattering_matrix(solve_left(p, point), solve_right(p, point)).raw[j, k]

    errors, fds = [], []
    for eps in eps_list:
        fd = (perturbed(eps) - perturbed(-eps)) / (2 * eps)
        fds.append(complex(fd))
        errors.append(abs(fd - predicted) / abs(predicted))
    orders = [math.log(errors[i] / errors[i + 1]) / math.log(eps_list[i] / eps_list[i + 1])
              for i in range(len(eps_list) - 1)]
    return {"predicted": complex(predicted), "fd": fds, "rel_errors": errors,
            "orders": orders, "order": float(np.mean(orders)), "final_rel_error": errors[-1]}


# --- finite differences -------------------------------------------------------------------


@lru_cache(maxsize=None)
def fd_weights(m: int, offsets: tuple[int, ...]) -> np.ndarray:
    """Weights of the m-th derivative at 0 on integer offsets (Fornberg's recursion)."""
    xs = np.array(offsets, dtype=float)
    N = len(xs)
    c = np.zeros((N, m + 1))
    c1, c4 = 1.0, xs[0]
    c[0, 0] = 1.0
    for i in range(1, N):
        mn = min(i, m)
        c2, c5, c4 = 1.0, c4, xs[i]
        for jj in range(i):
            c3 = xs[i] - xs[jj]
            c2 *= c3
            if jj == i - 1:
                for kk in range(mn, 0, -1):
                    c[i, kk] = c1 * (kk * c[i - 1, kk - 1] - c5 * c[i - 1, kk]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for kk in range(mn, 0, -1):
                c[jj, kk] = (c4 * c[jj, kk] - kk * c[jj, kk - 1]) / c3
            c[jj, 0] = c4 * c[jj, 0] / c3
        c1 = c2
    return c[:, m]


def derivative(y: np.ndarray, h: float, m: int = 1, order: int = 6) -> np.ndarray:
    """m-th x-derivative along the last axis; central in the interior, one-sided at edges."""
    if m == 0:
        return np.array(y, copy=True)
    half = (m + order - 1) // 2
    width = 2 * half + 1
    y = np.asarray(y)
    Nx = y.shape[-1]
    out = np.zeros_like(y, dtype=complex)
    w = fd_weights(m, tuple(range(-half, half + 1)))
    for s, ws in zip(range(-half, half + 1), w):
        out[..., half:Nx - half] += ws * y[..., half + s:Nx - half + s]
    for i in list(range(half)) + list(range(Nx - half, Nx)):
        lo = min(max(i - half, 0), Nx - width)
        offs = tuple(range(lo - i, lo - i + width))
        wi = fd_weights(m, offs)
        out[..., i] = np.tensordot(y[..., lo:lo + width], wi, axes=([-1], [0]))
    return out / h**m


def D_power(y: np.ndarray, h: float, k: int, order: int = 6) -> np.ndarray:
    """D^k y with D = -i d/dx."""
    return (-1j) ** k * derivative(y, h, k, order)


# --- Wronskian --------------------------------------------------------------------------


def _u_full_derivs(potential: Potential, order: int) -> np.ndarray:
    """d^m u_gamma / dx^m for gamma = 0..n (u_{n-1} = 0, u_n = 1); shape (order+1, n+1, Nx)."""
    n = potential.n
    d = potential.derivatives(order)
    out = np.zeros((order + 1, n + 1, d.shape[-1]), dtype=complex)
    out[:, : n - 1] = d
    out[0, n] = 1.0
    return out


def _minusD_u(u_derivs: np.ndarray, s: int, gamma: int) -> np.ndarray:
    # (-D)^s u = (i d/dx)^s u
    return (1j) ** s * u_derivs[s, gamma]


def adjoint_derivatives(Psi_row: np.ndarray, u_derivs: np.ndarray) -> np.ndarray:
    """(-D)^t g for t = 0..n-1 from the row (g_0, ..., g_{n-1}) of Psi.

    Uses g_c = sum_{gamma > c} (-D)^{gamma-c-1} (u_gamma g) with g = g_{n-1}.
    """
    n = Psi_row.shape[0]
    G = np.zeros_like(Psi_row)
    G[0] = Psi_row[n - 1]
    for c in range(n - 2, -1, -1):
        t = n - 1 - c
        acc = Psi_row[c].copy()
        for gamma in range(c + 1, n - 1):
            m = gamma - c - 1
            for s in range(m + 1):
                acc -= math.comb(m, s) * _minusD_u(u_derivs, s, gamma) * G[m - s]
        G[t] = acc
    return G


def wronskian(f_derivs: np.ndarray, g_minusD: np.ndarray, u_derivs: np.ndarray) -> np.ndarray:
    """W(f, g) = sum_{gamma=1}^n sum_{r<gamma} (D^{gamma-r-1} f) (-D)^r (u_gamma g).

    ``f_derivs[c] = D^c f`` and ``g_minusD[t] = (-D)^t g`` for c, t < n;
    ``u_derivs[m, gamma] = d^m u_gamma/dx^m`` including u_{n-1} = 0, u_n = 1.
    """
    n = f_derivs.shape[0]
    W = np.zeros(f_derivs.shape[-1], dtype=complex)
    for gamma in range(1, n + 1):
        if gamma == n - 1:
            continue
        for r in range(gamma):
            ug = sum(math.comb(r, s) * _minusD_u(u_derivs, s, gamma) * g_minusD[r - s]
                     for s in range(r + 1))
            W += f_derivs[gamma - r - 1] * ug
    return W


def wronskian_of_waves(potential: Potential, left: WaveData, k: int, right: WaveData,
                       l: int) -> dict:
    """W(phi_k(xi), psi_l(eta)) from the companion vectors and the residual of DW = (xi^n - eta^n) f g."""
    n = potential.n
    u = _u_full_derivs(potential, n)
    f_derivs = np.moveaxis(left.Phi[:, :, k], 0, -1)            # (n, Nx)
    g_row = np.moveaxis(right.Psi[:, l, :], 0, -1)              # (n, Nx)
    G = adjoint_derivatives(g_row, u)
    W = wronskian(f_derivs, G, u)
    DW = D_power(W, potential.h, 1, order=8)
    rhs = (left.z**n - right.z**n) * f_derivs[0] * G[0]
    interior = slice(8, -8)
    scale = max(float(np.max(np.abs(rhs[interior]))), float(np.max(np.abs(DW[interior]))), 1e-300)
    resid = float(np.max(np.abs(DW[interior] - rhs[interior])))
    companion_gap = float(np.max(np.abs(W - np.einsum("xc,xc->x", g_row.T, f_derivs.T))))
    return {"W": W, "residual": resid, "relative_residual": resid / scale if scale > 1e-300 else resid,
            "scale": scale, "product_identity": companion_gap}


def plane_wave_wronskian(n: int, xi: complex, eta: complex, ak: complex, ap: complex,
                         x: np.ndarray) -> np.ndarray:
    """W_0(e^{i x xi a_k}, e^{-i x eta a_p}) = (xi^n - eta^n)/(a_k xi - a_p eta) e^{...}."""
    return (xi**n - eta**n) / (ak * xi - ap * eta) * np.exp(1j * x * (ak * xi - ap * eta))


def plane_wave_wronskian_direct(n: int, xi, eta, ak, ap, x) -> np.ndarray:
    """The same quantity from the defining double sum with u = 0."""
    e = np.exp(1j * x * (ak * xi - ap * eta))
    return sum((xi * ak) ** (n - s - 1) * (eta * ap) ** s for s in range(n)) * e


# --- Gel'fand-Dikii operator ----------------------------------------------------------------


def ell_apply(r: int, s: int, field_: np.ndarray, u_full: np.ndarray, h: float,
              order: int = 6) -> np.ndarray:
    """l_rs F = sum_k [C(k+r, r) u_{r+s+k+1} D^k F - C(k+s, s) (-D)^k (u_{r+s+k+1} F)]."""
    n = u_full.shape[0] - 1
    out = np.zeros(field_.shape[-1], dtype=complex)
    for k in range(n - r - s):
        ug = u_full[r + s + k + 1]
        if not np.any(ug):
            continue
        out += math.comb(k + r, r) * ug * D_power(field_, h, k, order)
        out -= math.comb(k + s, s) * (-1) ** k * D_power(ug * field_, h, k, order)
    return out


def _trap(y: np.ndarray, h: float) -> complex:
    return complex(h * (np.sum(y) - 0.5 * (y[0] + y[-1])))


def _window(x: np.ndarray, N: float) -> slice:
    idx = np.nonzero(np.abs(x) <= N + 1e-12)[0]
    return slice(idx[0], idx[-1] + 1)


def bracket_form_symmetric(gF: np.ndarray, gG: np.ndarray, potential: Potential, N: float,
                           order: int = 6) -> complex:
    """i int_{-N}^{N} sum_{r,s} [l_rs dF/du_s] dG/du_r dx."""
    n = potential.n
    sl = _window(potential.x, N)
    u = potential.full_coefficients()[:, sl]
    total = np.zeros(u.shape[-1], dtype=complex)
    for r in range(n - 1):
        for s in range(n - 1):
            total += ell_apply(r, s, gF[s, sl], u, potential.h, order) * gG[r, sl]
    return 1j * _trap(total, potential.h)


def bracket_form_by_parts(gF: np.ndarray, gG: np.ndarray, potential: Potential, N: float,
                          order: int = 6, prefactor: complex = 1j) -> complex:
    """The integrated-by-parts form

    sum_gamma sum_{r<gamma} sum_{s<=r} u_gamma C(r,s) [(D^{r-s} F_{gamma-r-1}) G_s
    - F_s D^{r-s} G_{gamma-r-1}], times ``prefactor``.
    """
    n = potential.n
    sl = _window(potential.x, N)
    u = potential.full_coefficients()[:, sl]
    h = potential.h
    total = np.zeros(u.shape[-1], dtype=complex)
    for gamma in range(1, n + 1):
        if not np.any(u[gamma]):
            continue
        for r in range(gamma):
            idx = gamma - r - 1
            if idx > n - 2:
                continue
            for s in range(min(r, n - 2) + 1):
                c = math.comb(r, s)
                t = D_power(gF[idx, sl], h, r - s, order) * gG[s, sl] \
                    - gF[s, sl] * D_power(gG[idx, sl], h, r - s, order)
                total += c * u[gamma] * t
    return prefactor * _trap(total, h)


# --- smeared functionals ------------------------------------------------------------------


@dataclass(frozen=True)
class TestFunction:
    """Smooth compactly supported function of the radius on a ray.

    f(r) = exp(-(r-c)^2/2w^2) * exp(1 - 1/(1 - t^2)) with t mapping [lo, hi]
    to [-1, 1]; the window makes f infinitely smooth at the support ends.
    """

    n: int
    ray: int
    center: float
    width: float
    lo: float
    hi: float
    nodes: int = 48

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        t = (2 * r - (self.hi + self.lo)) / (self.hi - self.lo)
        inside = np.abs(t) < 1
        ts = np.where(inside, t, 0.0)
        win = np.where(inside, np.exp(1 - 1 / (1 - ts * ts)), 0.0)
        return np.exp(-((r - self.center) ** 2) / (2 * self.width**2)) * win

    @property
    def direction(self) -> complex:
        return cmath.exp(1j * RootSystem(self.n).ray_angle(self.ray))

    def quadrature(self) -> tuple[np.ndarray, np.ndarray]:
        """Radii and real weights for int ... dr over [lo, hi]."""
        t, w = leggauss(self.nodes)
        r = 0.5 * (self.hi - self.lo) * t + 0.5 * (self.hi + self.lo)
        return r, 0.5 * (self.hi - self.lo) * w

    def points(self) -> list[RayPoint]:
        return [RayPoint(self.n, self.ray, float(r)) for r in self.quadrature()[0]]


def global_index_map(n: int, ray: int) -> np.ndarray:
    """perm with a^{(0)}_{jk} = a^{(local)}_{perm[j], perm[k]} on the given fundamental ray."""
    if ray == 0 or n == 2 and ray == 0:
        return np.arange(n)
    P = permutation_matrix(n, 0)
    return np.argmax(P, axis=1)


@dataclass
class SmearedFunctional:
    """F = int a_jk(xi) f(xi) dxi (complex measure along the ray), or a chain-rule variant.

    ``entry`` uses 0-based indices in the global (0th) ordering when
    ``representation == "global"`` and in the local ordering otherwise.
    """

    test: TestFunction
    entry: tuple[int, int] | None = None
    representation: str = "global"
    kind: str = "entry"      # "entry", "p", "q"
    nu: int = 0
    measure: str = "dxi"     # "dxi" or "dxi/xi"

    def local_entry(self, n: int) -> tuple[int, int]:
        j, k = self.entry
        if self.representation == "local":
            return j, k
        perm = global_index_map(n, self.test.ray)
        return int(perm[j]), int(perm[k])

    def __post_init__(self):
        if self.kind == "entry":
            n = self.test.n
            jl, kl = self.local_entry(n)
            mask = projection_mask(RayPoint(n, self.test.ray, 1.0).value, n).mask
            if not mask[jl, kl]:
                raise ValueError(f"entry {self.entry} is outside the block pattern on ray {self.test.ray}")

    def weights(self) -> np.ndarray:
        r, w = self.test.quadrature()
        dxi = self.test.direction * w
        if self.measure == "dxi/xi":
            return w / r * self.test(r)
        return dxi * self.test(r)

    def coefficients(self, w: WaveData) -> dict[tuple[int, int], complex]:
        """Local-ordering entries and coefficients of the differential at one node."""
        if self.kind == "entry":
            return {self.local_entry(w.Phi.shape[1]): 1.0}
        return canonical_coefficients(w, self.kind, self.nu)

    def smeared_gradient(self, cache: WaveCache) -> np.ndarray:
        acc = 0
        for p, wt in zip(self.test.points(), self.weights()):
            wd = cache(p)
            for (j, k), c in self.coefficients(wd).items():
                acc = acc + wt * c * _grad_values(wd, j, k)
        return acc

    def value(self, cache: WaveCache) -> complex:
        tot = 0j
        for p, wt in zip(self.test.points(), self.weights()):
            a = cache(p).a
            if self.kind == "entry":
                j, k = self.local_entry(cache.potential.n)
                tot += wt * a[j, k]
        return tot


def _wronskian_integrand(F: SmearedFunctional, G: SmearedFunctional,
                         cache: WaveCache) -> np.ndarray:
    """Smeared exact-derivative integrand of the bracket, as a function of x.

    For pointwise entries a_jk(xi), a_lm(eta) this is
    phi_k(xi) psi_l(eta) W(phi_m(eta), psi_j(xi)) - phi_m(eta) psi_j(xi) W(phi_k(xi), psi_l(eta)),
    which equals D[W(phi_k(xi), psi_l(eta)) W(phi_m(eta), psi_j(xi))]/(xi^n - eta^n) but has
    no division.  W(phi_k(xi), psi_l(eta)) = (Psi(eta) Phi(xi))_{lk}.  Functionals of
    several entries enter through their chain-rule coefficients.
    """
    n = cache.potential.n
    wdF = [cache(p) for p in F.test.points()]
    wdG = [cache(p) for p in G.test.points()]
    cF = [F.coefficients(w) for w in wdF]
    cG = [G.coefficients(w) for w in wdG]
    wf, wg = F.weights(), G.weights()
    total = 0
    for (j, k) in cF[0]:
        af = wf * np.array([c[(j, k)] for c in cF])
        PhiF = np.array([w.Phi[:, :, k] for w in wdF])     # (I, Nx, n)
        PsiF = np.array([w.Psi[:, j, :] for w in wdF])
        for (l, m) in cG[0]:
            ag = wg * np.array([c[(l, m)] for c in cG])
            PhiG = np.array([w.Phi[:, :, m] for w in wdG])
            PsiG = np.array([w.Psi[:, l, :] for w in wdG])
            W_kl = np.einsum("jxc,ixc->ijx", PsiG, PhiF)      # W(phi_k(xi_i), psi_l(eta_j))
            W_mj = np.einsum("ixc,jxc->ijx", PsiF, PhiG)      # W(phi_m(eta_j), psi_j(xi_i))
            t1 = np.einsum("i,j,ix,jx,ijx->x", af, ag, PhiF[:, :, 0], PsiG[:, :, n - 1], W_mj)
            t2 = np.einsum("i,j,jx,ix,ijx->x", af, ag, PhiG[:, :, 0], PsiF[:, :, n - 1], W_kl)
            total = total + t1 - t2
    return total


def raw_bracket(F: SmearedFunctional, G: SmearedFunctional, potential: Potential,
                N: float | None = None, form: str = "wronskian",
                cache: WaveCache | None = None) -> dict:
    """Regularized bracket of smeared functionals, truncated to [-N, N].

    ``form`` selects the integrand: "symmetric" is i sum [l_rs dF/du_s] dG/du_r,
    "by_parts" its integrated-by-parts version, and "wronskian" the exact-derivative
    integrand D[W W]/(xi^n - eta^n) combined through the chain rule.  All three agree
    for decaying gradient fields.  Smeared scattering gradients tend to
    non-zero oscillatory limits as |x| -> inf, so "symmetric" and "by_parts" then differ
    from "wronskian" by boundary terms that do not vanish as N grows.
    The kernel is the N -> inf limit of the "wronskian" form.
    """
    cache = cache or WaveCache(potential)
    N = potential.X if N is None else N
    if N > potential.X:
        raise ValueError("N must not exceed the grid half-width X")
    Ns = (N / 4, N / 2, N)
    if form == "wronskian":
        # The exact-derivative integrand reproduces i * (integrated-by-parts form) with the
        # opposite sign; the sign here makes it coincide with the "symmetric" form for n = 2,
        # where both converge to the same limit.
        integrand = WRONSKIAN_FORM_SIGN * 1j * _wronskian_integrand(F, G, cache)
        trace = {float(Nk): _trap(integrand[_window(potential.x, Nk)], potential.h)
                 for Nk in Ns}
    else:
        gF = F.smeared_gradient(cache)
        gG = G.smeared_gradient(cache)
        fn = {"symmetric": bracket_form_symmetric, "by_parts": bracket_form_by_parts}[form]
        trace = {float(Nk): fn(gF, gG, potential, Nk) for Nk in Ns}
    return {"value": trace[float(N)], "trace": trace}


# --- predicted kernel ---------------------------------------------------------------------


def kernel_Q(n: int, xi, eta, aj: complex, al: complex) -> np.ndarray:
    """Regular factor (xi^n - eta^n)/(xi a_j - eta a_l) * a_j a_l (without the pv factor)."""
    xi = np.asarray(xi, dtype=complex)
    eta = np.asarray(eta, dtype=complex)
    den = xi * aj - eta * al
    with np.errstate(divide="ignore", invalid="ignore"):
        reg = (xi**n - eta**n) / den
    # removable singularity when aj == al and xi == eta
    same = np.abs(den) < 1e-13 * (np.abs(xi) + np.abs(eta))
    if np.any(same):
        reg = np.where(same, n * xi ** (n - 1) / aj, reg)
    return reg * aj * al


def _global_a(w: WaveData, n: int) -> np.ndarray:
    perm = global_index_map(n, w.point.ray)
    return w.a[np.ix_(perm, perm)]


def predicted_bracket(F: SmearedFunctional, G: SmearedFunctional, potential: Potential,
                      cache: WaveCache | None = None) -> dict:
    """int int f g {a_jk(xi), a_lm(eta)} dxi deta from the kernel.

    Nonlocal part: a_jk(xi) a_lm(eta) c/(n^2 (xi eta)^{n-1}) [Q_jl - Q_km]
    with Q_jl = reg_jl(xi, eta) * pv 1/(xi a_j - eta a_l); the principal value
    is taken by subtracting the singular value at t = s and adding the
    analytic log integral.  Local part: c pi i a_lk(xi) a_jm(xi)/(n xi^{n-1})
    [s(j, l) + s(m, k)] integrated against f g on the common ray, where
    s(a, b) is the orientation sign of (alpha_b - alpha_a) xi on the ray and
    c = KERNEL_SIGN.  All entries are in the global (0th) ordering.
    """
    if F.representation != "global" or G.representation != "global":
        raise ValueError("predicted_bracket works in the global ordering")
    cache = cache or WaveCache(potential)
    n = potential.n
    alpha = np.exp(2j * np.pi * np.array(frame_at(RayPoint(n, 0, 1.0)).exponents) / n)
    j, k = F.entry
    l, m = G.entry
    rF, wF = F.test.quadrature()
    rG, wG = G.test.quadrature()
    eF, eG = F.test.direction, G.test.direction
    xi = eF * rF
    eta = eG * rG
    aF = np.array([_global_a(cache(p), n) for p in F.test.points()])
    aG = np.array([_global_a(cache(p), n) for p in G.test.points()])
    fF = F.test(rF) * wF * eF       # f(xi) dxi
    gG = G.test(rG) * wG * eG
    pref = KERNEL_SIGN / (n * n)
    XI, ETA = np.meshgrid(xi, eta, indexing="ij")
    base = pref / (XI * ETA) ** (n - 1)
    amp = aF[:, j, k][:, None] * aG[:, l, m][None, :]
    same_ray = F.test.ray == G.test.ray
    nonlocal_ = 0j
    for (p, q), sign in (((j, l), 1.0), ((k, m), -1.0)):
        reg = kernel_Q(n, XI, ETA, alpha[p], alpha[q])
        den = XI * alpha[p] - ETA * alpha[q]
        integrand = sign * base * amp * reg
        if same_ray and p == q:
            # pv 1/(xi a - eta a) = (1/(a e)) pv 1/(s - t) on the common ray
            if not (np.allclose(rF, rG)):
                raise ValueError("same-ray principal values need identical quadrature nodes")
            H = integrand * (gG[None, :] / wG[None, :])  # smooth in t, without dt weight
            S, T = np.meshgrid(rF, rG, indexing="ij")
            Hd = np.diag(H)[:, None]
            with np.errstate(divide="ignore", invalid="ignore"):
                body = np.where(np.abs(S - T) > 0, (H - Hd) / (S - T), 0.0)
            # diagonal of (H - H(s))/(s - t) is -dH/dt at t = s; estimate by Legendre differentiation
            body[np.arange(len(rF)), np.arange(len(rF))] = -_legendre_diag_derivative(H, rG, G.test)
            inner = body @ wG
            lo, hi = G.test.lo, G.test.hi
            inner = inner + np.diag(H) * np.log(np.abs(rF - lo) / np.abs(hi - rF))
            nonlocal_ += np.sum(fF * inner) / (alpha[p] * eF)
        else:
            nonlocal_ += np.sum(fF[:, None] * integrand / den * gG[None, :])
    local = 0j
    common = same_ray and np.allclose(rF, rG)
    if common:
        sg = _delta_sign(alpha, eF, j, l) + _delta_sign(alpha, eF, m, k)
        if sg:
            local = np.sum(KERNEL_SIGN * np.pi * 1j * aF[:, l, k] * aF[:, j, m]
                           / (n * xi ** (n - 1)) * sg * F.test(rF) * G.test(rF) * wF * eF)
    elif same_ray:
        raise ValueError("use a common test-function support on a shared ray")
    return {"value": complex(nonlocal_ + local), "nonlocal": complex(nonlocal_),
            "local": complex(local)}


def _delta_sign(alpha: np.ndarray, direction: complex, a: int, b: int) -> float:
    """Orientation sign of (alpha_b - alpha_a) xi along the ray; 0 unless it is real.

    This is the sign picked up by lim_{x->+inf} pv exp(ix(xi-eta)(alpha_b-alpha_a))/(xi-eta).
    With the global ordering it equals sgn(b - a) only on some rays, so it is
    evaluated geometrically.
    """
    d = (alpha[b] - alpha[a]) * direction
    if a == b or abs(d.imag) > 1e-9 * abs(d):
        return 0.0
    return float(np.sign(d.real))


def _legendre_diag_derivative(H: np.ndarray, t: np.ndarray, test: TestFunction) -> np.ndarray:
    """d/dt H[i, t] at t = t_i via the Legendre interpolant on the nodes."""
    from numpy.polynomial import legendre as Lg
    u = (2 * t - (test.hi + test.lo)) / (test.hi - test.lo)
    V = Lg.legvander(u, len(t) - 1)
    coef = np.linalg.solve(V, H.T)                 # (deg, rows)
    dcoef = Lg.legder(coef, axis=0) * (2 / (test.hi - test.lo))
    Dv = Lg.legvander(u, len(t) - 2)
    dH = Dv @ dcoef                                # (t, rows)
    return np.diag(dH)


# --- canonical variables ------------------------------------------------------------------


def canonical_coefficients(w: WaveData, kind: str, nu: int) -> dict[tuple[int, int], complex]:
    """Chain-rule coefficients c_jk with d(p_nu or q_nu) = sum c_jk d a_jk (local ordering)."""
    n = w.Phi.shape[1]
    i, j = nu - 1, nu
    a = w.a
    if kind == "p":
        Delta = a[i, i] * a[j, j] - a[i, j] * a[j, i]
        c = n * (-w.point.value) ** n
        return {(i, i): c * (1 / a[i, i] - a[j, j] / Delta),
                (j, j): c * (1 / a[j, j] - a[i, i] / Delta),
                (i, j): c * a[j, i] / Delta,
                (j, i): c * a[i, j] / Delta}
    if kind == "q":
        return {(j, i): 1 / (4j * math.pi * a[j, i]), (i, j): -1 / (4j * math.pi * a[i, j])}
    raise ValueError(f"unknown canonical kind {kind!r}")


def canonical_gradient(w: WaveData, kind: str, nu: int) -> np.ndarray:
    """Chain-rule gradient of p_nu or q_nu at a point on B_nu's ray (local ordering)."""
    coeffs = canonical_coefficients(w, kind, nu)
    return sum(c * _grad_values(w, r, k) for (r, k), c in coeffs.items())


def canonical_brackets(potential: Potential, tests: dict[int, tuple[TestFunction, TestFunction]],
                       N: float | None = None, form: str = "wronskian") -> dict:
    """Smeared brackets of P_nu = int p_nu f dxi/xi and Q_mu = int q_mu g deta/eta.

    ``tests[nu]`` is a pair (f, g) of test functions on B_nu's ray.  Returns
    every {P, Q}, {P, P}, {Q, Q} value together with int f g dr/r.
    """
    cache = WaveCache(potential)
    N = potential.X if N is None else N
    fun = {}
    for nu, (f, g) in tests.items():
        fun[("p", nu)] = SmearedFunctional(f, kind="p", nu=nu, measure="dxi/xi")
        fun[("q", nu)] = SmearedFunctional(g, kind="q", nu=nu, measure="dxi/xi")
    out = {"pq": {}, "pp": {}, "qq": {}, "pairing": {}}
    for nu, (f, g) in tests.items():
        r, w = f.quadrature()
        out["pairing"][nu] = float(np.sum(f(r) * g(r) * w / r))

    def br(a, b):
        return raw_bracket(fun[a], fun[b], potential, N=N, form=form, cache=cache)["value"]

    keys = sorted(tests)
    for nu in keys:
        for mu in keys:
            out["pq"][(nu, mu)] = br(("p", nu), ("q", mu))
            if nu <= mu:
                out["pp"][(nu, mu)] = br(("p", nu), ("p", mu))
                out["qq"][(nu, mu)] = br(("q", nu), ("q", mu))
    return out


# --- pointwise bracket and the flows it generates -------------------------------------------


def pointwise_bracket(a: np.ndarray, xi: complex, j: int, k: int, l: int, m: int) -> complex:
    """(a_jk, a_lm) = (pi i / (n (-xi)^n)) a_lk a_jm [sgn(l-j) + sgn(k-m)] (0-based indices)."""
    n = a.shape[0]
    return complex(np.pi * 1j / (n * (-xi) ** n) * a[l, k] * a[j, m]
                   * (np.sign(l - j) + np.sign(k - m)))


def pointwise_canonical(a: np.ndarray, xi: complex, nu: int, l: int, m: int) -> complex:
    """(p_nu, a_lm) by the chain rule through p_nu = n(-xi)^n log(a_ii a_jj / Delta)."""
    n = a.shape[0]
    i, j = nu - 1, nu
    Delta = a[i, i] * a[j, j] - a[i, j] * a[j, i]
    dp = {
        (i, i): 1 / a[i, i] - a[j, j] / Delta,
        (j, j): 1 / a[j, j] - a[i, i] / Delta,
        (i, j): a[j, i] / Delta,
        (j, i): a[i, j] / Delta,
    }
    pre = n * (-xi) ** n
    return complex(pre * sum(c * pointwise_bracket(a, xi, r, s, l, m) for (r, s), c in dp.items()))


def local_bracket(a: np.ndarray, point: RayPoint, j: int, k: int, l: int, m: int) -> complex:
    """Coefficient of xi delta(xi - eta) in the bracket {a_jk(xi), a_lm(eta)} (local ordering).

    KERNEL_SIGN pi i/(n xi^n) a_lk a_jm [s(j, l) + s(m, k)], with s the orientation
    sign of the wavenumber difference along the ray; this is the local part of
    ``predicted_bracket`` restated in the local ordering of ``point``'s ray.
    """
    n = a.shape[0]
    w = np.asarray(frame_at(point).wavenumbers)
    xi = point.value

    def s(p: int, q: int) -> float:
        d = w[q] - w[p]
        if p == q or abs(d.imag) > 1e-9 * abs(d):
            return 0.0
        return float(np.sign(d.real))

    return complex(KERNEL_SIGN * np.pi * 1j / (n * xi**n) * a[l, k] * a[j, m] * (s(j, l) + s(m, k)))


def local_canonical(a: np.ndarray, point: RayPoint, nu: int, l: int, m: int) -> complex:
    """Local coefficient of {p_nu(xi), a_lm(eta)} via the chain rule (local ordering)."""
    n = a.shape[0]
    wd = WaveData(point, np.zeros(1), np.zeros((1, n, n)), np.zeros((1, n, n)), a)
    return complex(sum(c * local_bracket(a, point, r, q, l, m)
                       for (r, q), c in canonical_coefficients(wd, "p", nu).items()))


def block_flow(B0: np.ndarray, t: float) -> np.ndarray:
    """B(t) = exp(i sigma t) B(0) exp(-i sigma t), sigma = diag(1/2, -1/2)."""
    s = np.array([0.5, -0.5])
    return np.exp(1j * s * t)[:, None] * B0 * np.exp(-1j * s * t)[None, :]

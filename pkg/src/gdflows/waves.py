"""Normalized wave functions and the scattering matrix.

On a ray the reduced system ``D m = xi (J m - m J) + q_xi m`` has an
exponential dichotomy for n >= 3: entries of a column grow or decay at the
rates ``Re i xi (alpha_j - alpha_k)``.  Marching from one end is therefore
unstable, and the bounded (normalized) solution is computed as a two-point
boundary-value problem: each grid cell contributes one propagator and the
normalization supplies n boundary conditions split between x = -X and x = +X
(stabilized multiple shooting with one shooting interval per cell).

Cell propagators are exponentials of Magnus expansions.  The left wave uses
the sixth-order three-node scheme on step h; the right wave uses the
fourth-order two-node scheme on two half steps.  The two discretizations are
independent, so the x-independence of ``psi phi`` is a genuine accuracy test.
"""
from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.linalg import expm
from scipy.sparse.linalg import splu

from .potential import Potential, gauged_matrix
from .sectors import RayPoint, RootSystem, SectorFrame, frame_at, projection_mask

__all__ = [
    "WaveFunction",
    "ScatteringResult",
    "ScatteringRecord",
    "solve_left",
    "solve_right",
    "scattering_matrix",
    "scattering_via_limit",
    "scatter_point",
    "compute_record",
    "delta_of_z",
    "default_radii",
    "square_well_oracle",
    "square_well_transmission",
    "thread_count",
]

THREADS_ENV = "GDFLOWS_THREADS"

_S15 = math.sqrt(15.0)
_GAUSS3 = (0.5 - _S15 / 10, 0.5, 0.5 + _S15 / 10)
_S3 = math.sqrt(3.0)
_GAUSS2 = (0.5 - _S3 / 6, 0.5 + _S3 / 6)


def thread_count(requested: int | None = None) -> int:
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get(THREADS_ENV)
    return max(1, int(env)) if env else 1


def default_radii(r_min: float = 0.3, r_max: float = 8.0, count: int = 64) -> np.ndarray:
    return np.geomspace(r_min, r_max, count)


def _comm(a, b):
    return a @ b - b @ a


def _frame(potential: Potential, point) -> SectorFrame:
    if isinstance(point, RayPoint):
        if point.n != potential.n:
            raise ValueError("ray point and potential have different orders")
        return frame_at(point)
    return frame_at(complex(point), n=potential.n)


def _generator(potential: Potential, frame: SectorFrame, offset: float, h_scale=1.0,
               shift=0.0) -> np.ndarray:
    """A = i (z J + q_z) at x_i + offset*h for every cell; shape (N, n, n)."""
    u = potential.node_values(offset) if shift == 0.0 else potential.node_values(offset + shift)
    A = 1j * gauged_matrix(u, frame)
    A += 1j * np.diag(frame.wavenumbers)[None]
    return A


def _magnus6(potential: Potential, frame: SectorFrame) -> np.ndarray:
    """Sixth-order Magnus propagators of the cells for ``dY/dx = A Y``."""
    h = potential.h
    A1, A2, A3 = (_generator(potential, frame, c) for c in _GAUSS3)
    a1 = h * A2
    a2 = (_S15 * h / 3) * (A3 - A1)
    a3 = (10 * h / 3) * (A3 - 2 * A2 + A1)
    c1 = _comm(a1, a2)
    c2 = -(1 / 60) * _comm(a1, 2 * a3 + c1)
    omega = a1 + a3 / 12 + (1 / 240) * _comm(-20 * a1 - a3 + c1, a2 + c2)
    return omega


def _magnus4_half(potential: Potential, frame: SectorFrame, first: bool) -> np.ndarray:
    """Fourth-order Magnus exponent for one half of each cell."""
    h = potential.h / 2
    base = 0.0 if first else 0.5
    B1, B2 = (_generator(potential, frame, base + c / 2) for c in _GAUSS2)
    return (h / 2) * (B1 + B2) + (_S3 / 12) * h * h * _comm(B2, B1)


def _bvp(P: np.ndarray, left: dict[int, complex], right: dict[int, complex]) -> np.ndarray:
    """Solve y_{i+1} = P_i y_i with components fixed at both ends.

    ``left`` / ``right`` map component indices to prescribed values at the
    first / last node.  Returns y of shape (N + 1, n).
    """
    N, n, _ = P.shape
    if len(left) + len(right) != n:
        raise ValueError("boundary conditions must fix exactly n components")
    ii = np.arange(N)
    a = np.arange(n)
    # propagation equations: P_i y_i - y_{i+1} = 0, rows n*i + a
    r1 = (n * ii[:, None, None] + a[None, :, None]) * np.ones((1, 1, n), int)
    c1 = (n * ii[:, None, None] + a[None, None, :]) * np.ones((1, n, 1), int)
    r2 = n * ii[:, None] + a[None, :]
    c2 = n * (ii[:, None] + 1) + a[None, :]
    rows = [r1.ravel(), r2.ravel()]
    cols = [c1.ravel(), c2.ravel()]
    vals = [P.ravel(), -np.ones(N * n, dtype=complex)]
    rhs = np.zeros(n * (N + 1), dtype=complex)
    r = n * N
    for comp, v in sorted(left.items()):
        rows.append(np.array([r])), cols.append(np.array([comp])), vals.append(np.array([1.0 + 0j]))
        rhs[r] = v
        r += 1
    for comp, v in sorted(right.items()):
        rows.append(np.array([r])), cols.append(np.array([n * N + comp]))
        vals.append(np.array([1.0 + 0j]))
        rhs[r] = v
        r += 1
    M = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n * (N + 1), n * (N + 1)))
    y = splu(M).solve(rhs)
    return y.reshape(N + 1, n)


def _rates(frame: SectorFrame) -> np.ndarray:
    return (1j * frame.wavenumbers).real


def _strictly_above(frame: SectorFrame) -> np.ndarray:
    """above[j, k]: component j grows strictly faster than k."""
    r = _rates(frame)
    scale = max(1.0, abs(frame.z))
    return (r[:, None] - r[None, :]) > 1e-9 * scale


@dataclass
class WaveFunction:
    """Reduced wave function on the grid.

    ``side == "left"``: ``m = phi exp(-i x z J)`` with m(-X) = I on the
    non-growing entries.  ``side == "right"``: ``w = exp(i x z J) psi``.
    """

    point: object
    frame: SectorFrame
    side: str
    x: np.ndarray
    m: np.ndarray  # (N + 1, n, n)

    @property
    def z(self) -> complex:
        return self.frame.z

    def phase(self, x) -> np.ndarray:
        """exp(i x z alpha_k), shape (len(x), n)."""
        return np.exp(1j * np.multiply.outer(np.atleast_1d(x), self.frame.wavenumbers))

    def raw(self) -> np.ndarray:
        """phi (left) or psi (right) on the grid."""
        E = self.phase(self.x)
        if self.side == "left":
            return self.m * E[:, None, :]
        return self.m / E[:, :, None]

    def companion_matrix(self) -> np.ndarray:
        """Phi = Lambda_z phi (left) or Psi = psi Lambda_z^{-1} (right)."""
        if self.side == "left":
            return self.frame.Lambda_z[None] @ self.raw()
        return self.raw() @ self.frame.Lambda_z_inv[None]

    def gronwall_bound(self, potential: Potential) -> float:
        q = gauged_matrix(potential.samples, self.frame)
        return float(np.exp(np.sum(np.linalg.norm(q, 2, axis=(1, 2))) * potential.h))


def solve_left(potential: Potential, point) -> WaveFunction:
    """Bounded solution of ``D phi = (z J + q_z) phi`` normalized at -infinity."""
    fr = _frame(potential, point)
    n = potential.n
    P = expm(_magnus6(potential, fr))
    above = _strictly_above(fr)
    m = np.empty((P.shape[0] + 1, n, n), dtype=complex)
    h = potential.h
    for k in range(n):
        Pk = P * np.exp(-1j * h * fr.wavenumbers[k])
        left = {j: (1.0 if j == k else 0.0) for j in range(n) if not above[j, k]}
        right = {j: 0.0 for j in range(n) if above[j, k]}
        m[:, :, k] = _bvp(Pk, left, right)
    return WaveFunction(point, fr, "left", potential.x, m)


def solve_right(potential: Potential, point) -> WaveFunction:
    """Bounded solution of ``D psi = -psi (z J + q_z)`` normalized at +infinity."""
    fr = _frame(potential, point)
    n = potential.n
    # psi^T_{i+1} = exp(-Om_b^T) exp(-Om_a^T) psi^T_i
    Ea = expm(-np.swapaxes(_magnus4_half(potential, fr, True), 1, 2))
    Eb = expm(-np.swapaxes(_magnus4_half(potential, fr, False), 1, 2))
    P = Eb @ Ea
    above = _strictly_above(fr)
    w = np.empty((P.shape[0] + 1, n, n), dtype=complex)
    h = potential.h
    for j in range(n):
        Pj = P * np.exp(1j * h * fr.wavenumbers[j])
        right = {l: (1.0 if l == j else 0.0) for l in range(n) if not above[l, j]}
        left = {l: 0.0 for l in range(n) if above[l, j]}
        w[:, j, :] = _bvp(Pj, left, right)
    return WaveFunction(point, fr, "right", potential.x, w)


@dataclass
class ScatteringResult:
    point: object
    raw: np.ndarray          # psi phi at x = 0
    a: np.ndarray            # projected onto the block pattern
    leakage: float           # largest off-pattern entry of raw
    x_dependence: float      # max in-pattern deviation over the check points
    limit_mismatch: float    # |a - Pi lim exp(-ixzJ) phi|
    det_error: float


def _product_at(phi: WaveFunction, psi: WaveFunction, idx: int) -> np.ndarray:
    wm = psi.m[idx] @ phi.m[idx]
    ph = phi.frame.wavenumbers
    x = phi.x[idx]
    return wm * np.exp(-1j * x * (ph[:, None] - ph[None, :]))


def _grid_index(x: np.ndarray, x0: float) -> int:
    return int(np.argmin(np.abs(x - x0)))


def scattering_via_limit(phi: WaveFunction) -> np.ndarray:
    """Pi_xi applied to ``exp(-i X xi J) phi(X)``."""
    ph = phi.frame.wavenumbers
    X = phi.x[-1]
    mask = projection_mask(phi.point).mask
    s = phi.m[-1] * np.exp(-1j * X * (ph[:, None] - ph[None, :]))
    return np.where(mask, s, 0)


def scattering_matrix(phi: WaveFunction, psi: WaveFunction,
                      block_tol: float = 1e-6) -> ScatteringResult:
    """a = psi phi at x = 0, cross-checked at x = +-X/2, +-X/4.

    Off-pattern entries are only compared at x = 0: elsewhere they carry the
    factor ``exp(-i x xi (alpha_j - alpha_k))`` which amplifies round-off.
    """
    if not isinstance(phi.point, RayPoint):
        raise ValueError("scattering_matrix needs a ray point")
    mask = projection_mask(phi.point).mask
    x = phi.x
    X = x[-1]
    raw = _product_at(phi, psi, _grid_index(x, 0.0))
    dev = 0.0
    for x0 in (-X / 2, -X / 4, X / 4, X / 2):
        other = _product_at(phi, psi, _grid_index(x, x0))
        dev = max(dev, float(np.max(np.abs(np.where(mask, other - raw, 0)))))
    leak = float(np.max(np.abs(np.where(mask, 0, raw)))) if not mask.all() else 0.0
    a = np.where(mask, raw, 0)
    lim = scattering_via_limit(phi)
    return ScatteringResult(
        phi.point, raw, a, leak, dev, float(np.max(np.abs(a - lim))),
        float(abs(np.linalg.det(a) - 1)),
    )


def scatter_point(potential: Potential, point: RayPoint) -> ScatteringResult:
    return scattering_matrix(solve_left(potential, point), solve_right(potential, point))


def delta_of_z(potential: Potential, z: complex) -> np.ndarray:
    """diag of lim_{x->+inf} phi(x, z) exp(-i x z J(z)) for n = 2, z off the real axis."""
    if potential.n != 2:
        raise ValueError("delta_of_z is implemented for n = 2 only")
    z = complex(z)
    if abs(z.imag) < 1e-8 * max(1.0, abs(z)):
        raise ValueError("z must lie off the real axis")
    span = 2 * abs(z.imag) * 2 * potential.X
    if span > 600:
        raise OverflowError(f"|Im z| = {abs(z.imag):.3g} too large for X = {potential.X}")
    phi = solve_left(potential, z)
    return np.diag(np.diag(phi.m[-1]))


# --- records -------------------------------------------------------------------


@dataclass
class ScatteringRecord:
    """a(xi) on a ray grid, in the local ordering of each ray."""

    n: int
    rays: np.ndarray      # (M,) int
    radii: np.ndarray     # (M,) float
    a: np.ndarray         # (M, n, n) complex, projected
    meta: dict = field(default_factory=dict)

    def points(self) -> list[RayPoint]:
        return [RayPoint(self.n, int(j), float(r)) for j, r in zip(self.rays, self.radii)]

    def select(self, ray: int) -> "ScatteringRecord":
        sel = self.rays == ray
        return ScatteringRecord(self.n, self.rays[sel], self.radii[sel], self.a[sel], dict(self.meta))

    def xi(self) -> np.ndarray:
        return np.array([p.value for p in self.points()])

    def to_csv(self, path=None) -> str:
        n = self.n
        head = ["ray", "radius"] + [f"a{j + 1}{k + 1}_{p}" for j in range(n) for k in range(n)
                                    for p in ("re", "im")]
        lines = [",".join(head)]
        for j, r, a in zip(self.rays, self.radii, self.a):
            row = [str(int(j)), repr(float(r))]
            for v in a.ravel():
                row += [repr(float(v.real)), repr(float(v.imag))]
            lines.append(",".join(row))
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, text_or_path, meta: dict | None = None) -> "ScatteringRecord":
        p = Path(str(text_or_path))
        text = p.read_text() if "\n" not in str(text_or_path) and p.exists() else str(text_or_path)
        lines = text.strip().splitlines()
        nn = (len(lines[0].split(",")) - 2) // 2
        n = int(round(math.sqrt(nn)))
        rays, radii, a = [], [], []
        for ln in lines[1:]:
            f = ln.split(",")
            rays.append(int(f[0]))
            radii.append(float(f[1]))
            v = np.array([float(t) for t in f[2:]])
            a.append((v[0::2] + 1j * v[1::2]).reshape(n, n))
        return cls(n, np.array(rays, dtype=int), np.array(radii), np.array(a), dict(meta or {}))

    def manifest(self) -> dict:
        return {"n": self.n, "points": int(len(self.radii)),
                "rays": sorted({int(j) for j in self.rays}), **self.meta}

    def save(self, stem) -> tuple[Path, Path]:
        stem = Path(stem)
        csv_path = stem.with_suffix(".csv")
        json_path = stem.with_suffix(".json")
        self.to_csv(csv_path)
        json_path.write_text(json.dumps(self.manifest(), indent=2, sort_keys=True) + "\n")
        return csv_path, json_path

    @classmethod
    def load(cls, stem) -> "ScatteringRecord":
        stem = Path(stem)
        meta = json.loads(stem.with_suffix(".json").read_text())
        meta = {k: v for k, v in meta.items() if k not in ("n", "points", "rays")}
        return cls.from_csv(stem.with_suffix(".csv"), meta)


def compute_record(potential: Potential, radii=None, rays=None, threads: int | None = None,
                   block_tol: float = 1e-6, with_results: bool = False):
    """Scattering matrices at every (ray, radius) pair, merged in grid order."""
    radii = default_radii() if radii is None else np.asarray(radii, dtype=float)
    rays = RootSystem(potential.n).fundamental_rays() if rays is None else tuple(rays)
    pts = [RayPoint(potential.n, j, float(r)) for j in rays for r in radii]
    nt = thread_count(threads)
    if nt > 1:
        with ThreadPoolExecutor(nt) as ex:
            results = list(ex.map(lambda p: scatter_point(potential, p), pts))
    else:
        results = [scatter_point(potential, p) for p in pts]
    rec = ScatteringRecord(
        potential.n,
        np.array([p.ray for p in pts], dtype=int),
        np.array([p.radius for p in pts]),
        np.array([r.a for r in results]),
        {
            "potential_hash": potential.hash(),
            "potential": potential.name,
            "X": potential.X,
            "h": potential.h,
            "block_tol": block_tol,
            "max_leakage": max(r.leakage for r in results),
            "max_x_dependence": max(r.x_dependence for r in results),
            "max_limit_mismatch": max(r.limit_mismatch for r in results),
            "max_det_error": max(r.det_error for r in results),
        },
    )
    return (rec, results) if with_results else rec


# --- closed-form oracle for n = 2 ---------------------------------------------------


def square_well_oracle(amplitude: float, width: float, xi: RayPoint) -> np.ndarray:
    """a(xi) for n = 2 and u_0 = amplitude on |x| < width/2, by plane-wave matching."""
    if xi.n != 2:
        raise ValueError("oracle is for n = 2")
    fr = frame_at(xi)
    z = fr.z
    kappa = np.sqrt(complex(z * z - amplitude))
    d = width
    c = np.cos(kappa * d)
    s = np.sinc(kappa * d / np.pi) * d  # sin(kappa d)/kappa, regular at kappa = 0
    T = np.array([[c, 1j * s], [1j * kappa * kappa * s, c]])
    L = fr.Lambda_z
    k = fr.wavenumbers
    EL = np.diag(np.exp(1j * k * (-d / 2)))
    ERinv = np.diag(np.exp(-1j * k * (d / 2)))
    return ERinv @ np.linalg.solve(L, T @ L @ EL)


def square_well_transmission(amplitude: float, width: float, z: complex) -> complex:
    """delta_1(z) for the square well: the (1,1) entry of the matching matrix at z."""
    fr = frame_at(complex(z), n=2)
    kappa = np.sqrt(complex(z * z - amplitude))
    d = width
    c = np.cos(kappa * d)
    s = np.sinc(kappa * d / np.pi) * d
    T = np.array([[c, 1j * s], [1j * kappa * kappa * s, c]])
    L = fr.Lambda_z
    k = fr.wavenumbers
    EL = np.diag(np.exp(1j * k * (-d / 2)))
    ERinv = np.diag(np.exp(-1j * k * (d / 2)))
    return complex((ERinv @ np.linalg.solve(L, T @ L @ EL))[0, 0])

"""Combinatorics of the spectral plane for an n-th order operator.

The rays Sigma_j are the half-lines on which two of the exponents
``Re(i alpha^k z)`` coincide; the open sectors between them carry a local
ordering of the n-th roots of unity.  Ray Sigma_0 is the negative imaginary
axis and rays are numbered counterclockwise.  Sector Omega_j is the sector
immediately clockwise of Sigma_j, so crossing Sigma_j counterclockwise takes
the j-th ordering to the (j+1)-st one.

For n = 2 the ray set degenerates to the real axis: Sigma_0 is the positive
and Sigma_1 the negative real half-line, Omega_0 is the lower and Omega_1 the
upper half plane.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "RootSystem",
    "RayPoint",
    "SectorFrame",
    "ProjectionMask",
    "ConjugationData",
    "local_ordering",
    "ordering_exponents",
    "permutation_matrix",
    "permutation_cycles",
    "frame_at",
    "projection_mask",
    "block_layout",
    "block_ray",
    "star",
    "conjugation_data",
]

# tolerance used when classifying a point as lying on a ray
_RAY_TOL = 1e-12


@dataclass(frozen=True)
class RootSystem:
    """Roots of unity, rays and sectors for the order ``n``."""

    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"order n must be an integer >= 2, got {self.n!r}")

    @property
    def alpha(self) -> complex:
        return cmath.exp(2j * math.pi / self.n)

    @property
    def num_rays(self) -> int:
        return 2 if self.n == 2 else 2 * self.n

    @property
    def spacing(self) -> float:
        return 2 * math.pi / self.num_rays

    @property
    def rotation_shift(self) -> int:
        """Number of ray indices advanced by the rotation z -> alpha z."""
        return self.num_rays // self.n

    def ray_angle(self, j: int) -> float:
        theta0 = 0.0 if self.n == 2 else -math.pi / 2
        return theta0 + (j % self.num_rays) * self.spacing

    def sector_angle(self, j: int) -> float:
        """Bisector direction of Omega_j."""
        return self.ray_angle(j) - self.spacing / 2

    def roots(self) -> np.ndarray:
        return np.exp(2j * np.pi * np.arange(self.n) / self.n)

    @property
    def rays(self) -> np.ndarray:
        return np.exp(1j * np.array([self.ray_angle(j) for j in range(self.num_rays)]))

    @property
    def sectors(self) -> np.ndarray:
        return np.exp(1j * np.array([self.sector_angle(j) for j in range(self.num_rays)]))

    def fundamental_rays(self) -> tuple[int, ...]:
        """Rays carrying one representative of every rotation orbit."""
        return (1,) if self.n == 2 else (0, 1)

    def classify(self, z: complex) -> tuple[str, int]:
        """Return ``("ray", j)`` or ``("sector", j)`` for a nonzero point."""
        if z == 0:
            raise ValueError("z = 0 has no sector")
        theta = cmath.phase(z)
        rel = (theta - self.ray_angle(0)) / self.spacing
        k = round(rel)
        if abs(rel - k) * self.spacing < _RAY_TOL:
            return "ray", k % self.num_rays
        return "sector", (math.floor(rel) + 1) % self.num_rays


@dataclass(frozen=True)
class RayPoint:
    """A point ``r * exp(i theta_j)`` on the ray Sigma_j; r > 0."""

    n: int
    ray: int
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("ray points need a positive radius")
        object.__setattr__(self, "ray", self.ray % RootSystem(self.n).num_rays)

    @property
    def value(self) -> complex:
        return self.radius * cmath.exp(1j * RootSystem(self.n).ray_angle(self.ray))

    def rotate(self, times: int = 1) -> "RayPoint":
        rs = RootSystem(self.n)
        return RayPoint(self.n, self.ray + times * rs.rotation_shift, self.radius)


@lru_cache(maxsize=None)
def ordering_exponents(n: int, j: int) -> tuple[int, ...]:
    """Exponents e_1..e_n with alpha_k = alpha**e_k in the j-th ordering."""
    rs = RootSystem(n)
    j %= rs.num_rays
    z = cmath.exp(1j * rs.sector_angle(j))
    keys = [(1j * cmath.exp(2j * math.pi * e / n) * z).real for e in range(n)]
    return tuple(sorted(range(n), key=lambda e: -keys[e]))


def local_ordering(n: int, j: int) -> np.ndarray:
    """Roots of unity (alpha_1, ..., alpha_n) in the j-th ordering.

    The order is strictly decreasing in ``Re(i alpha_k z)`` for z in Omega_j.
    """
    rs = RootSystem(n)
    if int(j) != j:
        raise ValueError(f"invalid sector index {j!r}")
    if not 0 <= j < rs.num_rays:
        raise ValueError(f"sector index {j} out of range for n={n}")
    e = np.array(ordering_exponents(n, j))
    return np.exp(2j * np.pi * e / n)


@lru_cache(maxsize=None)
def _perm_cached(n: int, j: int) -> tuple[int, ...]:
    src = ordering_exponents(n, j)
    dst = ordering_exponents(n, j + 1)
    return tuple(src.index(e) for e in dst)


def permutation_matrix(n: int, j: int) -> np.ndarray:
    """Permutation pi_j with ``pi_j J_j pi_j = J_{j+1}``."""
    rs = RootSystem(n)
    if not 0 <= j < rs.num_rays:
        raise ValueError(f"sector index {j} out of range for n={n}")
    perm = _perm_cached(n, j)
    P = np.zeros((n, n))
    P[np.arange(n), perm] = 1.0
    return P


def permutation_cycles(n: int, j: int) -> list[tuple[int, int]]:
    """Transpositions of pi_j, 1-based, e.g. [(2, 3)]."""
    perm = _perm_cached(n, j % RootSystem(n).num_rays)
    return [(a + 1, b + 1) for a, b in enumerate(perm) if a < b]


def vandermonde(roots: np.ndarray) -> np.ndarray:
    n = len(roots)
    return roots[None, :] ** np.arange(n)[:, None]


def companion_free(z: complex, n: int) -> np.ndarray:
    """J_z: ones on the superdiagonal and z**n in the lower-left corner."""
    Jz = np.diag(np.ones(n - 1, dtype=complex), 1)
    Jz[n - 1, 0] = z**n
    return Jz


@dataclass(frozen=True)
class SectorFrame:
    """Local frame at a spectral point z (in a sector or on a ray)."""

    n: int
    z: complex
    sector_index: int
    exponents: tuple[int, ...]

    @property
    def ordering(self) -> np.ndarray:
        return np.exp(2j * np.pi * np.array(self.exponents) / self.n)

    @property
    def J_local(self) -> np.ndarray:
        return np.diag(self.ordering)

    @property
    def pi_j(self) -> np.ndarray:
        return permutation_matrix(self.n, self.sector_index)

    @property
    def Lambda_j(self) -> np.ndarray:
        return vandermonde(self.ordering)

    @property
    def d(self) -> np.ndarray:
        return np.diag(self.z ** np.arange(self.n))

    @property
    def Lambda_z(self) -> np.ndarray:
        return self.Lambda_j * (self.z ** np.arange(self.n))[:, None]

    @property
    def Lambda_z_inv(self) -> np.ndarray:
        # Lambda_j^{-1} = Lambda_j^* / n
        return (self.Lambda_j.conj().T / self.n) * (self.z ** -np.arange(self.n))[None, :]

    @property
    def J_z(self) -> np.ndarray:
        return companion_free(self.z, self.n)

    @property
    def wavenumbers(self) -> np.ndarray:
        """Diagonal of z J(z)."""
        return self.z * self.ordering


def frame_at(z, ray: int | None = None, n: int | None = None) -> SectorFrame:
    """Build the local frame at ``z``.

    ``z`` may be a :class:`RayPoint`, or a complex number together with the
    order ``n``.  A complex point lying on a ray needs an explicit ``ray``
    index, since the two adjacent sectors give different orderings.
    """
    if isinstance(z, RayPoint):
        n, ray, zval = z.n, z.ray, z.value
    else:
        if n is None:
            raise ValueError("order n is required for a complex spectral point")
        zval = complex(z)
    if zval == 0:
        raise ValueError("no frame at z = 0")
    rs = RootSystem(n)
    kind, j = rs.classify(zval)
    if ray is not None:
        if kind == "ray" and j != ray % rs.num_rays:
            raise ValueError(f"z lies on ray {j}, not on ray {ray}")
        if kind == "sector":
            raise ValueError("z is not on a ray but a ray index was given")
        j = ray % rs.num_rays
    elif kind == "ray":
        raise ValueError("z lies on a ray; pass the ray index to fix the frame")
    return SectorFrame(n, zval, j, ordering_exponents(n, j))


@dataclass(frozen=True)
class ProjectionMask:
    point: RayPoint
    mask: np.ndarray

    def blocks(self) -> list[tuple[int, ...]]:
        """Index groups (0-based) of the diagonal blocks, in order."""
        n = self.mask.shape[0]
        out, i = [], 0
        while i < n:
            if i + 1 < n and self.mask[i, i + 1]:
                out.append((i, i + 1))
                i += 2
            else:
                out.append((i,))
                i += 1
        return out

    def apply(self, a: np.ndarray) -> np.ndarray:
        return np.where(self.mask, a, 0)


def projection_mask(xi, n: int | None = None) -> ProjectionMask:
    """Mask of entries (j, k) with ``Re(i xi (alpha_j - alpha_k)) = 0``."""
    if not isinstance(xi, RayPoint):
        if n is None:
            raise ValueError("order n is required")
        kind, j = RootSystem(n).classify(complex(xi))
        if kind != "ray":
            raise ValueError("projection mask is defined only on the rays")
        xi = RayPoint(n, j, abs(xi))
    fr = frame_at(xi)
    lam = fr.ordering
    unit = cmath.exp(1j * RootSystem(xi.n).ray_angle(xi.ray))
    re = (1j * unit * lam).real
    mask = np.abs(re[:, None] - re[None, :]) < 1e-9
    return ProjectionMask(xi, mask)


def block_layout(n: int, ray: int) -> list[tuple[int, ...]]:
    """Diagonal block pattern on a ray, e.g. [(0,), (1, 2)] for n=3 on Sigma_0."""
    return projection_mask(RayPoint(n, ray, 1.0)).blocks()


def block_ray(n: int, nu: int) -> int:
    """Fundamental ray (0 or 1) carrying the 2x2 block B_nu."""
    if not 1 <= nu <= n - 1:
        raise ValueError(f"block index {nu} out of range for n={n}")
    if n == 2:
        return 1
    return 1 if nu % 2 else 0


@dataclass(frozen=True)
class ConjugationData:
    n: int

    @property
    def R(self) -> np.ndarray:
        return np.fliplr(np.eye(self.n))

    @staticmethod
    def sigma(z: complex) -> complex:
        return -complex(z).conjugate()

    def star(self, xi: RayPoint) -> RayPoint:
        return star(xi)


def conjugation_data(n: int) -> ConjugationData:
    return ConjugationData(n)


def star(xi: RayPoint) -> RayPoint:
    """The point of Sigma_0 u Sigma_1 on the rotation orbit of conj(xi)."""
    rs = RootSystem(xi.n)
    fund = rs.fundamental_rays()
    if xi.ray not in fund:
        raise ValueError("star is defined on the fundamental rays; rotate first")
    zc = xi.value.conjugate()
    for m in range(xi.n):
        w = zc * rs.alpha**m
        kind, j = rs.classify(w)
        if kind == "ray" and j in fund:
            return RayPoint(xi.n, j, xi.radius)
    raise RuntimeError("conjugate orbit misses the fundamental rays")

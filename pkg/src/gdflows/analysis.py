"""Blocks, canonical variables, triangular factorization and symmetry checks."""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .potential import Potential, is_self_adjoint
from .sectors import RayPoint, RootSystem, block_layout, block_ray, frame_at, projection_mask
from .waves import ScatteringRecord, scatter_point

__all__ = [
    "BlockData",
    "CanonicalVariables",
    "FactorizationData",
    "extract_blocks",
    "block_indices",
    "canonical",
    "factorize",
    "check_rotation",
    "check_selfadjoint",
    "real_canonical",
    "DegenerateError",
]

DEG_TOL = 1e-12


class DegenerateError(ValueError):
    pass


@dataclass
class BlockData:
    point: RayPoint
    layout: list[tuple[int, ...]]
    blocks: list[np.ndarray]

    @property
    def determinants(self) -> list[complex]:
        return [complex(np.linalg.det(b)) for b in self.blocks]

    def block(self, nu: int) -> np.ndarray:
        """The 2x2 block B_nu (indices nu-1, nu in the local ordering)."""
        target = (nu - 1, nu)
        for lay, b in zip(self.layout, self.blocks):
            if lay == target:
                return b
        raise KeyError(f"B_{nu} is not on ray {self.point.ray}")


def extract_blocks(a: np.ndarray, point: RayPoint) -> BlockData:
    layout = block_layout(point.n, point.ray)
    mask = projection_mask(point).mask
    if np.any(np.abs(np.where(mask, 0, a)) > 0):
        raise ValueError("a must be projected onto the block pattern first")
    return BlockData(point, layout, [a[np.ix_(g, g)] for g in layout])


def block_indices(n: int, nu: int) -> tuple[int, int, int]:
    """(ray, i, i+1) locating B_nu."""
    ray = block_ray(n, nu)
    if (nu - 1, nu) not in block_layout(n, ray):
        raise AssertionError(f"layout of ray {ray} has no block B_{nu}")
    return ray, nu - 1, nu


def _unwrap_from_tail(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Continuous log along a radius-sorted grid, principal branch at the largest radius."""
    lg = np.log(z)
    im = np.unwrap(lg.imag[::-1])[::-1]
    wind = np.rint((im - lg.imag) / (2 * np.pi)).astype(int)
    return lg.real + 1j * im, wind


@dataclass
class CanonicalVariables:
    n: int
    nu: int
    ray: int
    radii: np.ndarray
    xi: np.ndarray
    p: np.ndarray
    q: np.ndarray | None  # NaN where the off-diagonal entries are degenerate
    p_winding: np.ndarray
    q_winding: np.ndarray | None
    log_ratio: np.ndarray  # log(a_nn a_{n+1,n+1} / Delta)
    max_jump: float = 0.0

    @property
    def q_valid(self) -> np.ndarray:
        if self.q is None:
            return np.zeros(len(self.radii), dtype=bool)
        return np.isfinite(self.q)

    def to_csv_rows(self) -> list[str]:
        rows = []
        for i, r in enumerate(self.radii):
            q = self.q[i] if self.q is not None else complex("nan")
            qw = self.q_winding[i] if self.q_winding is not None else 0
            rows.append(",".join([str(self.ray), repr(float(r)), str(self.nu),
                                  repr(float(self.p[i].real)), repr(float(self.p[i].imag)),
                                  repr(float(q.real)), repr(float(q.imag)), str(int(self.p_winding[i])),
                                  str(int(qw))]))
        return rows


CANON_HEADER = "ray,radius,nu,p_re,p_im,q_re,q_im,p_winding,q_winding"


def canonical(record: ScatteringRecord, nu: int, deg_tol: float = DEG_TOL,
              delta_tol: float = 1e-8) -> CanonicalVariables:
    """p_nu = n(-xi)^n log(a_nn a_{n+1,n+1}/Delta_nu), q_nu = log(alpha^nu a_{n+1,n}/a_{n,n+1})/4 pi i."""
    n = record.n
    ray, i, j = block_indices(n, nu)
    sub = record.select(ray)
    order = np.argsort(sub.radii)
    radii = sub.radii[order]
    a = sub.a[order]
    xi = np.array([RayPoint(n, ray, float(r)).value for r in radii])
    aii, ajj, aij, aji = a[:, i, i], a[:, j, j], a[:, i, j], a[:, j, i]
    Delta = aii * ajj - aij * aji
    if np.any(np.abs(Delta) < delta_tol):
        raise DegenerateError("Delta_nu nearly vanishes: discrete data are close")
    if np.any(np.abs(aii * ajj) < deg_tol):
        raise DegenerateError("vanishing diagonal entry in B_nu")
    log_ratio, pw = _unwrap_from_tail(aii * ajj / Delta)
    p = n * (-xi) ** n * log_ratio
    q = qw = None
    valid = (np.abs(aij) > deg_tol) & (np.abs(aji) > deg_tol)
    if np.any(valid):
        alpha = cmath.exp(2j * math.pi / n)
        q = np.full(len(radii), np.nan + 0j)
        qw = np.zeros(len(radii), dtype=int)
        lq, w = _unwrap_from_tail(alpha**nu * aji[valid] / aij[valid])
        q[valid] = lq / (4j * math.pi)
        qw[valid] = w
    jump = float(np.max(np.abs(np.diff(log_ratio.imag)))) if len(radii) > 1 else 0.0
    return CanonicalVariables(n, nu, ray, radii, xi, p, q, pw, qw, log_ratio, jump)


# --- triangular factorization ----------------------------------------------------------


@dataclass
class FactorizationData:
    point: RayPoint
    v_plus: np.ndarray
    v_minus: np.ndarray
    a_plus: np.ndarray
    a_minus: np.ndarray

    @property
    def delta_plus(self) -> np.ndarray:
        return np.diag(np.diag(self.a_plus))

    @property
    def delta_minus(self) -> np.ndarray:
        return np.diag(np.diag(self.a_minus))

    def ratio(self) -> np.ndarray:
        """diag of delta_-^{-1} delta_+."""
        return np.diag(self.a_plus) / np.diag(self.a_minus)


def factorize(a: np.ndarray, point: RayPoint, pivot_tol: float = 1e-14) -> FactorizationData:
    """Per-block Gauss factorizations ``a v_+ = a_+`` and ``a v_- = a_-``.

    v_+ is unit lower and a_+ upper triangular; v_- is unit upper and a_-
    lower triangular.  For a block [[a, b], [c, d]] this gives
    diag a_+ = (Delta/d, d) and diag a_- = (a, Delta/a).
    """
    n = point.n
    vp, vm = np.eye(n, dtype=complex), np.eye(n, dtype=complex)
    for g in block_layout(n, point.ray):
        if len(g) == 1:
            continue
        i, j = g
        A, B, C, D = a[i, i], a[i, j], a[j, i], a[j, j]
        if abs(A) < pivot_tol or abs(D) < pivot_tol:
            raise DegenerateError("vanishing pivot: the triangular factorization does not exist")
        vp[j, i] = -C / D          # (a v_+)[j, i] = C + D v = 0
        vm[i, j] = -B / A          # (a v_-)[i, j] = B + A v = 0
    ap = a @ vp
    am = a @ vm
    return FactorizationData(point, vp, vm, ap, am)


def factorization_log_ratio(a: np.ndarray, point: RayPoint) -> np.ndarray:
    """Principal log of diag(delta_-^{-1} delta_+)."""
    return np.log(factorize(a, point).ratio())


# --- symmetry checks --------------------------------------------------------------------


def check_rotation(potential: Potential, points: list[RayPoint]) -> dict:
    dev = 0.0
    for p in points:
        a0 = scatter_point(potential, p).a
        a1 = scatter_point(potential, p.rotate()).a
        dev = max(dev, float(np.max(np.abs(a1 - a0))))
    return {"max_deviation": dev, "points": len(points)}


def _conj_point(xi: RayPoint) -> RayPoint:
    rs = RootSystem(xi.n)
    kind, j = rs.classify(xi.value.conjugate())
    return RayPoint(xi.n, j, xi.radius)


def check_selfadjoint(potential: Potential, record: ScatteringRecord,
                      tol: float = 1e-10) -> dict:
    """Residuals of the conjugation symmetry for L = L*.

    ``identity_*`` entries follow the scalar/block identities term by term;
    ``block_restatement`` is the full matrix relation
    ``R a(conj xi) R = pi_j J_j^{-1} [a(xi)^{-1}]^* J_j pi_j``.
    """
    ok, res = is_self_adjoint(potential, tol)
    if not ok:
        raise ValueError(f"potential is not self-adjoint (residuals {res})")
    n = record.n
    rs = RootSystem(n)
    from .sectors import star
    out: dict = {}
    # block restatement at every record point
    R = np.fliplr(np.eye(n))
    worst = 0.0
    for p, a in zip(record.points(), record.a):
        pc = _conj_point(p)
        ac = scatter_point(potential, pc).a
        fr = frame_at(p)
        J = fr.J_local
        pi = fr.pi_j
        rhs = pi @ np.linalg.inv(J) @ np.linalg.inv(a).conj().T @ J @ pi
        worst = max(worst, float(np.max(np.abs(R @ ac @ R - rhs))))
    out["block_restatement"] = worst

    def at_star(ray_sub: ScatteringRecord, p: RayPoint) -> np.ndarray:
        s = star(p)
        full = record.select(s.ray)
        k = int(np.argmin(np.abs(full.radii - s.radius)))
        if abs(full.radii[k] - s.radius) > 1e-12 * s.radius:
            raise ValueError("star point missing from the record")
        return full.a[k]

    # (i) conj a_11(xi) = 1 / a_nn(xi*), on the ray where a_11 is taken
    r11 = 0.0
    first_ray = 0 if n > 2 else 1
    for p, a in zip(record.select(first_ray).points(), record.select(first_ray).a):
        r11 = max(r11, abs(np.conj(a[0, 0]) * at_star(record, p)[n - 1, n - 1] - 1))
    out["identity_a11"] = float(r11)
    # (ii)-(iv): Delta, p, q for nu and n - nu
    rD = rp = rq = 0.0
    for nu in range(1, n):
        c1 = canonical(record, nu)
        c2 = canonical(record, n - nu)
        for idx, p in enumerate(RayPoint(n, c1.ray, float(r)) for r in c1.radii):
            s = star(p)
            k = int(np.argmin(np.abs(c2.radii - s.radius)))
            if c2.ray != s.ray:
                raise AssertionError("star does not map B_nu's ray to B_{n-nu}'s ray")
            sub1 = record.select(c1.ray)
            sub2 = record.select(c2.ray)
            a1 = sub1.a[np.argsort(sub1.radii)][idx]
            a2 = sub2.a[np.argsort(sub2.radii)][k]
            _, i, j = block_indices(n, nu)
            _, i2, j2 = block_indices(n, n - nu)
            D1 = np.linalg.det(a1[np.ix_((i, j), (i, j))])
            D2 = np.linalg.det(a2[np.ix_((i2, j2), (i2, j2))])
            rD = max(rD, abs(np.conj(D1) * D2 - 1))
            rp = max(rp, abs(np.conj(c1.p[idx]) - c2.p[k]) / max(1.0, abs(c2.p[k])))
            if c1.q is not None and c2.q is not None and c1.q_valid[idx] and c2.q_valid[k]:
                rq = max(rq, abs(np.conj(c1.q[idx]) - c2.q[k]))
    out["identity_delta"] = float(rD)
    out["identity_p"] = float(rp)
    out["identity_q"] = float(rq)
    if n % 2 == 0:
        m = n // 2
        cm = canonical(record, m)
        out["imag_p_mid"] = float(np.max(np.abs(cm.p.imag)))
        out["imag_q_mid"] = float(np.max(np.abs(cm.q.imag[cm.q_valid]))) \
            if cm.q_valid.any() else 0.0
    return out


def real_canonical(canons: dict[int, CanonicalVariables], n: int, tol: float = 1e-8) -> dict:
    """Real canonical variables of the self-adjoint case."""
    out: dict[str, np.ndarray] = {}
    s2 = math.sqrt(2.0)
    for nu in range(1, (n + 1) // 2):
        if (n - nu) == nu:
            continue
        c = canons[nu]
        out[f"sqrt2_re_p{nu}"] = s2 * c.p.real
        out[f"sqrt2_im_p{nu}"] = s2 * c.p.imag
        if c.q_valid.any():
            out[f"sqrt2_re_q{nu}"] = s2 * c.q.real
            out[f"sqrt2_im_q{nu}"] = s2 * c.q.imag
    if n % 2 == 0:
        m = n // 2
        c = canons[m]
        if np.max(np.abs(c.p.imag)) > tol * max(1.0, float(np.max(np.abs(c.p)))):
            raise ValueError(f"p_{m} is not real")
        out[f"p{m}"] = c.p.real
        if c.q_valid.any():
            if np.max(np.abs(c.q.imag[c.q_valid])) > tol:
                raise ValueError(f"q_{m} is not real")
            out[f"q{m}"] = c.q.real
    return out

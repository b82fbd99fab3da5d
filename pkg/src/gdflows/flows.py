"""Time evolution under the derived flows, spectral evolution laws, Hamiltonians and
the generating function."""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .analysis import DegenerateError, _unwrap_from_tail, block_indices, canonical, factorize
from .potential import DecayError, Potential
from .sectors import RayPoint, RootSystem, frame_at, projection_mask
from .symbols import DiffPoly, FlowEquation
from .waves import ScatteringRecord, compute_record, delta_of_z

__all__ = [
    "TIME_FACTOR",
    "BlowUpError",
    "EvolutionRun",
    "HamiltonianTable",
    "linear_multipliers",
    "evolve",
    "measure_time_constant",
    "spectral_evolution_check",
    "action_angle_check",
    "quadrature_radii",
    "set_quadrature",
    "hamiltonians",
    "hamiltonian_drift",
    "partial_fraction_residual",
    "plemelj_phi",
    "direct_phi",
    "series_phi",
    "generating_function_check",
]

# Physical time derivative of u in terms of the commutator [L^{k/n}_+, L]: the
# spectral laws are written with D_t = -i d/dt, so u_t = i * rhs.
TIME_FACTOR = 1j

# RK4 is stable for dt * rho <= 2.8 on the imaginary axis; keep a margin.
RK4_STABILITY = 2.5


class BlowUpError(RuntimeError):
    """Sup-norm growth beyond the configured threshold during time stepping."""


# --- evolution -------------------------------------------------------------------------


@dataclass
class EvolutionRun:
    flow: FlowEquation
    initial: Potential
    times: np.ndarray
    snapshots: list[Potential]
    records: list[ScatteringRecord] | None = None
    meta: dict = field(default_factory=dict)

    def attach_records(self, radii, rays=None, weights=None, r0: float | None = None,
                       threads: int | None = None) -> None:
        """Scattering data at every snapshot on a common spectral grid."""
        self.records = []
        for snap in self.snapshots:
            rec = compute_record(snap, radii=radii, rays=rays, threads=threads)
            if weights is not None:
                set_quadrature(rec, weights, r0)
            self.records.append(rec)

    def manifest(self) -> dict:
        return {"flow": self.flow.to_text(), "n": self.flow.n, "k": self.flow.k,
                "times": [float(t) for t in self.times],
                "initial_hash": self.initial.hash(), **self.meta}


def _kappa(potential: Potential) -> np.ndarray:
    N = potential.x.size - 1
    return 2 * np.pi * np.fft.fftfreq(N, d=potential.h)


def linear_multipliers(flow: FlowEquation, kappa: np.ndarray) -> np.ndarray:
    """Fourier multipliers M(kappa) of the linear part of u_t, shape (K, n-1, n-1)."""
    m = flow.n - 1
    M = np.zeros((kappa.size, m, m), dtype=complex)
    for j, poly in enumerate(flow.rhs):
        for (l, d), c in poly.linear_part().items():
            M[:, j, l] += TIME_FACTOR * c * (1j * kappa) ** d
    return M


def _nonlinear_parts(flow: FlowEquation) -> tuple[DiffPoly, ...]:
    return tuple(DiffPoly({mono: c for mono, c in p.terms.items() if len(mono) != 1})
                 for p in flow.rhs)


def _growth(M: np.ndarray) -> np.ndarray:
    return np.max(np.linalg.eigvals(M).real, axis=-1)


def _derivs(uh: np.ndarray, kappa: np.ndarray, order: int) -> np.ndarray:
    return np.array([np.fft.ifft(uh * (1j * kappa) ** d, axis=-1) for d in range(order + 1)])


def _stiffness(parts, u0: np.ndarray, kappa: np.ndarray, kmax: float) -> float:
    """Crude spectral-radius bound of the nonlinear Jacobian (CFL-like constant)."""
    order = max((p.max_derivative() for p in parts), default=0)
    d = _derivs(np.fft.fft(u0, axis=-1), kappa, order)
    sup = np.max(np.abs(d), axis=-1)
    rho = 0.0
    for p in parts:
        for mono, c in p.terms.items():
            if len(mono) < 2:
                continue
            top = max(mono, key=lambda f: f[1])
            others = list(mono)
            others.remove(top)
            val = abs(complex(c)) * kmax ** top[1] * len(mono)
            for j, mm in others:
                val *= sup[mm, j]
            rho = max(rho, val)
    return rho


def evolve(potential: Potential, flow: FlowEquation, T: float, dt: float | None = None,
           snapshots=5, kmax: float | None = None, trunc_tol: float = 1e-13,
           blowup: float = 10.0) -> EvolutionRun:
    """Integrating-factor RK4 pseudo-spectral evolution of the coefficients.

    The grid is treated as periodic (the duplicated endpoint is dropped). The
    linear part is integrated exactly through per-wavenumber matrix
    exponentials. Nonlinear terms are dealiased by the 2/3 rule. If the linear
    part has growing modes (an ill-posed flow such as the Boussinesq k=2 flow),
    the spectrum is truncated at the largest wavenumber where the initial data
    or their squares exceed ``trunc_tol`` relative to their peak.

    Stability: ``dt * rho <= 2.5``, with rho the nonlinear Jacobian bound of
    :func:`_stiffness`; the default step satisfies it with margin.
    """
    if flow.n != potential.n:
        raise ValueError("flow and potential have different orders")
    times = np.linspace(0.0, T, snapshots) if np.isscalar(snapshots) else np.asarray(snapshots, float)
    if times[0] != 0.0 or np.any(np.diff(times) <= 0):
        raise ValueError("snapshot times must start at 0 and increase")
    kappa = _kappa(potential)
    M = linear_multipliers(flow, kappa)
    growth = _growth(M)
    scale = np.max(np.abs(M), axis=(1, 2)) + 1e-300
    ill_posed = bool(np.any(growth > 1e-12 * scale))
    u0 = np.array(potential.samples[:, :-1])
    uh = np.fft.fft(u0, axis=-1)
    nyq = np.pi / potential.h
    if kmax is None:
        kmax = 2.0 * nyq / 3.0
        if ill_posed:
            # quadratic terms carry the widest spectrum; resolve it, cut beyond
            amp = np.maximum(np.max(np.abs(uh), axis=0),
                             np.max(np.abs(np.fft.fft(u0 * u0, axis=-1)), axis=0))
            big = np.abs(kappa)[amp > trunc_tol * amp.max()] if amp.max() > 0 else np.array([0.0])
            kmax = min(kmax, float(big.max()) if big.size else 0.0)
    mask = np.abs(kappa) <= kmax + 1e-12
    uh = uh * mask
    parts = _nonlinear_parts(flow)
    has_nl = any(not p.is_zero() for p in parts)
    order = max((p.max_derivative() for p in parts), default=0)
    rho = _stiffness(parts, np.fft.ifft(uh, axis=-1), kappa, kmax) if has_nl else 0.0
    if dt is None:
        dt = min(1e-3, 0.5 * RK4_STABILITY / rho) if rho > 0 else (times[-1] - times[0] or 1.0)
    if rho * dt > RK4_STABILITY:
        raise ValueError(f"dt = {dt:.3g} violates the stability bound dt*rho <= {RK4_STABILITY}"
                         f" (rho = {rho:.3g})")

    def expo(tau):
        E = expm(M[mask] * tau)
        out = np.zeros_like(M)
        out[mask] = E
        return out

    def apply(E, v):
        return np.einsum("kij,jk->ik", E, v)

    def N(vh):
        if not has_nl:
            return np.zeros_like(vh)
        d = _derivs(vh, kappa, order)
        return TIME_FACTOR * np.fft.fft(np.array([p.evaluate(d) for p in parts]), axis=-1) * mask

    sup0 = float(np.max(np.abs(u0))) or 1.0
    snaps = [potential.replace_samples(_close(np.fft.ifft(uh, axis=-1)))]
    cache = {}
    t_now = 0.0
    steps = 0
    for t_next in times[1:]:
        nsteps = max(1, int(math.ceil((t_next - t_now) / dt - 1e-9)))
        h = (t_next - t_now) / nsteps
        if h not in cache:
            cache[h] = (expo(h / 2), expo(h))
        E2, E = cache[h]
        for _ in range(nsteps):
            k1 = N(uh)
            k2 = N(apply(E2, uh + 0.5 * h * k1))
            k3 = N(apply(E2, uh) + 0.5 * h * k2)
            k4 = N(apply(E, uh) + h * apply(E2, k3))
            uh = apply(E, uh) + h / 6 * (apply(E, k1) + 2 * apply(E2, k2 + k3) + k4)
            steps += 1
        t_now = t_next
        u = np.fft.ifft(uh, axis=-1)
        if not np.all(np.isfinite(u)) or np.max(np.abs(u)) > blowup * sup0:
            raise BlowUpError(f"sup |u| exceeded {blowup} x initial at t = {t_now:.4g}")
        snap = potential.replace_samples(_close(u))
        if snap.boundary_magnitude() >= 10 * potential.decay_tol:
            raise DecayError(f"boundary decay lost at t = {t_now:.4g}: "
                             f"|u(+-X)| = {snap.boundary_magnitude():.3g}")
        snaps.append(snap)
    meta = {"dt": float(dt), "steps": steps, "kmax": float(kmax), "ill_posed": ill_posed,
            "stiffness": float(rho), "max_growth_rate": float(np.max(growth[mask])),
            "time_factor": [TIME_FACTOR.real, TIME_FACTOR.imag]}
    return EvolutionRun(flow, potential, times, snaps, None, meta)


def _close(u: np.ndarray) -> np.ndarray:
    """Append the periodic endpoint."""
    return np.concatenate([u, u[:, :1]], axis=1)


# --- spectral evolution law -------------------------------------------------------------


def _phase_data(run: EvolutionRun, floor: float):
    """(Theta, a(0), a(t), l, m) for every in-pattern off-diagonal entry above ``floor``.

    Theta = (w_l^k - w_m^k) t with w the local wavenumbers, so that the law
    reads a_lm(t) = exp(i c Theta) a_lm(0) for the anchored constant c.
    """
    if not run.records:
        raise ValueError("run has no scattering records; call attach_records first")
    k = run.flow.k
    rec0 = run.records[0]
    pts = rec0.points()
    out = []
    for ti, (t, rec) in enumerate(zip(run.times, run.records)):
        if ti == 0:
            continue
        for p_idx, pt in enumerate(pts):
            w = frame_at(pt).wavenumbers
            mask = projection_mask(pt.value, pt.n).mask
            for l in range(pt.n):
                for m in range(pt.n):
                    if l == m or not mask[l, m]:
                        continue
                    ent = np.abs(rec0.a[:, l, m]).max()
                    a0 = rec0.a[p_idx, l, m]
                    if ent == 0 or abs(a0) <= floor * ent:
                        continue
                    out.append(((w[l] ** k - w[m] ** k) * t, a0, rec.a[p_idx, l, m], ent))
    return out


def measure_time_constant(run: EvolutionRun, floor: float = 1e-6) -> float:
    """Fit the single real constant c in a_lm(t) = exp(i c Theta) a_lm(0)."""
    data = [(th.real, np.angle(at / a0)) for th, a0, at, _ in _phase_data(run, floor)
            if abs(th.imag) < 1e-12 * max(1.0, abs(th))]
    if not data:
        raise DegenerateError("no usable off-diagonal entries to anchor the time constant")
    th, ph = np.array(data).T
    small = np.abs(th) < 1.0
    if not np.any(small):
        small = np.abs(th) <= np.min(np.abs(th)) * 1.0001
    c0 = float(np.median(ph[small] / th[small]))
    ph = ph + 2 * np.pi * np.rint((c0 * th - ph) / (2 * np.pi))
    return float(np.dot(th, ph) / np.dot(th, th))


def spectral_evolution_check(run: EvolutionRun, c: float, floor: float = 1e-4) -> dict:
    """Compare a(t) with the exponential law using the anchored constant ``c``.

    ``max_rel`` is pointwise (entries above ``floor`` times the entry's peak);
    ``max_scaled`` divides by the entry's peak over the grid.
    """
    rel, scaled = [0.0], [0.0]
    for th, a0, at, ent in _phase_data(run, floor):
        err = abs(at - cmath.exp(1j * c * th) * a0)
        rel.append(err / abs(a0))
        scaled.append(err / ent)
    rec0 = run.records[0]
    diag = 0.0
    for rec in run.records[1:]:
        d = np.abs(np.diagonal(rec.a, axis1=1, axis2=2) - np.diagonal(rec0.a, axis1=1, axis2=2))
        diag = max(diag, float(d.max()))
    return {"c": c, "max_rel": max(rel), "max_scaled": max(scaled), "entries": len(rel) - 1,
            "diagonal_drift": diag}


# --- action-angle variables -----------------------------------------------------------------


def action_angle_check(run: EvolutionRun, c: float, min_change: float = 1e-4,
                       resolve: float = 0.125, floor: float = 1e-6) -> dict:
    """Drift of p_nu and fitted slopes of q_nu against c (w_{nu+1}^k - w_nu^k) / 2 pi.

    q is defined modulo 1/2; its real part is unwrapped in time. Radii where the
    predicted change between consecutive snapshots exceeds ``resolve`` cannot be
    unwrapped unambiguously and are excluded; so are radii whose total predicted
    change is below ``min_change`` (noise-dominated), and radii where an
    off-diagonal entry of the block is below ``floor`` times its peak.
    """
    if not run.records:
        raise ValueError("run has no scattering records; call attach_records first")
    n, k = run.flow.n, run.flow.k
    times = run.times
    dtmax = float(np.max(np.diff(times)))
    T = float(times[-1])
    report = {"p_drift": 0.0, "q_slope_rel": 0.0, "q_affine_residual": 0.0, "q_checked": 0}
    for nu in range(1, n):
        cvs = [canonical(rec, nu) for rec in run.records]
        p = np.array([cv.p for cv in cvs])
        scale = float(np.max(np.abs(p[0]))) or 1.0
        report["p_drift"] = max(report["p_drift"], float(np.max(np.abs(p - p[0])) / scale))
        if any(cv.q is None for cv in cvs):
            continue
        q = np.array([cv.q for cv in cvs])
        valid = np.all(np.isfinite(q), axis=0)
        cv0 = cvs[0]
        ray, i, j = block_indices(n, nu)
        sub = run.records[0].select(ray)
        a0 = sub.a[np.argsort(sub.radii)]
        for e in (a0[:, i, j], a0[:, j, i]):
            valid &= np.abs(e) > floor * np.abs(e).max()
        s = np.array([c * (frame_at(RayPoint(n, cv0.ray, float(r))).wavenumbers[j] ** k
                           - frame_at(RayPoint(n, cv0.ray, float(r))).wavenumbers[i] ** k)
                      / (2 * np.pi) for r in cv0.radii])
        ok = valid & (np.abs(s.real) * dtmax < resolve) & (np.abs(s) * T > min_change)
        if not np.any(ok):
            continue
        qo = q[:, ok]
        phase = np.unwrap(4 * np.pi * qo.real, axis=0) / (4 * np.pi)
        qo = phase + 1j * qo.imag
        A = np.vstack([np.ones_like(times), times]).T
        coef, *_ = np.linalg.lstsq(A, qo, rcond=None)
        fit = coef[1]
        resid = qo - A @ coef
        report["q_slope_rel"] = max(report["q_slope_rel"],
                                    float(np.max(np.abs(fit - s[ok]) / np.abs(s[ok]))))
        report["q_affine_residual"] = max(report["q_affine_residual"], float(np.max(np.abs(resid))))
        report["q_checked"] += int(np.count_nonzero(ok))
    return report


# --- Hamiltonians ---------------------------------------------------------------------------


_R0 = 1e-4


def quadrature_radii(R: float = 8.0, M: int = 64, r0: float = _R0) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights for int_{r0}^R f(r) dr, uniform in log r.

    Below r0 the wave solver loses accuracy (a grows like 1/xi and det a = 1
    is lost to cancellation); the piece [0, r0] is handled by
    :func:`_origin_part` where it matters.
    """
    t, w = np.polynomial.legendre.leggauss(M)
    span = math.log(R / r0)
    r = r0 * np.exp((t + 1) / 2 * span)
    return r, w / 2 * span * r


def set_quadrature(record: ScatteringRecord, weights, r0: float | None = None) -> None:
    """Attach per-radius weights (repeated on every ray of the record)."""
    nr = len(set(record.rays.tolist()))
    record.meta["quad_weights"] = np.tile(np.asarray(weights, dtype=float), nr).tolist()
    if r0 is not None:
        record.meta["quad_r0"] = float(r0)


def _origin_part(radii: np.ndarray, g: np.ndarray, h, r0: float, nodes: int = 24) -> complex:
    """int_0^{r0} g(r) h(r) dr with g modelled as A + B log r from the smallest radii.

    ``g`` carries the logarithmic singularity at the origin; ``h`` is a smooth
    callable weight.
    """
    sel = np.argsort(radii)[:4]
    A = np.vstack([np.ones(sel.size), np.log(radii[sel])]).T
    (a0, b0), *_ = np.linalg.lstsq(A, g[sel], rcond=None)
    t, w = np.polynomial.legendre.leggauss(nodes)
    t = (t + 1) / 2
    r = r0 * t**3
    wr = w / 2 * 3 * r0 * t**2
    return complex(np.sum(wr * (a0 + b0 * np.log(r)) * h(r)))


@dataclass
class HamiltonianTable:
    n: int
    values: dict[int, complex]
    full_sigma: dict[int, complex] | None = None
    tail_bounds: dict[int, float] = field(default_factory=dict)
    cutoff_scan: dict[int, list[tuple[float, complex]]] = field(default_factory=dict)
    z_samples: list[complex] = field(default_factory=list)
    H_of_z: list[complex] = field(default_factory=list)
    phi: dict[int, list[complex]] = field(default_factory=dict)

    def manifest(self) -> dict:
        def cx(v):
            return [float(np.real(v)), float(np.imag(v))]
        return {
            "n": self.n,
            "H": {str(k): cx(v) for k, v in self.values.items()},
            "H_full_sigma": None if self.full_sigma is None else
            {str(k): cx(v) for k, v in self.full_sigma.items()},
            "tail_bounds": {str(k): v for k, v in self.tail_bounds.items()},
            "cutoff_scan": {str(k): [[c, cx(v)] for c, v in s] for k, s in self.cutoff_scan.items()},
            "z_samples": [cx(z) for z in self.z_samples],
            "H_of_z": [cx(v) for v in self.H_of_z],
            "phi": {str(k): [cx(v) for v in s] for k, s in self.phi.items()},
        }


def _log_ratio_rows(record: ScatteringRecord) -> dict[int, tuple]:
    """Per ray: sorted radii, points, quadrature weights and log diag(delta_-^{-1} delta_+)."""
    out = {}
    qw = record.meta.get("quad_weights")
    for ray in sorted(set(record.rays.tolist())):
        idx = np.nonzero(record.rays == ray)[0]
        idx = idx[np.argsort(record.radii[idx])]
        radii = record.radii[idx]
        pts = [RayPoint(record.n, ray, float(r)) for r in radii]
        ratio = np.array([factorize(record.a[i], pt).ratio() for i, pt in zip(idx, pts)])
        # continuous branch along the ray, principal at the largest radius
        L = np.array([_unwrap_from_tail(col)[0] for col in ratio.T]).T
        w = np.asarray(qw)[idx] if qw is not None else None
        out[ray] = (radii, pts, w, L)
    return out


def _ray_integral(radii, w, f, r_cut: float = 0.0) -> complex:
    sel = radii >= r_cut
    if w is not None:
        return complex(np.sum(w[sel] * f[sel]))
    return complex(np.trapezoid(f[sel], radii[sel])) if np.count_nonzero(sel) > 1 else 0j


def hamiltonians(record: ScatteringRecord, k_list, cutoffs=None) -> HamiltonianTable:
    """H_k = (n / 2 pi i) int over the fundamental rays of (-xi)^n tr[(xi J)^k log delta_-^{-1}delta_+] dxi/xi.

    Quadrature weights are taken from ``record.meta['quad_weights']`` when present
    (see :func:`quadrature_radii`); otherwise the trapezoidal rule on the record's
    radii is used and the part below the smallest radius is left out, with a
    crude bound r_min |f(r_min)| recorded as the tail bound. If the record covers
    every ray, the full-contour form (1 / 2 pi i) int over all rays is also given.
    """
    n = record.n
    rs = RootSystem(n)
    rows = _log_ratio_rows(record)
    fund = rs.fundamental_rays()
    integrands = {}
    for ray, (radii, pts, w, L) in rows.items():
        xi = np.array([pt.value for pt in pts])
        wn = np.array([frame_at(pt).wavenumbers for pt in pts])
        for k in k_list:
            # dxi / xi = dr / r along a ray
            integrands[ray, k] = (-xi) ** n * np.sum(wn**k * L, axis=1) / radii
    values, tails, scan = {}, {}, {}
    for k in k_list:
        tot, tail = 0j, 0.0
        for ray in fund:
            if ray not in rows:
                raise ValueError(f"record lacks fundamental ray {ray}")
            radii, _, w, _ = rows[ray]
            f = integrands[ray, k]
            tot += _ray_integral(radii, w, f)
            tail += float(radii[0] * abs(f[0]) if w is None else 0.0) + float(abs(f[-1]))
        values[k] = n / (2j * np.pi) * tot
        tails[k] = n / (2 * np.pi) * tail
        if cutoffs is not None:
            scan[k] = [(float(c), n / (2j * np.pi) * sum(
                _ray_integral(rows[r][0], rows[r][2], integrands[r, k], c) for r in fund))
                for c in cutoffs]
    full = None
    if set(rows) >= set(range(rs.num_rays)) and n > 2:
        full = {k: sum(_ray_integral(rows[r][0], rows[r][2], integrands[r, k])
                       for r in range(rs.num_rays)) / (2j * np.pi) for k in k_list}
    elif n == 2 and set(rows) >= {0, 1}:
        full = {k: sum(_ray_integral(rows[r][0], rows[r][2], integrands[r, k])
                       for r in (0, 1)) / (2j * np.pi) for k in k_list}
    return HamiltonianTable(n, values, full, tails, scan)


def hamiltonian_drift(run: EvolutionRun, k_list, rel_floor: float = 1e-12) -> dict:
    """Max over snapshots of |H_k(t) - H_k(0)| / |H_k(0)| (absolute below ``rel_floor``)."""
    tables = [hamiltonians(rec, k_list) for rec in run.records]
    scale = max(abs(v) for v in tables[0].values.values()) or 1.0
    drift = {}
    for k in k_list:
        h0 = tables[0].values[k]
        d = max(abs(t.values[k] - h0) for t in tables)
        drift[k] = d / abs(h0) if abs(h0) > rel_floor * scale else d
    return {"drift": drift, "H0": {k: tables[0].values[k] for k in k_list},
            "max_drift": max(drift.values())}


# --- generating function --------------------------------------------------------------------


def partial_fraction_residual(n: int, k: int, xi: complex, z: complex) -> tuple[complex, complex]:
    """Both sides of sum_j alpha^{jk} / (xi - alpha^j z) = n xi^{k-1} z^{n-k} / (xi^n - z^n)."""
    alpha = cmath.exp(2j * math.pi / n)
    lhs = sum(alpha ** (j * k) / (xi - alpha**j * z) for j in range(n))
    rhs = n * xi ** (k - 1) * z ** (n - k) / (xi**n - z**n)
    return lhs, rhs


def _check_off_sigma(n: int, z: complex, margin: float = 0.05) -> None:
    rays = RootSystem(n).rays
    d = np.min(np.abs(np.angle(rays / np.exp(1j * np.angle(z)))))
    if abs(z) == 0 or d < margin:
        raise ValueError(f"z = {z} is too close to the contour for Plemelj quadrature")


def plemelj_phi(record: ScatteringRecord, k: int, z: complex) -> complex:
    """Phi_k(z) = tr[J^k log delta(z)] from the jump across the fundamental rays.

    Uses (1 / 2 pi i) int tr[J^k log delta_-^{-1}delta_+] n xi^{k-1} z^{n-k} / (xi^n - z^n) dxi,
    which folds the rotated copies of the rays together.
    """
    n = record.n
    _check_off_sigma(n, z)
    tot = 0j
    for ray in RootSystem(n).fundamental_rays():
        radii, pts, w, L = _log_ratio_rows(record.select(ray))[ray]
        if w is None:
            raise ValueError("Plemelj quadrature needs a record on quadrature_radii")
        xi = np.array([pt.value for pt in pts])
        J = np.array([frame_at(pt).ordering for pt in pts])
        jump = np.sum(J**k * L, axis=1)
        kern = n * xi ** (k - 1) * z ** (n - k) / (xi**n - z**n)
        tot += np.sum(w * jump * kern * (xi / radii))
        r0 = record.meta.get("quad_r0")
        if r0:
            e = pts[0].value / pts[0].radius
            tot += _origin_part(radii, jump, lambda r: (n * (r * e) ** (k - 1) * z ** (n - k)
                                                        / ((r * e) ** n - z**n) * e), r0)
    return complex(tot / (2j * np.pi))


def direct_phi(potential: Potential, k: int, z: complex) -> complex:
    """tr[J(z)^k log delta(z)] from the wave solver (n = 2)."""
    d = np.diag(delta_of_z(potential, z))
    J = frame_at(z, n=potential.n).ordering
    return complex(np.sum(J**k * np.log(d)))


def series_phi(record: ScatteringRecord, k: int, z: complex, terms: int) -> list[complex]:
    """Partial sums of -sum_j z^{-nj-k} (n / 2 pi i) int tr[J^k log delta_-^{-1}delta_+] xi^{nj+k} dxi/xi."""
    n = record.n
    sums, acc = [], 0j
    for jj in range(terms):
        mom = 0j
        for ray in RootSystem(n).fundamental_rays():
            radii, pts, w, L = _log_ratio_rows(record.select(ray))[ray]
            xi = np.array([pt.value for pt in pts])
            J = np.array([frame_at(pt).ordering for pt in pts])
            g = np.sum(J**k * L, axis=1)
            mom += _ray_integral(radii, w, g * xi ** (n * jj + k) / radii)
            r0 = record.meta.get("quad_r0")
            if r0:
                e = pts[0].value / pts[0].radius
                p = n * jj + k
                mom += _origin_part(radii, g, lambda r: (r * e) ** p / r, r0)
        acc += -z ** (-(n * jj + k)) * n / (2j * np.pi) * mom
        sums.append(acc)
    return sums


def generating_function_check(potential: Potential, z_samples, R: float = 8.0, M: int = 64,
                              terms: int = 4, samples: int = 100, seed: int = 0,
                              record: ScatteringRecord | None = None) -> dict:
    """Partial-fraction identity, Plemelj vs direct Phi_k(z), and the large-z series tail."""
    rng = np.random.default_rng(seed)
    pf = []
    lhs, rhs = partial_fraction_residual(3, 1, 2.0, 1.0)
    pf.append(abs(lhs - rhs) / abs(rhs))
    three_sevenths = (complex(lhs), complex(rhs))
    for _ in range(samples - 1):
        nn = int(rng.integers(2, 5))
        kk = int(rng.integers(1, nn + 1))
        xi, z = rng.normal(size=2) + 1j * rng.normal(size=2)
        lhs, rhs = partial_fraction_residual(nn, kk, complex(xi), complex(z))
        pf.append(abs(lhs - rhs) / max(abs(rhs), 1e-300))
    n = potential.n
    if record is None:
        radii, w = quadrature_radii(R, M)
        record = compute_record(potential, radii=radii)
        set_quadrature(record, w, _R0)
    out = {"partial_fraction_max": float(max(pf)), "partial_fraction_samples": len(pf),
           "three_sevenths": [list(map(float, (v.real, v.imag))) for v in three_sevenths],
           "z": [], "plemelj": [], "direct": [], "plemelj_vs_direct": [], "series_mismatch": [],
           "series_monotone": []}
    ks = [1] if n == 2 else list(range(1, n))
    for z in z_samples:
        z = complex(z)
        out["z"].append([z.real, z.imag])
        for k in ks:
            pl = plemelj_phi(record, k, z)
            ref = pl
            out["plemelj"].append([pl.real, pl.imag])
            if n == 2:
                dr = direct_phi(potential, k, z)
                ref = dr
                out["direct"].append([dr.real, dr.imag])
                out["plemelj_vs_direct"].append(abs(pl - dr) / max(abs(dr), 1e-300))
            mism = [abs(s - ref) for s in series_phi(record, k, z, terms)]
            out["series_mismatch"].append(mism)
            out["series_monotone"].append(bool(all(b < a for a, b in zip(mism, mism[1:]))))
    out["plemelj_vs_direct_max"] = max(out["plemelj_vs_direct"], default=0.0)
    out["all_monotone"] = all(out["series_monotone"])
    return out

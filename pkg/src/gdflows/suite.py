"""The acceptance checks, one function per criterion.

Every function returns a :class:`CriterionResult` holding named checks with
their measured value, tolerance and verdict. The CLI ``verify`` command and the
test-suite both drive these functions; tolerances can be overridden by name.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .analysis import block_indices, canonical, check_rotation, check_selfadjoint
from .brackets import (WaveCache, TestFunction, SmearedFunctional, bracket_form_symmetric,
                       bracket_form_by_parts, canonical_brackets, gradient_fd_check, local_canonical,
                       predicted_bracket, raw_bracket, wave_data, wronskian_of_waves)
from .flows import (action_angle_check, evolve, generating_function_check, hamiltonian_drift,
                    measure_time_constant, quadrature_radii, spectral_evolution_check)
from .potential import builtin
from .sectors import RayPoint, RootSystem
from .symbols import derive_flow, order_drop_holds, recomposition_residual
from .waves import compute_record, default_radii, square_well_oracle

__all__ = ["Check", "CriterionResult", "CRITERIA", "run_criterion", "run_all", "DEFAULT_TOLERANCES"]

DEFAULT_TOLERANCES = {
    "c1.zero_identity": 1e-10,
    "c2.oracle": 1e-6,
    "c3.x_independence": 1e-7,
    "c3.det": 1e-8,
    "c3.leakage": 1e-6,
    "c3.rotation": 1e-8,
    "c4.order_dev": 0.2,
    "c4.final": 1e-5,
    "c5.wronskian": 1e-8,
    "c6.kernel": 0.02,
    "c6.forms": 1e-6,
    "c7.pairing": 0.01,
    "c7.floor": 0.01,
    "c8.identity": 1e-8,
    "c9.anchor": 1e-9,
    "c9.translation": 1e-6,
    "c9.phase": 1e-3,
    "c9.diagonal": 1e-4,
    "c9.action": 1e-4,
    "c9.angle": 1e-3,
    "c9.mass": 1e-8,
    "c9.reality": 1e-8,
    "c10.drift": 1e-4,
    "c10.partial_fraction": 1e-12,
    "c10.plemelj": 1e-5,
}


@dataclass
class Check:
    name: str
    value: float
    tol: float
    passed: bool
    note: str = ""

    def to_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "tol": self.tol, "passed": self.passed,
                "note": self.note}


@dataclass
class CriterionResult:
    number: int
    title: str
    checks: list[Check] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        return {"criterion": self.number, "title": self.title, "passed": self.passed,
                "checks": [c.to_dict() for c in self.checks]}

    def line(self) -> str:
        worst = ", ".join(f"{c.name}={c.value:.3g} (tol {c.tol:.3g})" for c in self.failures())
        tail = f" -- failing: {worst}" if worst else ""
        return f"{'PASS' if self.passed else 'FAIL'} criterion {self.number}: {self.title}{tail}"


class _Ctx:
    def __init__(self, tolerances: dict | None, seed: int):
        self.tol = dict(DEFAULT_TOLERANCES)
        self.tol.update(tolerances or {})
        self.seed = seed

    def below(self, res: CriterionResult, name: str, value: float, key: str, note: str = ""):
        tol = self.tol[key]
        value = float(value)
        res.checks.append(Check(name, value, tol, bool(np.isfinite(value) and value < tol), note))

    def flag(self, res: CriterionResult, name: str, ok: bool, note: str = ""):
        res.checks.append(Check(name, float(bool(ok)), 1.0, bool(ok), note))


# --- shared fixtures ----------------------------------------------------------------------


def _gauss2():
    return builtin("gaussian", n=2, amplitude=0.3, sigma=0.7)


def _gauss3():
    return builtin("gaussian", n=3, amplitude=[0.2, 0.1], sigma=0.7)


def _tests(n: int, ray_f: int, ray_g: int, nodes: int = 40):
    return (TestFunction(n, ray_f, 1.2, 0.3, 0.2, 2.4, nodes=nodes),
            TestFunction(n, ray_g, 1.5, 0.3, 0.2, 2.4, nodes=nodes))


# --- criteria -----------------------------------------------------------------------------


def c1(ctx: _Ctx) -> CriterionResult:
    res = CriterionResult(1, "zero potential gives a = I")
    for n in (2, 3, 4):
        rec = compute_record(builtin("zero", n=n), default_radii())
        dev = float(np.max(np.abs(rec.a - np.eye(n))))
        ctx.below(res, f"n={n} max|a-I|", dev, "c1.zero_identity")
    return res


def c2(ctx: _Ctx) -> CriterionResult:
    res = CriterionResult(2, "square-well oracle (n=2)")
    A, w = 0.5, 2.0
    p = builtin("square_well", n=2, amplitude=A, width=w)
    rec = compute_record(p, default_radii(count=64))
    err = 0.0
    for pt, a in zip(rec.points(), rec.a):
        o = square_well_oracle(A, w, pt)
        err = max(err, float(np.max(np.abs(a - o) / np.abs(o))))
    ctx.below(res, "max entrywise rel. error (64 points)", err, "c2.oracle")
    return res


def c3(ctx: _Ctx) -> CriterionResult:
    res = CriterionResult(3, "structural invariants")
    for n in (2, 3):
        p = builtin("gaussian", n=n, amplitude=[0.1] + [0.05] * (n - 2), sigma=1.0)
        rec = compute_record(p, default_radii(count=12))
        m = rec.meta
        ctx.below(res, f"n={n} x-independence", m["max_x_dependence"], "c3.x_independence")
        ctx.below(res, f"n={n} det a - 1", m["max_det_error"], "c3.det")
        ctx.below(res, f"n={n} block leakage", m["max_leakage"], "c3.leakage")
        pts = [RayPoint(n, j, r) for j in RootSystem(n).fundamental_rays() for r in (0.3, 1.0, 3.0)]
        ctx.below(res, f"n={n} rotation", check_rotation(p, pts)["max_deviation"], "c3.rotation")
    return res


def c4(ctx: _Ctx) -> CriterionResult:
    res = CriterionResult(4, "gradient law by central differences")
    cases = [(builtin("gaussian", n=2, amplitude=0.1), (0, 1), RayPoint(2, 1, 1.0), 0),
             (builtin("gaussian", n=3, amplitude=[0.1, 0.05]), (1, 2), RayPoint(3, 0, 1.0), 1),
             (builtin("gaussian", n=3, amplitude=[0.1, 0.05]), (0, 0), RayPoint(3, 1, 1.0), 0)]
    for p, entry, pt, coeff in cases:
        r = gradient_fd_check(p, entry, pt, coeff=coeff)
        tag = f"n={p.n} a{entry} u{coeff}"
        ctx.below(res, f"{tag} |order-2|", abs(r["order"] - 2.0), "c4.order_dev")
        ctx.below(res, f"{tag} final rel. error", r["final_rel_error"], "c4.final")
    return res


def c5(ctx: _Ctx) -> CriterionResult:
    res = CriterionResult(5, "Wronskian identity on solver waves")
    for n in (2, 3):
        p = builtin("gaussian", n=n, amplitude=[0.1] + [0.05] * (n - 2))
        A = wave_data(p, RayPoint(n, 1, 1.3))
        B = wave_data(p, RayPoint(n, 1, 1.7))
        worst = 0.0
        for k in range(n):
            for l in range(n):
                worst = max(worst, wronskian_of_waves(p, A, k, B, l)["relative_residual"])
        ctx.below(res, f"n={n} pointwise residual", worst, "c5.wronskian")
    return res


def c6(ctx: _Ctx) -> CriterionResult:
    res = CriterionResult(6, "bracket kernel vs smeared raw bracket")
    plans = [
        (2, _gauss2(), (1, 1), [((0, 1), (1, 0)), ((0, 0), (0, 1)), ((1, 0), (0, 0))], ((0, 0), (1, 1))),
        (3, _gauss3(), (1, 1), [((0, 2), (2, 0)), ((0, 0), (0, 2)), ((2, 0), (0, 0))], ((0, 0), (2, 2))),
        (3, _gauss3(), (0, 1), [((1, 2), (0, 2)), ((1, 1), (2, 0)), ((2, 1), (0, 0))], None),
    ]
    for n, p, (rf, rg), pairs, diag in plans:
        cache = WaveCache(p)
        f, g = _tests(n, rf, rg)
        scale = noise = 0.0
        for e1, e2 in pairs:
            F, G = SmearedFunctional(f, e1), SmearedFunctional(g, e2)
            raw = raw_bracket(F, G, p, cache=cache)["value"]
            pred = predicted_bracket(F, G, p, cache=cache)["value"]
            scale = max(scale, abs(pred))
            noise = max(noise, abs(raw - pred) / abs(pred))
            ctx.below(res, f"n={n} rays{rf}{rg} {{a{e1},a{e2}}} rel", abs(raw - pred) / abs(pred),
                      "c6.kernel")
        if diag is not None:
            # "zero within quadrature noise": the noise level is the largest raw-vs-kernel
            # discrepancy measured on the non-vanishing pairs of the same configuration
            F, G = SmearedFunctional(f, diag[0]), SmearedFunctional(g, diag[1])
            raw = raw_bracket(F, G, p, cache=cache)["value"]
            val = abs(raw) / scale
            res.checks.append(Check(f"n={n} diagonal pair {{a{diag[0]},a{diag[1]}}} / scale", val,
                                    noise, bool(val < noise), "tol = measured quadrature noise"))
    rng = np.random.default_rng(ctx.seed)
    worst = 0.0
    for n in (2, 3):
        p = builtin("gaussian", n=n, amplitude=[0.1] * (n - 1), sigma=0.7)
        x = p.x

        def field_():
            return np.array([(rng.normal() + 1j * rng.normal())
                             * np.exp(-(x - rng.normal()) ** 2 / (0.5 + rng.random()))
                             for _ in range(n - 1)])
        gF, gG = field_(), field_()
        a, b = bracket_form_symmetric(gF, gG, p, p.X), bracket_form_by_parts(gF, gG, p, p.X)
        worst = max(worst, abs(a - b) / abs(a))
    ctx.below(res, "symmetric vs integrated-by-parts forms, decaying fields", worst, "c6.forms")
    return res


def c7(ctx: _Ctx) -> CriterionResult:
    res = CriterionResult(7, "canonical relations")
    for n, p in ((2, _gauss2()), (3, _gauss3())):
        tests = {nu: _tests(n, block_indices(n, nu)[0], block_indices(n, nu)[0]) for nu in range(1, n)}
        out = canonical_brackets(p, tests)
        pair = max(abs(v) for v in out["pairing"].values())
        for (nu, mu), v in out["pq"].items():
            if nu == mu:
                ref = out["pairing"][nu]
                ctx.below(res, f"n={n} {{p{nu},q{mu}}} vs pairing", abs(v - ref) / abs(ref), "c7.pairing")
            else:
                ctx.below(res, f"n={n} {{p{nu},q{mu}}} / pairing", abs(v) / pair, "c7.floor")
        for key in ("pp", "qq"):
            for (nu, mu), v in out[key].items():
                ctx.below(res, f"n={n} {{{key[0]}{nu},{key[1]}{mu}}} / pairing", abs(v) / pair, "c7.floor")
        # {P_mu, a_lm} against the local prediction (zero across rays)
        cache = WaveCache(p)
        worst = 0.0
        for mu in range(1, n):
            for nu in range(1, n):
                rmu, rnu = block_indices(n, mu)[0], block_indices(n, nu)[0]
                f, g = _tests(n, rmu, rnu)
                P = SmearedFunctional(f, kind="p", nu=mu, measure="dxi/xi")
                for ent in ((nu - 1, nu), (nu, nu - 1)):
                    A = SmearedFunctional(g, ent, representation="local")
                    raw = raw_bracket(P, A, p, cache=cache)["value"]
                    loc = 0j
                    if rmu == rnu:
                        r, w = f.quadrature()
                        for pt, rr, ww in zip(f.points(), r, w):
                            loc += f(rr) * g(rr) * ww * f.direction * local_canonical(cache(pt).a, pt, mu, *ent)
                    worst = max(worst, abs(raw - loc) / pair)
        ctx.below(res, f"n={n} {{P_mu, a_lm}} relation / pairing", worst, "c7.floor")
    return res


def c8(ctx: _Ctx) -> CriterionResult:
    res = CriterionResult(8, "self-adjoint symmetry (n=2 real Gaussian)")
    p = builtin("gaussian", n=2, amplitude=0.1)
    rec = compute_record(p, np.geomspace(0.3, 8, 8))
    out = check_selfadjoint(p, rec)
    for key in ("identity_a11", "identity_delta", "identity_p", "identity_q"):
        ctx.below(res, key, out[key], "c8.identity")
    ctx.below(res, "max |Im p_1|", float(np.max(np.abs(canonical(rec, 1).p.imag))), "c8.identity")
    return res


def c9(ctx: _Ctx, runs: dict | None = None) -> CriterionResult:
    res = CriterionResult(9, "spectral evolution with one anchored time constant")
    runs = {} if runs is None else runs
    p2 = _gauss2()
    # anchor: translation flow
    run = evolve(p2, derive_flow(2, 1), 1.0, snapshots=[0.0, 0.5, 1.0])
    x = p2.x
    shift = np.max(np.abs(run.snapshots[-1].samples[0] - 0.3 * np.exp(-(x + 1.0) ** 2 / (2 * 0.49))))
    ctx.below(res, "(2,1) translation sup-error at T=1", shift, "c9.translation")
    r, w = quadrature_radii(8.0, 32)
    run.attach_records(r, weights=w, r0=1e-4)
    c = measure_time_constant(run)
    law = spectral_evolution_check(run, c)
    ctx.below(res, "(2,1) anchor phase law", law["max_rel"], "c9.anchor", note=f"c = {c!r}")
    runs["anchor"] = (run, c)
    # (2,3): no refitting
    run = evolve(p2, derive_flow(2, 3), 0.1, snapshots=5)
    r, w = quadrature_radii(8.0, 24)
    run.attach_records(r, weights=w, r0=1e-4)
    runs["kdv"] = run
    mass = [np.sum(s.samples[0, :-1]) * p2.h for s in run.snapshots]
    ctx.below(res, "(2,3) mass drift", float(np.max(np.abs(np.array(mass) - mass[0]))), "c9.mass")
    ctx.below(res, "(2,3) max |Im u_0|", max(float(np.max(np.abs(s.samples.imag))) for s in run.snapshots),
              "c9.reality")
    # (3,2): no refitting
    p3 = builtin("gaussian", n=3, amplitude=[0.1, 0.05], sigma=1.2)
    run3 = evolve(p3, derive_flow(3, 2), 0.1, snapshots=5)
    run3.attach_records(default_radii(count=16))
    runs["boussinesq"] = run3
    for tag, rr in (("(2,3)", run), ("(3,2)", run3)):
        law = spectral_evolution_check(rr, c)
        ctx.below(res, f"{tag} phase law", law["max_rel"], "c9.phase")
        ctx.below(res, f"{tag} diagonal drift", law["diagonal_drift"], "c9.diagonal")
        aa = action_angle_check(rr, c)
        ctx.below(res, f"{tag} action drift", aa["p_drift"], "c9.action")
        ctx.below(res, f"{tag} angle slope", aa["q_slope_rel"] if aa["q_checked"] else math.inf,
                  "c9.angle", note=f"{aa['q_checked']} radii")
    return res


def c10(ctx: _Ctx, runs: dict | None = None) -> CriterionResult:
    res = CriterionResult(10, "Hamiltonians and the generating function")
    runs = {} if runs is None else runs
    if "kdv" not in runs or "boussinesq" not in runs:
        c9(ctx, runs)
    d = hamiltonian_drift(runs["kdv"], [1, 3, 5])
    ctx.below(res, "(2,3) H_1, H_3, H_5 drift", d["max_drift"], "c10.drift")
    d = hamiltonian_drift(runs["boussinesq"], [1, 2, 4, 5])
    ctx.below(res, "(3,2) H_1, H_2, H_4, H_5 drift", d["max_drift"], "c10.drift")
    g = generating_function_check(_gauss2(), [-3j, 3j, 3 * np.exp(-1j * np.pi / 3)], seed=ctx.seed)
    ctx.below(res, f"partial fractions ({g['partial_fraction_samples']} samples incl. 3/7)",
              g["partial_fraction_max"], "c10.partial_fraction")
    ctx.below(res, "n=2 Plemelj vs direct Phi_1", g["plemelj_vs_direct_max"], "c10.plemelj")
    ctx.flag(res, "series tail monotone at 3 z-samples", g["all_monotone"])
    return res


def c11(ctx: _Ctx) -> CriterionResult:
    res = CriterionResult(11, "symbolic engine")
    for n, k in ((2, 1), (2, 3), (3, 1), (3, 2), (4, 3)):
        ctx.flag(res, f"order drop ({n},{k})", order_drop_holds(n, k))
    for n in (2, 3, 4):
        ctx.flag(res, f"n={n} root recomposition residual zero", not recomposition_residual(n, 6).coeffs)
    try:
        derive_flow(2, 4)
        rejected = False
    except ValueError:
        rejected = True
    ctx.flag(res, "(2,4) rejected", rejected)
    return res


CRITERIA = {1: c1, 2: c2, 3: c3, 4: c4, 5: c5, 6: c6, 7: c7, 8: c8, 9: c9, 10: c10, 11: c11}


def run_criterion(number: int, tolerances: dict | None = None, seed: int = 0,
                  runs: dict | None = None) -> CriterionResult:
    ctx = _Ctx(tolerances, seed)
    t0 = time.perf_counter()
    fn = CRITERIA[number]
    res = fn(ctx, runs) if number in (9, 10) else fn(ctx)
    res.seconds = time.perf_counter() - t0
    return res


def run_all(numbers=None, tolerances: dict | None = None, seed: int = 0) -> list[CriterionResult]:
    runs: dict = {}
    return [run_criterion(k, tolerances, seed, runs) for k in (numbers or sorted(CRITERIA))]

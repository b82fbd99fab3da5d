"""Command-line front end: configuration, persistence and the verification suite.

Configuration files are plain ``key = value`` text, one setting per line,
``#`` starting a comment. Lists are whitespace separated; complex numbers are
written ``re,im``. Every file must declare ``schema_version = 1``. Recognised
keys (defaults in brackets)::

    schema_version = 1
    n = 2                          order of the operator
    potential = gaussian           builtin name: zero, gaussian, sech2, square_well
    potential.file = path.csv      sampled potential instead of a builtin
    potential.amplitude = 0.1      one value, or one per coefficient u_0 .. u_{n-2}
    potential.sigma / potential.center / potential.width
    grid.X = 20                    half-width of the line
    grid.h = 0.01                  grid step
    radii = geom 0.3 8 64          or: quadrature 8 64 (Gauss-Legendre in log r)
    rays = 0 1                     [the fundamental rays]
    canon.nu = 1 2                 [all blocks]
    gradcheck.entry = 0 1          0-based (j, k) of a_jk
    gradcheck.ray = 1 / gradcheck.radius = 1.0 / gradcheck.coeff = 0
    brackets.kind = kernel         or: canonical
    brackets.rays = 1 1            rays of the two test functions
    brackets.pairs = 0 1 1 0       flattened (j, k, l, m) for {a_jk, a_lm}
    flow.k = 3 / flow.T = 0.1 / flow.dt = auto / flow.snapshots = 5
    flow.c = 1.0                   time constant for the phase-law check
    flow.check = false             attach scattering records and check the laws
    hamiltonians.k = 1 3 5
    hamiltonians.z = 0,-3 0,3      generating-function samples (n = 2)
    verify.criteria = 1 2 3        [all]
    tol.<name> = value             override a verification tolerance
    threads = 1 / seed = 0

Outputs are deterministic for a given configuration and tool version; wall-clock
timings are written to a separate ``timing.json``.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import CANON_HEADER, DegenerateError, canonical, check_rotation
from .brackets import (SmearedFunctional, TestFunction, WaveCache, canonical_brackets,
                       gradient_fd_check, predicted_bracket, raw_bracket)
from .flows import (evolve, generating_function_check, hamiltonians, quadrature_radii,
                    action_angle_check, spectral_evolution_check)
from .potential import DecayError, Potential, builtin
from .sectors import RayPoint, RootSystem
from .suite import CRITERIA, DEFAULT_TOLERANCES, run_criterion
from .symbols import derive_flow
from .waves import THREADS_ENV, compute_record, default_radii, square_well_oracle

__all__ = ["RunConfig", "ConfigError", "main", "SCHEMA_VERSION"]

SCHEMA_VERSION = 1

_KEYS = {
    "schema_version", "n", "potential", "potential.file", "potential.amplitude",
    "potential.sigma", "potential.center", "potential.width", "grid.X", "grid.h", "radii",
    "rays", "canon.nu", "gradcheck.entry", "gradcheck.ray", "gradcheck.radius",
    "gradcheck.coeff", "brackets.kind", "brackets.rays", "brackets.pairs", "flow.k", "flow.T",
    "flow.dt", "flow.snapshots", "flow.c", "flow.check", "hamiltonians.k", "hamiltonians.z",
    "verify.criteria", "threads", "seed",
}


class ConfigError(ValueError):
    """Invalid configuration; reported as a usage error."""


# --- configuration ------------------------------------------------------------------------


def _complex(tok: str) -> complex:
    parts = tok.split(",")
    if len(parts) != 2:
        raise ConfigError(f"complex values are written re,im; got {tok!r}")
    return complex(float(parts[0]), float(parts[1]))


@dataclass
class RunConfig:
    values: dict[str, str] = field(default_factory=dict)
    base: Path = Path(".")

    @classmethod
    def parse(cls, text: str, base: Path | str = ".") -> "RunConfig":
        values = {}
        for num, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {num}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in _KEYS and not key.startswith("tol."):
                raise ConfigError(f"line {num}: unknown key {key!r}")
            if key in values:
                raise ConfigError(f"line {num}: duplicate key {key!r}")
            values[key] = val
        cfg = cls(values, Path(base))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        return cls.parse(path.read_text(), path.parent)

    def validate(self) -> None:
        if self.values.get("schema_version") != str(SCHEMA_VERSION):
            raise ConfigError(f"schema_version = {SCHEMA_VERSION} is required")
        for key in self.values:
            if key.startswith("tol."):
                name = key[4:]
                if name not in DEFAULT_TOLERANCES:
                    raise ConfigError(f"unknown tolerance {name!r}")
                if not self.float(key) > 0:
                    raise ConfigError(f"tolerance {name!r} must be positive")
        if "potential.file" in self.values and not self.path("potential.file").is_file():
            raise ConfigError(f"potential file not found: {self.path('potential.file')}")
        if self.int("n", 2) < 2:
            raise ConfigError("n must be at least 2")

    # typed accessors
    def get(self, key, default=None):
        return self.values.get(key, default)

    def float(self, key, default=None):
        v = self.values.get(key)
        try:
            return default if v is None else float(v)
        except ValueError:
            raise ConfigError(f"{key} must be a number") from None

    def int(self, key, default=None):
        v = self.values.get(key)
        try:
            return default if v is None else int(v)
        except ValueError:
            raise ConfigError(f"{key} must be an integer") from None

    def floats(self, key, default=None):
        v = self.values.get(key)
        return default if v is None else [float(t) for t in v.split()]

    def ints(self, key, default=None):
        v = self.values.get(key)
        return default if v is None else [int(t) for t in v.split()]

    def complexes(self, key, default=None):
        v = self.values.get(key)
        return default if v is None else [_complex(t) for t in v.split()]

    def bool(self, key, default=False):
        v = self.values.get(key)
        if v is None:
            return default
        if v.lower() not in ("true", "false"):
            raise ConfigError(f"{key} must be true or false")
        return v.lower() == "true"

    def path(self, key) -> Path:
        p = Path(self.values[key])
        return p if p.is_absolute() else self.base / p

    def tolerances(self) -> dict:
        return {k[4:]: self.float(k) for k in self.values if k.startswith("tol.")}

    def hash(self) -> str:
        text = "\n".join(f"{k}={self.values[k]}" for k in sorted(self.values))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


# --- helpers ------------------------------------------------------------------------------


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (complex, np.complexfloating)):
        return [_jsonable(float(v.real)), _jsonable(float(v.imag))]
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    return v


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")


def _check(name, value, tol, note=""):
    value = float(value)
    return {"name": name, "value": value, "tol": tol,
            "passed": bool(math.isfinite(value) and value < tol), "note": note}


def _potential(cfg: RunConfig) -> Potential:
    n = cfg.int("n", 2)
    if "potential.file" in cfg.values:
        p = Potential.from_csv(cfg.path("potential.file"))
        if p.n != n:
            raise ConfigError(f"potential file has n = {p.n}, config has n = {n}")
        p.check_decay()
        return p
    params = {"X": cfg.float("grid.X", 20.0), "h": cfg.float("grid.h", 0.01)}
    amp = cfg.floats("potential.amplitude")
    if amp is not None:
        params["amplitude"] = amp[0] if len(amp) == 1 else amp
    for key in ("sigma", "center", "width"):
        if f"potential.{key}" in cfg.values:
            params[key] = cfg.float(f"potential.{key}")
    return builtin(cfg.get("potential", "gaussian"), n=n, **params)


def _radii(cfg: RunConfig):
    """Radii and optional quadrature weights."""
    spec = cfg.get("radii", "geom 0.3 8 64").split()
    if spec[0] == "geom" and len(spec) == 4:
        return default_radii(float(spec[1]), float(spec[2]), int(spec[3])), None
    if spec[0] == "quadrature" and len(spec) == 3:
        return quadrature_radii(float(spec[1]), int(spec[2]))
    raise ConfigError("radii must be 'geom r_min r_max count' or 'quadrature R M'")


def _record(cfg: RunConfig, p: Potential, threads):
    radii, weights = _radii(cfg)
    rays = cfg.ints("rays")
    rec = compute_record(p, radii, rays, threads=threads)
    if weights is not None:
        from .flows import set_quadrature
        set_quadrature(rec, weights, 1e-4)
    return rec


class _Manifest:
    def __init__(self, command: str, cfg: RunConfig, out: Path):
        self.command, self.cfg, self.out = command, cfg, out
        self.checks: list[dict] = []
        self.inputs: dict[str, str] = {}
        self.outputs: list[str] = []
        self.results: dict = {}
        self.t0 = time.perf_counter()

    def add(self, check: dict):
        self.checks.append(check)

    def output(self, path: Path):
        self.outputs.append(path.name)

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def write(self) -> Path:
        data = {"tool": "gdflows", "version": __version__, "command": self.command,
                "config_hash": self.cfg.hash(), "config": self.cfg.values,
                "input_hashes": self.inputs, "checks": self.checks,
                "failures": sum(not c["passed"] for c in self.checks),
                "passed": self.passed, "results": self.results, "outputs": sorted(self.outputs)}
        path = self.out / "manifest.json"
        _write_json(path, data)
        _write_json(self.out / "timing.json",
                    {"command": self.command, "seconds": time.perf_counter() - self.t0})
        return path


# --- commands -----------------------------------------------------------------------------


def cmd_scatter(cfg: RunConfig, out: Path, threads, seed) -> int:
    m = _Manifest("scatter", cfg, out)
    p = _potential(cfg)
    m.inputs["potential"] = p.hash()
    rec = _record(cfg, p, threads)
    for path in rec.save(out / "record"):
        m.output(path)
    tol = DEFAULT_TOLERANCES | cfg.tolerances()
    meta = rec.meta
    m.add(_check("x-independence", meta["max_x_dependence"], tol["c3.x_independence"]))
    m.add(_check("det a - 1", meta["max_det_error"], tol["c3.det"]))
    m.add(_check("block leakage", meta["max_leakage"], tol["c3.leakage"]))
    if p.is_zero:
        m.add(_check("max |a - I|", np.max(np.abs(rec.a - np.eye(p.n))), tol["c1.zero_identity"]))
    if p.name == "square_well" and p.n == 2:
        A, w = p.params["amplitude"], p.params["width"]
        err = max(float(np.max(np.abs(a - square_well_oracle(A, w, pt))
                               / np.abs(square_well_oracle(A, w, pt))))
                  for pt, a in zip(rec.points(), rec.a))
        m.add(_check("square-well oracle rel. error", err, tol["c2.oracle"]))
    if p.n >= 3:
        pts = [RayPoint(p.n, j, float(r)) for j in RootSystem(p.n).fundamental_rays()
               for r in (0.3, 1.0, 3.0)]
        m.add(_check("rotation residual", check_rotation(p, pts)["max_deviation"],
                     tol["c3.rotation"]))
    m.results["record"] = rec.manifest()
    m.write()
    return 0


def cmd_canon(cfg: RunConfig, out: Path, threads, seed) -> int:
    m = _Manifest("canon", cfg, out)
    p = _potential(cfg)
    m.inputs["potential"] = p.hash()
    rec = _record(cfg, p, threads)
    lines = [CANON_HEADER]
    for nu in cfg.ints("canon.nu", list(range(1, p.n))):
        try:
            cv = canonical(rec, nu)
        except DegenerateError as exc:
            raise DegenerateError(f"block {nu}: {exc}") from None
        lines += cv.to_csv_rows()
        m.results[f"nu={nu}"] = {"ray": cv.ray, "max_jump": cv.max_jump,
                                 "q_valid": int(np.sum(cv.q_valid))}
    path = out / "canonical.csv"
    path.write_text("\n".join(lines) + "\n")
    m.output(path)
    m.write()
    return 0


def cmd_gradcheck(cfg: RunConfig, out: Path, threads, seed) -> int:
    m = _Manifest("gradcheck", cfg, out)
    p = _potential(cfg)
    m.inputs["potential"] = p.hash()
    entry = tuple(cfg.ints("gradcheck.entry", [0, 1]))
    ray = cfg.int("gradcheck.ray", RootSystem(p.n).fundamental_rays()[-1])
    pt = RayPoint(p.n, ray, cfg.float("gradcheck.radius", 1.0))
    r = gradient_fd_check(p, entry, pt, coeff=cfg.int("gradcheck.coeff", 0))
    tol = DEFAULT_TOLERANCES | cfg.tolerances()
    m.add(_check("|order - 2|", abs(r["order"] - 2.0), tol["c4.order_dev"]))
    m.add(_check("final rel. error", r["final_rel_error"], tol["c4.final"]))
    m.results["gradcheck"] = r
    m.write()
    return 0


def cmd_brackets(cfg: RunConfig, out: Path, threads, seed) -> int:
    m = _Manifest("brackets", cfg, out)
    p = _potential(cfg)
    m.inputs["potential"] = p.hash()
    n = p.n
    tol = DEFAULT_TOLERANCES | cfg.tolerances()
    kind = cfg.get("brackets.kind", "kernel")
    fund = RootSystem(n).fundamental_rays()
    rf, rg = cfg.ints("brackets.rays", [fund[-1], fund[-1]])
    f = TestFunction(n, rf, 1.2, 0.3, 0.2, 2.4, nodes=40)
    g = TestFunction(n, rg, 1.5, 0.3, 0.2, 2.4, nodes=40)
    if kind == "kernel":
        flat = cfg.ints("brackets.pairs", [0, 1, 1, 0])
        if len(flat) % 4:
            raise ConfigError("brackets.pairs needs groups of four indices")
        cache = WaveCache(p)
        rows = []
        for i in range(0, len(flat), 4):
            e1, e2 = tuple(flat[i:i + 2]), tuple(flat[i + 2:i + 4])
            F, G = SmearedFunctional(f, e1), SmearedFunctional(g, e2)
            raw = raw_bracket(F, G, p, cache=cache)
            pred = predicted_bracket(F, G, p, cache=cache)["value"]
            rel = abs(raw["value"] - pred) / abs(pred) if pred != 0 else abs(raw["value"])
            rows.append({"pair": [e1, e2], "raw": raw["value"], "predicted": pred,
                         "trace": raw["trace"], "relative_error": rel})
            m.add(_check(f"{{a{e1}, a{e2}}} raw vs kernel", rel, tol["c6.kernel"]))
        m.results["brackets"] = rows
    elif kind == "canonical":
        from .analysis import block_indices
        tests = {nu: (TestFunction(n, block_indices(n, nu)[0], 1.2, 0.3, 0.2, 2.4, nodes=40),
                      TestFunction(n, block_indices(n, nu)[0], 1.5, 0.3, 0.2, 2.4, nodes=40))
                 for nu in range(1, n)}
        res = canonical_brackets(p, tests)
        pair = max(abs(v) for v in res["pairing"].values())
        for (nu, mu), v in res["pq"].items():
            if nu == mu:
                ref = res["pairing"][nu]
                m.add(_check(f"{{p{nu}, q{mu}}} vs pairing", abs(v - ref) / abs(ref),
                             tol["c7.pairing"]))
            else:
                m.add(_check(f"{{p{nu}, q{mu}}} / pairing", abs(v) / pair, tol["c7.floor"]))
        for key in ("pp", "qq"):
            for (nu, mu), v in res[key].items():
                m.add(_check(f"{{{key[0]}{nu}, {key[1]}{mu}}} / pairing", abs(v) / pair,
                             tol["c7.floor"]))
        m.results["canonical"] = res
    else:
        raise ConfigError("brackets.kind must be 'kernel' or 'canonical'")
    m.write()
    return 0


def cmd_derive_flow(cfg: RunConfig, out: Path | None, n: int, k: int) -> int:
    text = derive_flow(n, k).to_text().rstrip("\n")
    print(text)
    if out is not None:
        (out / f"flow_{n}_{k}.txt").write_text(text + "\n")
    return 0


_PLOT = """# gnuplot command file: snapshot profiles of Re u_{coeff}
set datafile separator ','
set xlabel 'x'
set ylabel 'Re u_{coeff}'
plot {series}
"""


def cmd_evolve(cfg: RunConfig, out: Path, threads, seed) -> int:
    m = _Manifest("evolve", cfg, out)
    p = _potential(cfg)
    m.inputs["potential"] = p.hash()
    flow = derive_flow(p.n, cfg.int("flow.k", 3 if p.n == 2 else 2))
    dt = cfg.get("flow.dt", "auto")
    run = evolve(p, flow, cfg.float("flow.T", 0.1),
                 dt=None if dt == "auto" else float(dt),
                 snapshots=cfg.int("flow.snapshots", 5))
    names = []
    for i, (t, snap) in enumerate(zip(run.times, run.snapshots)):
        path = out / f"snapshot_{i:03d}.csv"
        snap.to_csv(path)
        m.output(path)
        names.append((path.name, float(t)))
    for j in range(p.n - 1):
        series = ", ".join(f"'{nm}' skip 2 using 1:{2 + 2 * j} with lines title 't = {t:g}'"
                           for nm, t in names)
        path = out / f"plot_u{j}.gp"
        path.write_text(_PLOT.format(coeff=j, series=series))
        m.output(path)
    if cfg.bool("flow.check"):
        tol = DEFAULT_TOLERANCES | cfg.tolerances()
        radii, weights = _radii(cfg)
        run.attach_records(radii, weights=weights, r0=1e-4 if weights is not None else None,
                           threads=threads)
        c = cfg.float("flow.c", 1.0)
        law = spectral_evolution_check(run, c)
        m.add(_check("phase law", law["max_rel"], tol["c9.phase"]))
        m.add(_check("diagonal drift", law["diagonal_drift"], tol["c9.diagonal"]))
        aa = action_angle_check(run, c)
        m.add(_check("action drift", aa["p_drift"], tol["c9.action"]))
        if aa["q_checked"]:
            m.add(_check("angle slope", aa["q_slope_rel"], tol["c9.angle"],
                         note=f"{aa['q_checked']} radii"))
        m.results["phase_law"] = {k: v for k, v in law.items() if k != "entries"}
        m.results["action_angle"] = aa
    m.results["run"] = run.manifest()
    m.write()
    return 0


def cmd_hamiltonians(cfg: RunConfig, out: Path, threads, seed) -> int:
    m = _Manifest("hamiltonians", cfg, out)
    p = _potential(cfg)
    m.inputs["potential"] = p.hash()
    rec = _record(cfg, p, threads)
    ks = cfg.ints("hamiltonians.k", [1, 3, 5] if p.n == 2 else [1, 2, 4, 5])
    table = hamiltonians(rec, ks)
    lines = ["k,H_re,H_im,tail_bound"]
    for k in ks:
        v = table.values[k]
        lines.append(f"{k},{float(v.real)!r},{float(v.imag)!r},{float(table.tail_bounds[k])!r}")
    path = out / "hamiltonians.csv"
    path.write_text("\n".join(lines) + "\n")
    m.output(path)
    m.results["hamiltonians"] = table.manifest()
    zs = cfg.complexes("hamiltonians.z")
    if zs and p.n == 2 and not p.is_zero:
        tol = DEFAULT_TOLERANCES | cfg.tolerances()
        g = generating_function_check(p, zs, seed=seed)
        m.add(_check("partial fractions", g["partial_fraction_max"], tol["c10.partial_fraction"]))
        m.add(_check("Plemelj vs direct", g["plemelj_vs_direct_max"], tol["c10.plemelj"]))
        m.results["generating_function"] = g
    m.write()
    return 0


def cmd_verify(cfg: RunConfig, out: Path, threads, seed, criteria=None) -> int:
    m = _Manifest("verify", cfg, out)
    numbers = criteria or cfg.ints("verify.criteria", sorted(CRITERIA))
    bad = [k for k in numbers if k not in CRITERIA]
    if bad:
        raise ConfigError(f"unknown criteria {bad}")
    runs: dict = {}
    timing = {}
    for k in numbers:
        res = run_criterion(k, cfg.tolerances(), seed, runs)
        print(res.line(), flush=True)
        timing[k] = res.seconds
        for c in res.checks:
            m.add({"criterion": k, **c.to_dict()})
        m.results[f"criterion_{k}"] = {"title": res.title, "passed": res.passed}
    m.write()
    _write_json(out / "timing.json", {"command": "verify", "criteria_seconds": timing,
                                      "seconds": time.perf_counter() - m.t0})
    return 0 if m.passed else 1


_DEFAULT_CONFIG = f"schema_version = {SCHEMA_VERSION}\n"


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gdflows", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=f"gdflows {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("scatter", "canon", "gradcheck", "brackets", "derive-flow", "evolve",
                 "hamiltonians", "verify"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="key = value configuration file")
        sp.add_argument("--out", type=Path, help="output directory")
        sp.add_argument("--threads", type=int, help=f"worker threads (overrides {THREADS_ENV})")
        sp.add_argument("--seed", type=int, help="seed for randomized residual samples")
        if name == "derive-flow":
            sp.add_argument("--n", type=int, help="operator order")
            sp.add_argument("--k", type=int, help="flow index, k/n not an integer")
        if name == "verify":
            sp.add_argument("--criteria", type=int, nargs="+", help="criterion numbers to run")
    return ap


_COMMANDS = {"scatter": cmd_scatter, "canon": cmd_canon, "gradcheck": cmd_gradcheck,
             "brackets": cmd_brackets, "evolve": cmd_evolve, "hamiltonians": cmd_hamiltonians}


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        cfg = RunConfig.load(args.config) if args.config else RunConfig.parse(_DEFAULT_CONFIG)
        threads = args.threads if args.threads is not None else cfg.int("threads")
        if threads is not None:
            os.environ[THREADS_ENV] = str(threads)
        seed = args.seed if args.seed is not None else cfg.int("seed", 0)
        if args.command == "derive-flow":
            n = args.n if args.n is not None else cfg.int("n")
            k = args.k if args.k is not None else cfg.int("flow.k")
            if n is None or k is None:
                raise ConfigError("derive-flow needs n and k (flags or config)")
            if args.out is not None:
                args.out.mkdir(parents=True, exist_ok=True)
            return cmd_derive_flow(cfg, args.out, n, k)
        out = args.out or Path(f"gdflows-{args.command}")
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "verify":
            return cmd_verify(cfg, out, threads, seed, args.criteria)
        return _COMMANDS[args.command](cfg, out, threads, seed)
    except ConfigError as exc:
        ap.error(str(exc))
    except (ValueError, OverflowError, DecayError) as exc:
        print(f"gdflows {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

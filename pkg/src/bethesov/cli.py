"""Experiment runner.

Reads a flat key=value config (INI syntax, or JSON), draws any "generic"
parameters, tracks every kappa=0 seed to the target coupling in a process
pool, verifies the resulting Bethe vectors and writes

    <out>.jsonl          one record per tracked path
    <out>.summary.csv    per-ell counts and worst metrics
    <out>.meta.json      resolved spec, draws, checks, timings

Exit codes: 0 all checks pass, 1 bad config, 2 verification failure,
3 too many path failures.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .numkernel import NumericalError, ToleranceProfile
from .repr_core import ModelSpec, SpecError, Variant, build_space, monodromy, sing_dims, weight_dims
from .bethe_solve import (BetheSolution, PathStatus, SeedIndex, TrackOptions, eigenvalue_tau,
                          exceptional_kappas, orbit_dedup, orbit_distance, seeds_kappa0, track_path)
from .bethe_vec import (basis_rank, bethe_vector_product, dual_pairing, eigen_residual,
                        norm_determinant, singular_basis)
from . import baxter_sov as bx

EXPERIMENTS = ("bethe", "basis", "ortho", "baxter", "qbaxter", "sovcheck", "sweep")
RETRY_DETOURS = (0.3, -0.3, 0.7)
GENERIC_MARGIN = 0.05

RECORD_FIELDS = ("experiment", "ell", "seed_nu", "t", "residual", "admissible", "offdiagonal",
                 "string_detected", "orbit_id", "path_status", "tau_coeffs", "eigen_residual",
                 "norm_lhs", "norm_rhs", "det_rel_err", "offorbit_pairing_max", "w_norm", "deg_Q")
SUMMARY_FIELDS = ("ell", "expected_dim", "found_orbits", "max_residual", "max_eigen_residual",
                  "max_det_rel_err", "basis_rank", "basis_condition")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str = "bethe"
    variant: str = "additive"
    two_lambda: tuple = (1,)
    z: tuple | None = None              # None: draw well-separated values
    kappa: object = "generic"           # number | "generic" | "one"
    theta: object = "generic"           # multiplicative coupling
    q: object = "generic"
    ell: object = "all"                 # "all" or a list of ints
    truncation: int | None = None
    seed: int = 0
    workers: int = 1
    out: str = "run"
    include_out_of_range: bool = False
    max_path_failure_fraction: float = 0.25
    residual_tol: float = 1e-10
    dedup_tol: float = 1e-7
    rank_tol: float = 1e-8
    margin_tol: float = 1e-6

    def tolerances(self) -> ToleranceProfile:
        return ToleranceProfile(self.residual_tol, self.dedup_tol, self.rank_tol, self.margin_tol)


# -- config parsing --------------------------------------------------------------

def _parse_complex(x) -> complex:
    if isinstance(x, (list, tuple)) and len(x) == 2:
        return complex(float(x[0]), float(x[1]))
    if isinstance(x, (int, float, complex)):
        return complex(x)
    return complex(str(x).strip().replace(" ", "").replace("i", "j"))


def _split(x) -> list:
    if isinstance(x, (list, tuple)):
        return list(x)
    return [s for s in str(x).replace(";", ",").split(",") if s.strip()]


def _coupling_value(x):
    if isinstance(x, str) and x.strip().lower() in ("generic", "one"):
        return x.strip().lower()
    return _parse_complex(x)


def _number(x):
    v = float(x)
    return int(v) if v.is_integer() else v


_ALIASES = {"d": "two_lambda", "weights": "two_lambda", "output": "out", "ell_list": "ell",
            "kappa_policy": "kappa", "rng_seed": "seed"}


def config_from_mapping(raw: dict) -> ExperimentConfig:
    cfg = ExperimentConfig()
    known = set(ExperimentConfig.__dataclass_fields__)
    for key, val in raw.items():
        key = _ALIASES.get(key.strip().lower(), key.strip().lower())
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        if val is None:
            continue
        try:
            if key == "two_lambda":
                val = tuple(_number(v) for v in _split(val))
            elif key == "z":
                val = tuple(_parse_complex(v) for v in _split(val))
            elif key in ("kappa", "theta"):
                val = _coupling_value(val)
            elif key == "q":
                val = "generic" if str(val).strip().lower() == "generic" else _parse_complex(val)
            elif key == "ell":
                if str(val).strip().lower() == "all":
                    val = "all"
                else:
                    val = [int(v) for v in _split(val)] if not isinstance(val, int) else [val]
            elif key in ("seed", "workers", "truncation"):
                val = int(val)
            elif key == "include_out_of_range":
                val = val if isinstance(val, bool) else str(val).strip().lower() in ("1", "true", "yes", "on")
            elif key in ("experiment", "variant", "out"):
                val = str(val).strip()
            else:
                val = float(val)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key}: {val!r} ({exc})") from None
        setattr(cfg, key, val)
    validate_config(cfg)
    return cfg


def validate_config(cfg: ExperimentConfig):
    if cfg.experiment not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {EXPERIMENTS}")
    if cfg.variant not in ("additive", "multiplicative"):
        raise ConfigError("variant must be additive or multiplicative")
    if cfg.experiment == "qbaxter" and cfg.variant != "multiplicative":
        raise ConfigError("qbaxter needs the multiplicative variant")
    if cfg.experiment == "baxter" and cfg.variant != "additive":
        raise ConfigError("baxter needs the additive variant")
    if not cfg.two_lambda:
        raise ConfigError("two_lambda must be nonempty")
    if cfg.z is not None and len(cfg.z) != len(cfg.two_lambda):
        raise ConfigError("z and two_lambda lengths differ")
    if cfg.workers < 1:
        raise ConfigError("workers must be positive")
    if not 0 <= cfg.max_path_failure_fraction <= 1:
        raise ConfigError("max_path_failure_fraction must lie in [0, 1]")
    try:
        cfg.tolerances()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def read_config_file(path) -> dict:
    text = Path(path).read_text()
    if str(path).endswith(".json"):
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        return raw
    parser = configparser.ConfigParser(interpolation=None)
    try:
        if not text.lstrip().startswith("["):
            text = "[experiment]\n" + text
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    raw = {}
    for sec in parser.sections():
        raw.update(parser[sec])
    return raw


# -- spec generation -------------------------------------------------------------

def _mult_exceptional(spec: ModelSpec, kappa: complex, ell: int) -> float:
    pts = exceptional_kappas(spec, ell)
    return min((abs(kappa - p) for p in pts), default=np.inf)


def generate_spec(cfg: ExperimentConfig, rng=None) -> tuple[ModelSpec, dict]:
    """Resolve "generic" entries of the config into a concrete ModelSpec.

    z is redrawn (up to 100 times) until every pair of lattice points from
    different factors is at least 10 * margin_tol * scale apart.
    """
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    tol = cfg.tolerances()
    n = len(cfg.two_lambda)
    draws = {}
    mult = cfg.variant == "multiplicative"

    q = None
    if mult:
        q = complex(rng.uniform(1.1, 1.5)) if cfg.q == "generic" else complex(cfg.q)
        draws["q"] = q

    def make(z, kappa=1.0, theta=1.0):
        kw = dict(truncation=cfg.truncation, tol=tol, rng_seed=cfg.seed)
        if mult:
            return ModelSpec.multiplicative(cfg.two_lambda, z, q, theta=theta, kappa=kappa, **kw)
        return ModelSpec.additive(cfg.two_lambda, z, kappa=kappa, **kw)

    if cfg.z is not None:
        z = tuple(cfg.z)
    else:
        radius = 1.0 + n + 0.5 * sum(cfg.two_lambda)
        for _ in range(100):
            if mult:
                z = tuple(rng.uniform(0.5, 3.0, n) * np.exp(2j * np.pi * rng.uniform(size=n)))
            else:
                z = tuple(rng.uniform(-radius, radius, n) + 1j * rng.uniform(-radius, radius, n))
            trial = make(z)
            if trial.min_separation() >= 10 * tol.margin_tol * trial.scale:
                break
        else:
            raise SpecError("could not draw well-separated inhomogeneities in 100 tries")
        draws["z"] = z
    base = make(z)
    ell_top = base.ell_max

    def bad_kappa(k, ell_values):
        if abs(k - 1) < GENERIC_MARGIN:
            return True
        if mult:
            return any(_mult_exceptional(base, k, e) < GENERIC_MARGIN for e in ell_values)
        return False

    def draw_generic(transform):
        for _ in range(1000):
            val = rng.uniform(0.3, 3.0) * np.exp(2j * np.pi * rng.uniform())
            if not any(bad_kappa(transform(val, e), [e]) for e in range(ell_top + 1)):
                return complex(val)
        raise SpecError("could not draw a generic coupling")

    kappa = cfg.kappa
    if kappa == "one":
        kappa = 1.0 + 0j
    elif kappa == "generic":
        if mult:
            kappa = None        # resolved per ell from theta
        else:
            kappa = draw_generic(lambda k, e: k)
            draws["kappa"] = kappa
    theta = 1.0 + 0j
    if mult:
        if cfg.theta == "generic":
            theta = draw_generic(lambda th, e: q ** (2 * e) * th)
            draws["theta"] = theta
        elif cfg.theta == "one":
            theta = 1.0 + 0j
        else:
            theta = complex(cfg.theta)
    spec = make(z, kappa=1.0 if kappa is None else kappa, theta=theta)
    draws["kappa_per_ell"] = kappa is None
    return spec, draws


def kappa_for(spec: ModelSpec, ell: int, per_ell: bool) -> complex:
    """Bethe coupling used in weight space ell."""
    if per_ell:
        return complex(spec.q ** (2 * ell) * spec.theta)
    return complex(spec.kappa)


# -- worker tasks ----------------------------------------------------------------

def _good(sol: BetheSolution) -> bool:
    return (sol.path_status is PathStatus.CONVERGED and sol.admissible and sol.offdiagonal
            and sol.jacobian_condition < 1e8)


def _track_task(args):
    spec, ell, kappa, nu, in_range, detour = args
    from .bethe_solve import seed_point
    seed = (SeedIndex(tuple(nu), in_range), seed_point(spec, nu))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return track_path(spec, seed, kappa, TrackOptions(detour=detour))


def _verify_task(args):
    """Metrics for the solutions of one weight space."""
    spec, ell, kappa, sols, orbit_ids, seed, sing_sector = args
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        space = build_space(spec)
        bundle = monodromy(spec, space)
    reps = {}
    for sol, oid in zip(sols, orbit_ids):
        if oid is not None and oid not in reps:
            reps[oid] = sol.t
    diag = {}
    for oid, t in reps.items():
        diag[oid] = dual_pairing(bundle, t, t)
    dmax = max((abs(v) for v in diag.values()), default=0.0)
    out = []
    for k, (sol, oid) in enumerate(zip(sols, orbit_ids)):
        m = {}
        finite = np.all(np.isfinite(sol.t))
        if sol.path_status is PathStatus.CONVERGED and finite:
            m["w_norm"] = bethe_vector_product(bundle, sol.t).norm()
        if oid is not None:
            tau = eigenvalue_tau(spec, sol.t, kappa)
            rng = np.random.default_rng([seed, ell, k])
            m["tau_coeffs"] = tau.coeffs
            m["eigen_residual"] = eigen_residual(bundle, sol.t, tau, 2 * spec.n + 2, kappa, rng)
            lhs = dual_pairing(bundle, sol.t, sol.t)
            rhs = norm_determinant(spec, sol.t, kappa)
            m["norm_lhs"], m["norm_rhs"] = lhs, rhs
            m["det_rel_err"] = abs(lhs - rhs) / abs(rhs) if rhs != 0 else np.inf
            others = [abs(dual_pairing(bundle, sol.t, t2)) for o2, t2 in reps.items() if o2 != oid]
            m["offorbit_pairing_max"] = max(others) / dmax if others and dmax > 0 else 0.0
            m["deg_Q"] = ell
        out.append(m)
    vecs = [bethe_vector_product(bundle, t) for t in reps.values()]
    restrict = singular_basis(space, ell) if sing_sector else None
    rank, cond = basis_rank(vecs, ell, spec.tol, restrict)
    return out, rank, cond


def _map(fn, tasks, workers):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=1))


# -- solving -----------------------------------------------------------------------

def solve_sectors(spec: ModelSpec, ells, expected: dict, per_ell: bool, workers: int,
                  include_out_of_range: bool = False) -> dict:
    """Track every seed of every requested ell; retry short sectors with bent paths."""
    tasks = []
    for ell in ells:
        kappa = kappa_for(spec, ell, per_ell)
        for idx, _ in seeds_kappa0(spec, ell):
            if idx.in_Zlo or include_out_of_range:
                tasks.append((spec, ell, kappa, idx.nu, idx.in_Zlo, 0.0))
    sols = _map(_track_task, tasks, workers)
    radius = spec.tol.dedup_tol * spec.scale

    def duplicates_and_failures():
        redo = []
        for ell in ells:
            idx = [i for i, tk in enumerate(tasks) if tk[1] == ell and tk[4]]
            found = []
            bad = []
            for i in idx:
                if _good(sols[i]) and all(orbit_distance(sols[i].t, t) >= radius for t in found):
                    found.append(sols[i].t)
                else:
                    bad.append(i)
            if len(found) < expected.get(ell, 0):
                redo += bad
        return redo

    for gamma in RETRY_DETOURS:
        redo = duplicates_and_failures()
        if not redo:
            break
        retry = [tasks[i][:5] + (gamma,) for i in redo]
        new = _map(_track_task, retry, workers)
        for i, sol in zip(redo, new):
            ell = tasks[i][1]
            others = [sols[j].t for j, tk in enumerate(tasks) if tk[1] == ell and j != i and _good(sols[j])]
            if _good(sol) and all(orbit_distance(sol.t, t) >= radius for t in others):
                sols[i] = sol
    by_ell = {ell: [] for ell in ells}
    for tk, sol in zip(tasks, sols):
        by_ell[tk[1]].append(sol)
    return by_ell


def assign_orbits(sols, radius: float, ell: int) -> list:
    good = [s for s in sols if _good(s)]
    orbits = orbit_dedup(good, radius)
    ids = []
    for s in sols:
        oid = None
        if _good(s):
            for k, orb in enumerate(orbits):
                if any(m is s for m in orb.members):
                    oid = f"{ell}-{k}"
                    break
        ids.append(oid)
    return ids


# -- serialization -------------------------------------------------------------------

def _num(x):
    if x is None:
        return None
    if isinstance(x, (complex, np.complexfloating)):
        return [_num(float(x.real)), _num(float(x.imag))]
    x = float(x)
    return x if np.isfinite(x) else None


def _pairs(arr):
    if arr is None:
        return None
    return [[_num(float(v.real)), _num(float(v.imag))] for v in np.asarray(arr, complex)]


def make_record(experiment, sol: BetheSolution, oid, m: dict) -> dict:
    rec = {
        "experiment": experiment,
        "ell": sol.ell,
        "seed_nu": list(sol.seed_nu),
        "t": _pairs(sol.t),
        "residual": _num(sol.residual),
        "admissible": bool(sol.admissible),
        "offdiagonal": bool(sol.offdiagonal),
        "string_detected": sol.string_detected,
        "orbit_id": oid,
        "path_status": sol.path_status.value,
        "tau_coeffs": _pairs(m.get("tau_coeffs")),
        "eigen_residual": _num(m.get("eigen_residual")),
        "norm_lhs": _num(m.get("norm_lhs")),
        "norm_rhs": _num(m.get("norm_rhs")),
        "det_rel_err": _num(m.get("det_rel_err")),
        "offorbit_pairing_max": _num(m.get("offorbit_pairing_max")),
        "w_norm": _num(m.get("w_norm")),
        "deg_Q": m.get("deg_Q"),
    }
    return rec


def spec_dict(spec: ModelSpec) -> dict:
    return {
        "variant": spec.variant.value,
        "lam": [_num(x) for x in spec.lam],
        "z": [_num(x) for x in spec.z],
        "kappa": _num(spec.kappa),
        "theta": _num(spec.theta),
        "q": _num(spec.q),
        "dims": list(spec.dims),
        "truncation": spec.truncation,
        "tol": asdict(spec.tol),
        "rng_seed": spec.rng_seed,
    }


def _version() -> str:
    try:
        from importlib.metadata import version
        return version("artifact")
    except Exception:
        return "unknown"


# -- SoV cross-checks ----------------------------------------------------------------

def sov_checks(spec: ModelSpec, bethe_pairs: list, complete: bool, rng_seed: int) -> tuple[dict, list]:
    """Compare the separated-variable spectrum with Bethe-sourced (tau, Q) pairs."""
    lattice = bx.build_lattice(spec)
    pairs = bx.sov_spectrum(spec, lattice, rng=np.random.default_rng(rng_seed))
    distinct = bx.distinct_taus(pairs, 1e-6)
    info = {
        "sov_pairs": len(pairs),
        "sov_distinct": len(distinct),
        "lattice_disjoint": lattice.disjoint(),
        "max_factor_residual": max(p.meta["factor_residual"] for p in pairs),
        "min_profile_norm": min(float(np.linalg.norm(v)) for p in pairs for v in p.q_profile.values),
        "max_baxter_residual_bethe": max((bx.baxter_residual(spec, lattice, p) for p in bethe_pairs), default=0.0),
        "bethe_pairs": len(bethe_pairs),
        "degree_cap": bx.degree_cap(spec),
        "degree_violations": sum(p.meta["deg_Q"] > bx.degree_cap(spec) for p in bethe_pairs),
    }
    fails = []
    if info["max_factor_residual"] > 1e-6:
        fails.append("SoV eigenvector is not a product of string profiles")
    if info["min_profile_norm"] <= spec.tol.margin_tol:
        fails.append("SoV profile vanishes on a string")
    if info["max_baxter_residual_bethe"] > 1e-8:
        fails.append("Bethe pair violates the difference equation")
    if info["degree_violations"]:
        fails.append("deg Q exceeds its cap")
    if complete:
        _, worst = bx.match_pairs(distinct, bethe_pairs)
        info["match_worst"] = _num(worst)
        if len(distinct) != len(bethe_pairs) or not worst < 1e-6:
            fails.append("SoV and Bethe spectra are not in bijection")
    else:
        worst = max((min(bx.tau_distance(b.tau, p.tau) for p in distinct) for b in bethe_pairs), default=0.0)
        info["match_worst"] = _num(worst)
        if worst > 1e-6:
            fails.append("Bethe tau missing from the SoV spectrum")
    if spec.additive_variant and spec.kappa == 1:
        rep = bx.sl2_report(spec, lattice)
        info["sl2"] = {k: _num(v) for k, v in rep.items()}
        if max(rep["HE"], rep["HF"], rep["EF"]) > 1e-10 or rep["TC_X"] > 1e-8:
            fails.append("sl2 structure on the separated space is broken")
    return info, fails


# -- driver ----------------------------------------------------------------------------

def run(cfg: ExperimentConfig) -> tuple[int, list, list, dict]:
    """Execute one experiment; returns (exit code, records, summary rows, meta)."""
    t_start = time.perf_counter()
    spec, draws = generate_spec(cfg)
    per_ell = draws["kappa_per_ell"]
    ell_top = spec.ell_max
    if cfg.ell == "all":
        ells = list(range(ell_top + 1))
    else:
        ells = sorted(set(cfg.ell))
    if any(e < 0 or e > ell_top for e in ells):
        raise ConfigError(f"ell must lie in 0..{ell_top}")
    sing = spec.additive_variant and spec.kappa == 1 and not per_ell
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        space = build_space(spec)
    expected = sing_dims(space) if sing else weight_dims(spec)
    expected = {e: expected.get(e, 0) for e in ells}

    timings = {}
    t0 = time.perf_counter()
    by_ell = solve_sectors(spec, ells, expected, per_ell, cfg.workers, cfg.include_out_of_range)
    timings["tracking"] = time.perf_counter() - t0

    radius = spec.tol.dedup_tol * spec.scale
    ids = {ell: assign_orbits(by_ell[ell], radius, ell) for ell in ells}
    t0 = time.perf_counter()
    vtasks = [(spec, ell, kappa_for(spec, ell, per_ell), by_ell[ell], ids[ell], cfg.seed, sing) for ell in ells]
    vres = _map(_verify_task, vtasks, cfg.workers)
    timings["verification"] = time.perf_counter() - t0

    records, summary, fails = [], [], []
    path_fail = path_total = 0
    bethe_pairs = []
    for ell, (metrics, rank, cond) in zip(ells, vres):
        rows = sorted(zip(by_ell[ell], ids[ell], metrics), key=lambda r: r[0].seed_nu)
        found = len({oid for _, oid, _ in rows if oid is not None})
        for sol, oid, m in rows:
            records.append(make_record(cfg.experiment, sol, oid, m))
            in_range = all(k < d for k, d in zip(sol.seed_nu, spec.dims))
            if in_range:
                path_total += 1
                if sol.path_status is not PathStatus.CONVERGED:
                    # at kappa = 1 paths outside the singular sector must escape
                    if not (sing and sol.path_status is PathStatus.ESCAPED):
                        path_fail += 1
        good = [(s, m) for s, oid, m in rows if oid is not None]
        row = {
            "ell": ell,
            "expected_dim": expected[ell],
            "found_orbits": found,
            "max_residual": max((s.residual for s, _ in good), default=0.0),
            "max_eigen_residual": max((m["eigen_residual"] for _, m in good), default=0.0),
            "max_det_rel_err": max((m["det_rel_err"] for _, m in good), default=0.0),
            "basis_rank": rank,
            "basis_condition": cond,
        }
        summary.append(row)
        if found != expected[ell]:
            fails.append(f"ell={ell}: found {found} orbits, expected {expected[ell]}")
        if row["max_residual"] > 1e-9:
            fails.append(f"ell={ell}: Bethe residual {row['max_residual']:.2e}")
        if row["max_eigen_residual"] > 1e-8:
            fails.append(f"ell={ell}: eigenvector residual {row['max_eigen_residual']:.2e}")
        if cfg.experiment in ("basis", "sweep") and (rank != expected[ell] or cond > 1e6):
            fails.append(f"ell={ell}: basis rank {rank}/{expected[ell]}, condition {cond:.2e}")
        if cfg.experiment in ("ortho", "sweep"):
            if row["max_det_rel_err"] > 1e-6:
                fails.append(f"ell={ell}: norm formula error {row['max_det_rel_err']:.2e}")
            off = max((m["offorbit_pairing_max"] for _, m in good), default=0.0)
            if off > 1e-8:
                fails.append(f"ell={ell}: distinct orbits not orthogonal ({off:.2e})")
        if cfg.include_out_of_range:
            norms = [m["w_norm"] for _, m in good if "w_norm" in m]
            med = float(np.median(norms)) if norms else 1.0
            for s, oid, m in rows:
                if (s.path_status is PathStatus.CONVERGED and s.offdiagonal and not s.admissible):
                    if s.string_detected is None or m.get("w_norm", np.inf) >= 1e-6 * med:
                        fails.append(f"ell={ell}: unadmissible endpoint {s.seed_nu} is not a trivial string")
        if cfg.experiment in ("baxter", "qbaxter", "sovcheck") and spec.integral:
            for s, _ in good:
                if not per_ell and not spec.additive_variant:
                    continue
                bethe_pairs.append(bx.global_from_bethe(spec, s.t))

    checks = {}
    if cfg.experiment in ("baxter", "qbaxter", "sovcheck"):
        if not spec.integral:
            fails.append("separated-variable checks need integral weights")
        else:
            # deduplicate Bethe pairs by orbit before matching
            uniq = bx.distinct_taus(bethe_pairs, 1e-6)
            complete = len(ells) == ell_top + 1
            info, f2 = sov_checks(spec, uniq, complete, cfg.seed)
            checks["sov"] = info
            fails += f2

    frac = path_fail / path_total if path_total else 0.0
    if frac > cfg.max_path_failure_fraction:
        code = 3
    elif fails:
        code = 2
    else:
        code = 0
    timings["total"] = time.perf_counter() - t_start
    meta = {
        "tool": "bethesov",
        "version": _version(),
        "experiment": cfg.experiment,
        "spec": spec_dict(spec),
        "draws": {k: _num(v) if isinstance(v, complex) else
                  ([_num(x) for x in v] if isinstance(v, tuple) else v) for k, v in draws.items()},
        "ells": ells,
        "kappa_per_ell": {str(e): _num(kappa_for(spec, e, per_ell)) for e in ells},
        "path_failures": path_fail,
        "paths_in_range": path_total,
        "checks": checks,
        "failures": fails,
        "exit_code": code,
        "timings": timings,
        "workers": cfg.workers,
    }
    return code, records, summary, meta


def _json_default(x):
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (np.floating, np.complexfloating, complex)):
        return _num(x)
    raise TypeError(f"cannot serialize {type(x).__name__}")


def write_outputs(prefix: str, records, summary, meta):
    prefix = Path(prefix)
    if prefix.parent and not prefix.parent.exists():
        prefix.parent.mkdir(parents=True, exist_ok=True)
    with open(f"{prefix}.jsonl", "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, default=_json_default) + "\n")
    with open(f"{prefix}.summary.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_FIELDS)
        w.writeheader()
        for row in summary:
            w.writerow({k: repr(float(v)) if isinstance(v, float) else v for k, v in row.items()})
    with open(f"{prefix}.meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, default=_json_default)


# -- report comparison ---------------------------------------------------------------------

def load_records(path) -> list:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def _orbit_reps(records) -> dict:
    reps = {}
    for r in records:
        if r.get("orbit_id") is not None and r["orbit_id"] not in reps:
            reps[r["orbit_id"]] = r
    return reps


def _tvec(rec) -> np.ndarray:
    return np.array([complex(a, b) for a, b in rec["t"]], complex)


_METRICS = ("residual", "eigen_residual", "det_rel_err", "offorbit_pairing_max", "w_norm")


def compare_reports(a, b, tol: float = 1e-7) -> dict:
    """Orbit-level diff of two record lists (or .jsonl paths).

    Orbits are paired by orbit_id when their coordinates agree within tol,
    then by nearest coordinates within the same ell.  An empty diff has no
    unmatched orbits and no coordinate drift above tol.
    """
    ra = load_records(a) if isinstance(a, (str, Path)) else list(a)
    rb = load_records(b) if isinstance(b, (str, Path)) else list(b)
    A, B = _orbit_reps(ra), _orbit_reps(rb)
    matched, left = [], []
    free = dict(B)
    for oid, rec in A.items():
        other = free.get(oid)
        if other is not None and other["ell"] == rec["ell"] and orbit_distance(_tvec(rec), _tvec(other)) <= tol:
            matched.append((rec, other))
            del free[oid]
            continue
        best, bd = None, np.inf
        for oid2, cand in free.items():
            if cand["ell"] != rec["ell"]:
                continue
            d = orbit_distance(_tvec(rec), _tvec(cand))
            if d < bd:
                best, bd = oid2, d
        if best is not None and bd <= tol:
            matched.append((rec, free.pop(best)))
        else:
            left.append(oid)
    t_drift = max((orbit_distance(_tvec(x), _tvec(y)) for x, y in matched), default=0.0)
    drift = {}
    for key in _METRICS:
        vals = [abs(x[key] - y[key]) for x, y in matched if x.get(key) is not None and y.get(key) is not None]
        drift[key] = max(vals, default=0.0)
    diff = {
        "unmatched_a": left,
        "unmatched_b": sorted(free),
        "t_drift": t_drift,
        "metric_drift": drift,
    }
    diff["empty"] = not left and not free and t_drift <= tol
    return diff


# -- entry point ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bethesov", description="Bethe ansatz and separation-of-variables experiments")
    p.add_argument("--config", help="key = value file (INI syntax) or JSON object")
    p.add_argument("--experiment", choices=EXPERIMENTS)
    p.add_argument("--ell", help='"all" or comma-separated list')
    p.add_argument("--kappa", help='number, "generic" or "one"')
    p.add_argument("--theta", help='number or "generic" (multiplicative)')
    p.add_argument("--q", help='number or "generic" (multiplicative)')
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help="output path prefix")
    p.add_argument("--variant", choices=("additive", "multiplicative"))
    p.add_argument("--weights", help="comma-separated 2*Lambda_m (or d_m)")
    p.add_argument("--z", help="comma-separated inhomogeneities, e.g. 0.3+0.2j,3.1")
    p.add_argument("--include-out-of-range", action="store_true", default=None,
                   help="also track seeds that do not fit inside the modules")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        raw = read_config_file(args.config) if args.config else {}
        flags = {"experiment": args.experiment, "ell": args.ell, "kappa": args.kappa,
                 "theta": args.theta, "q": args.q, "seed": args.seed, "workers": args.workers,
                 "out": args.out, "variant": args.variant, "two_lambda": args.weights, "z": args.z,
                 "include_out_of_range": args.include_out_of_range}
        raw = {_ALIASES.get(k.lower(), k.lower()): v for k, v in raw.items()}
        raw.update({k: v for k, v in flags.items() if v is not None})
        cfg = config_from_mapping(raw)
        code, records, summary, meta = run(cfg)
    except (ConfigError, SpecError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    write_outputs(cfg.out, records, summary, meta)
    for row in summary:
        print(f"ell={row['ell']}: {row['found_orbits']}/{row['expected_dim']} orbits, "
              f"residual {row['max_residual']:.1e}, eigen {row['max_eigen_residual']:.1e}, "
              f"rank {row['basis_rank']} cond {row['basis_condition']:.1e}")
    for f in meta["failures"]:
        print("FAIL", f, file=sys.stderr)
    if code == 3:
        print(f"path failures {meta['path_failures']}/{meta['paths_in_range']} exceed the allowed fraction",
              file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())

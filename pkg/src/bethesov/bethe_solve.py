"""Bethe equations, kappa=0 seeds, homotopy continuation and classification.

For ``t = (t_1..t_l)`` the a-th equation is ``L_a(t) = kappa R_a(t)`` with

    additive:        L_a = prod_m (t_a - z_m + L_m) prod_{b!=a} (t_a - t_b - 1)
                     R_a = prod_m (t_a - z_m - L_m) prod_{b!=a} (t_a - t_b + 1)
    multiplicative:  L_a = prod_m (q^{2L_m} t_a - z_m) prod_{b!=a} (t_a - q^2 t_b)
                     R_a = prod_m (t_a - q^{2L_m} z_m) prod_{b!=a} (q^2 t_a - t_b)

Both sides are products of affine forms in ``t``, so residual and Jacobian
are assembled from one generic routine.  Solutions at kappa=0 are strings
starting at each ``z_m - L_m`` and are continued to the target kappa.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .numkernel import CPoly, NumericalError
from .repr_core import ModelSpec


class PathStatus(str, enum.Enum):
    CONVERGED = "Converged"
    ESCAPED = "Escaped"
    COLLIDED = "Collided"
    MAX_STEPS = "MaxSteps"


@dataclass(frozen=True)
class SeedIndex:
    nu: tuple
    in_Zlo: bool


@dataclass
class BetheSolution:
    t: np.ndarray
    kappa: complex
    ell: int
    seed_nu: tuple = ()
    path_status: PathStatus = PathStatus.CONVERGED
    residual: float = np.nan
    jacobian_condition: float = np.nan
    offdiagonal: bool = True
    admissible: bool = True
    string_detected: int | None = None      # 1-based factor index
    orbit_key: tuple = ()
    history: dict = field(default_factory=dict)


# -- affine-factor machinery ------------------------------------------------

def _side_factors(spec: ModelSpec, t: np.ndarray, a: int, kappa_side: bool):
    """Affine factors of L_a (or R_a): values, gradients and magnitude bounds."""
    ell = len(t)
    vals, grads, mags = [], [], []
    if spec.additive_variant:
        for zm, lm in zip(spec.z, spec.lam):
            c = -zm - lm if kappa_side else -zm + lm
            g = np.zeros(ell, complex)
            g[a] = 1
            vals.append(t[a] + c)
            grads.append(g)
            mags.append(abs(t[a]) + abs(c))
        sh = 1.0 if kappa_side else -1.0
        for b in range(ell):
            if b == a:
                continue
            g = np.zeros(ell, complex)
            g[a], g[b] = 1, -1
            vals.append(t[a] - t[b] + sh)
            grads.append(g)
            mags.append(abs(t[a]) + abs(t[b]) + 1)
    else:
        q2 = spec.q ** 2
        for zm, lm in zip(spec.z, spec.lam):
            p = spec.qpow(2 * lm)
            g = np.zeros(ell, complex)
            if kappa_side:
                g[a] = 1
                vals.append(t[a] - p * zm)
                mags.append(abs(t[a]) + abs(p * zm))
            else:
                g[a] = p
                vals.append(p * t[a] - zm)
                mags.append(abs(p * t[a]) + abs(zm))
            grads.append(g)
        for b in range(ell):
            if b == a:
                continue
            g = np.zeros(ell, complex)
            if kappa_side:
                g[a], g[b] = q2, -1
                vals.append(q2 * t[a] - t[b])
                mags.append(abs(q2 * t[a]) + abs(t[b]))
            else:
                g[a], g[b] = 1, -q2
                vals.append(t[a] - q2 * t[b])
                mags.append(abs(t[a]) + abs(q2 * t[b]))
            grads.append(g)
    return np.array(vals, complex), np.array(grads, complex).reshape(len(vals), ell), np.array(mags)


def _prod_and_grad(vals, grads):
    k = len(vals)
    if k == 0:
        return 1.0 + 0j, np.zeros(grads.shape[1], complex)
    pre = np.ones(k + 1, complex)
    suf = np.ones(k + 1, complex)
    for i in range(k):
        pre[i + 1] = pre[i] * vals[i]
        suf[k - 1 - i] = suf[k - i] * vals[k - 1 - i]
    others = pre[:k] * suf[1:]
    return pre[k], others @ grads


def _system(spec: ModelSpec, t, kappa):
    t = np.asarray(t, complex)
    ell = len(t)
    F = np.zeros(ell, complex)
    J = np.zeros((ell, ell), complex)
    dK = np.zeros(ell, complex)
    den = np.zeros(ell)
    for a in range(ell):
        lv, lg, lm = _side_factors(spec, t, a, False)
        rv, rg, rm = _side_factors(spec, t, a, True)
        L, Lg = _prod_and_grad(lv, lg)
        R, Rg = _prod_and_grad(rv, rg)
        F[a] = L - kappa * R
        J[a] = Lg - kappa * Rg
        dK[a] = -R
        den[a] = np.prod(lm) + abs(kappa) * np.prod(rm)
    return F, J, dK, den


def bae_residual(spec: ModelSpec, t, kappa: complex | None = None) -> np.ndarray:
    """Componentwise L_a - kappa R_a."""
    kappa = spec.kappa if kappa is None else kappa
    return _system(spec, t, kappa)[0]


def bae_jacobian(spec: ModelSpec, t, kappa: complex | None = None) -> np.ndarray:
    """J[a, c] = d(L_a - kappa R_a)/d t_c."""
    kappa = spec.kappa if kappa is None else kappa
    return _system(spec, t, kappa)[1]


def relative_residual(spec: ModelSpec, t, kappa: complex | None = None) -> float:
    """max_a |L_a - kappa R_a| / (|L_a|_bound + |kappa| |R_a|_bound)."""
    kappa = spec.kappa if kappa is None else kappa
    if len(t) == 0:
        return 0.0
    F, _, _, den = _system(spec, t, kappa)
    return float(np.max(np.abs(F) / den))


def jacobian_condition(spec: ModelSpec, t, kappa: complex | None = None) -> float:
    """Condition number of the row-equilibrated Jacobian."""
    kappa = spec.kappa if kappa is None else kappa
    if len(t) == 0:
        return 1.0
    _, J, _, den = _system(spec, t, kappa)
    return float(np.linalg.cond(J / den[:, None]))


# -- seeds ---------------------------------------------------------------------

def compositions(total: int, parts: int):
    """All nu in Z_{>=0}^parts with sum total, lexicographic."""
    for nu in itertools.product(range(total + 1), repeat=parts):
        if sum(nu) == total:
            yield nu


def seed_point(spec: ModelSpec, nu) -> np.ndarray:
    t = []
    for m, k in enumerate(nu):
        zm, lm = spec.z[m], spec.lam[m]
        for j in range(k):
            if spec.additive_variant:
                t.append(zm - lm + j)
            else:
                t.append(spec.qpow(2 * (j - lm)) * zm)
    return np.array(t, complex)


def seeds_kappa0(spec: ModelSpec, ell: int) -> list:
    """One seed per nu in Z_ell, flagged by whether nu fits inside the module."""
    out = []
    dims = spec.dims if spec.integral else (np.inf,) * spec.n
    for nu in compositions(ell, spec.n):
        idx = SeedIndex(tuple(nu), all(k <= d - 1 for k, d in zip(nu, dims)))
        out.append((idx, seed_point(spec, nu)))
    return out


# -- continuation --------------------------------------------------------------

@dataclass
class TrackOptions:
    kappa_start: float = 1e-3
    max_newton: int = 6
    step_init: float = 0.01
    step_max: float = 0.05
    step_min: float = 1e-8
    escape: float = 1e8
    max_steps: int = 20000
    detour: float = 0.0     # imaginary bend of the kappa path; 0 gives a straight segment


def _newton(spec, t, kappa, maxit, scale):
    """Newton iteration with a contraction test.  Returns (t, ok)."""
    prev = np.inf
    for it in range(maxit):
        F, J, _, den = _system(spec, t, kappa)
        if np.max(np.abs(F) / den) < 1e-14:
            return t, True
        try:
            dt = np.linalg.solve(J, F)
        except np.linalg.LinAlgError:
            return t, False
        if not np.all(np.isfinite(dt)):
            return t, False
        step = np.linalg.norm(dt)
        size = scale + np.linalg.norm(t)
        if it > 0 and step > 0.5 * prev and step > 1e-9 * size:
            return t, False
        t = t - dt
        prev = step
        if step <= 1e-12 * size:
            return t, True
    F, _, _, den = _system(spec, t, kappa)
    return t, bool(np.max(np.abs(F) / den) < 1e-11)


def exceptional_kappas(spec: ModelSpec, ell: int) -> list:
    """kappa values where solution paths may run off to infinity."""
    if spec.additive_variant:
        return [1.0 + 0j]
    lam = spec.total_lambda
    out = []
    for s in range(1, ell + 1):
        out.append(complex(spec.qpow(2 * (s - ell + lam))))
        out.append(complex(spec.qpow(2 * (ell - s - lam))))
    return out


def needs_detour(spec: ModelSpec, ell: int, kappa_target: complex, margin: float = 0.05) -> bool:
    """True if the straight segment [0, kappa_target] passes near an exceptional value."""
    kt = complex(kappa_target)
    if kt == 0:
        return False
    for p in exceptional_kappas(spec, ell):
        if abs(p - kt) < 1e-9 * max(1.0, abs(p)):
            continue
        x = (p / kt).real
        if 0 < x < 1 and abs(p - x * kt) < margin * max(1.0, abs(p)):
            return True
    return False


def _kappa_path(kt, detour):
    def kap(s):
        return kt * (s + 1j * detour * s * (1 - s))

    def dkap(s):
        return kt * (1 + 1j * detour * (1 - 2 * s))

    return kap, dkap


def track_path(spec: ModelSpec, seed, kappa_target: complex | None = None,
               opts: TrackOptions | None = None) -> BetheSolution:
    """Continue a kappa=0 solution to ``kappa_target``.

    ``seed`` is either ``(SeedIndex, t*)`` or a bare coordinate array.
    Failures are reported through ``path_status``; nothing is raised.
    """
    opts = opts or TrackOptions()
    kt = complex(spec.kappa if kappa_target is None else kappa_target)
    if isinstance(seed, tuple):
        sidx, t0 = seed
        nu = sidx.nu
    else:
        t0, nu = seed, ()
    t = np.array(t0, complex)
    ell = len(t)
    scale = spec.scale
    sol = BetheSolution(t=t, kappa=kt, ell=ell, seed_nu=tuple(nu))
    if ell == 0:
        return classify(spec, sol)
    detour = opts.detour
    if detour == 0 and needs_detour(spec, ell, kt):
        detour = 0.5
    hist = {"steps": 0, "rejected": 0, "detour": detour}
    kap, dkap = _kappa_path(kt, detour)
    status = PathStatus.CONVERGED

    if abs(kt) <= opts.kappa_start:
        s = 1.0
    else:
        s = opts.kappa_start / abs(kt)
    t, ok = _newton(spec, t, kap(s), 12, scale)
    if not ok:
        status = PathStatus.MAX_STEPS
    ds = opts.step_init
    good = 0
    while status is PathStatus.CONVERGED and s < 1.0:
        if hist["steps"] >= opts.max_steps:
            status = PathStatus.MAX_STEPS
            break
        h = min(ds, 1.0 - s)
        _, J, dK, _ = _system(spec, t, kap(s))
        try:
            tdot = -np.linalg.solve(J, dK * dkap(s))
        except np.linalg.LinAlgError:
            tdot = None
        accepted = False
        if tdot is not None and np.all(np.isfinite(tdot)):
            pred = t + h * tdot
            tn, ok = _newton(spec, pred, kap(s + h), opts.max_newton, scale)
            move = np.linalg.norm(pred - t)
            if ok and np.linalg.norm(tn - pred) <= 0.1 * move + 1e-9 * scale:
                accepted = True
        hist["steps"] += 1
        if accepted:
            t, s = tn, s + h
            good += 1
            if good >= 3:
                ds = min(2 * ds, opts.step_max)
                good = 0
            if np.max(np.abs(t)) > opts.escape * scale:
                status = PathStatus.ESCAPED
        else:
            hist["rejected"] += 1
            good = 0
            ds *= 0.5
            if ds < opts.step_min:
                status = PathStatus.MAX_STEPS
    if status is PathStatus.CONVERGED:
        t, ok = _newton(spec, t, kt, 12, scale)
        if not ok and relative_residual(spec, t, kt) > 1e-9:
            status = PathStatus.MAX_STEPS
    if status is PathStatus.MAX_STEPS and np.max(np.abs(t)) > 1e4 * scale:
        # stalled while running off to infinity
        status = PathStatus.ESCAPED
    if status is PathStatus.CONVERGED and ell > 1:
        d = _pair_gaps(t)
        if d.min() < spec.tol.dedup_tol * scale:
            status = PathStatus.COLLIDED
    hist["s_end"] = s
    sol.t = t
    sol.path_status = status
    sol.history = hist
    return classify(spec, sol)


def _pair_gaps(t) -> np.ndarray:
    d = np.abs(t[:, None] - t[None, :])
    np.fill_diagonal(d, np.inf)
    return d


# -- classification ------------------------------------------------------------

def unadmissible_distance(spec: ModelSpec, t) -> float:
    """Distance from t to the degeneration variety (coordinate-wise)."""
    t = np.asarray(t, complex)
    if len(t) == 0:
        return np.inf
    pts = []
    for zm, lm in zip(spec.z, spec.lam):
        if spec.additive_variant:
            pts += [zm - lm, zm + lm]
        else:
            p = spec.qpow(2 * lm)
            pts += [zm / p, zm * p]
    best = np.min(np.abs(t[:, None] - np.array(pts)[None, :]))
    if len(t) > 1:
        if spec.additive_variant:
            d = np.abs(t[:, None] - t[None, :] - 1)
        else:
            d = np.abs(t[:, None] - spec.q ** 2 * t[None, :])
        np.fill_diagonal(d, np.inf)
        best = min(best, d.min())
    return float(best)


def detect_string(spec: ModelSpec, t) -> int | None:
    """First factor m (1-based) whose full lattice string sits inside t."""
    if not spec.integral or len(t) == 0:
        return None
    t = np.asarray(t, complex)
    tol = spec.tol.dedup_tol * spec.scale
    for m, pts in enumerate(spec.lattice_points()):
        string = pts[:-1]
        if all(np.min(np.abs(t - p)) < tol for p in string):
            return m + 1
    return None


def orbit_key(t, granularity: float) -> tuple:
    t = np.asarray(t, complex)
    pts = sorted((round(x.real / granularity), round(x.imag / granularity)) for x in t)
    return tuple(pts)


def classify(spec: ModelSpec, sol: BetheSolution) -> BetheSolution:
    t = sol.t
    scale = spec.scale
    tol = spec.tol
    ell = len(t)
    if ell > 1:
        d = _pair_gaps(t)
        sol.offdiagonal = bool(d.min() > tol.dedup_tol * scale)
    else:
        sol.offdiagonal = True
    if np.all(np.isfinite(t)):
        sol.admissible = unadmissible_distance(spec, t) > tol.margin_tol * scale
        sol.string_detected = detect_string(spec, t)
        sol.residual = relative_residual(spec, t, sol.kappa)
        sol.jacobian_condition = jacobian_condition(spec, t, sol.kappa)
    else:
        sol.admissible = False
    sol.orbit_key = orbit_key(t, tol.dedup_tol * scale) if np.all(np.isfinite(t)) else ()
    return sol


# -- orbits --------------------------------------------------------------------

@dataclass
class Orbit:
    representative: BetheSolution
    members: list

    @property
    def multiplicity(self) -> int:
        return len(self.members)


def orbit_distance(t1, t2) -> float:
    """max |t1_a - t2_sigma(a)| minimized over permutations (bottleneck by assignment)."""
    t1, t2 = np.asarray(t1, complex), np.asarray(t2, complex)
    if len(t1) != len(t2):
        return np.inf
    if len(t1) == 0:
        return 0.0
    cost = np.abs(t1[:, None] - t2[None, :])
    r, c = linear_sum_assignment(cost)
    return float(cost[r, c].max())


def _sort_key(t):
    return sorted((x.real, x.imag) for x in np.asarray(t, complex))


def orbit_dedup(solutions, radius: float) -> list:
    """Group solutions into permutation orbits; ``radius`` is an absolute distance."""
    orbits: list[Orbit] = []
    for sol in solutions:
        for orb in orbits:
            if orbit_distance(orb.representative.t, sol.t) < radius:
                orb.members.append(sol)
                if _sort_key(sol.t) < _sort_key(orb.representative.t):
                    orb.representative = sol
                break
        else:
            orbits.append(Orbit(sol, [sol]))
    return orbits


# -- eigenvalue polynomial -------------------------------------------------------

def _deflate(c: np.ndarray, r: complex) -> tuple[np.ndarray, complex]:
    """Divide ascending coefficients c by (u - r); return quotient, remainder."""
    deg = len(c) - 1
    qc = np.zeros(deg, complex)
    acc = 0j
    for k in range(deg, 0, -1):
        acc = c[k] + acc * r
        qc[k - 1] = acc
    rem = c[0] + acc * r
    return qc, rem


def tau_numerator(spec: ModelSpec, t, kappa: complex) -> CPoly:
    t = np.asarray(t, complex)
    if spec.additive_variant:
        plus = CPoly.from_roots([zm - lm for zm, lm in zip(spec.z, spec.lam)])
        minus = CPoly.from_roots([zm + lm for zm, lm in zip(spec.z, spec.lam)])
        a = plus * CPoly.from_roots(t + 1)
        b = minus * CPoly.from_roots(t - 1)
        return a + b.scale(kappa)
    q2 = spec.q ** 2
    plus = CPoly([1.0])
    minus = CPoly([1.0])
    for zm, lm in zip(spec.z, spec.lam):
        p = spec.qpow(2 * lm)
        plus = plus * CPoly([-zm, p])
        minus = minus * CPoly([-p * zm, 1.0])
    a = plus * CPoly.from_roots(q2 * t)
    b = minus * CPoly.from_roots(t / q2, lead=q2 ** len(t))
    pref = spec.qpow(-spec.total_lambda) * spec.q ** (-len(t))
    return (a + b.scale(kappa)).scale(pref)


def eigenvalue_tau(spec: ModelSpec, t, kappa: complex | None = None, check: bool = True) -> CPoly:
    """The eigenvalue polynomial tau(u, t) attached to a Bethe solution.

    The rational expression is divided exactly by prod (u - t_a); the
    remainders are the residues, which vanish iff t solves the equations.
    """
    kappa = spec.kappa if kappa is None else kappa
    t = np.asarray(t, complex)
    c = tau_numerator(spec, t, kappa).padded(spec.n + len(t) + 1)
    if check and len(t):
        _, _, _, den = _system(spec, t, kappa)
        for a in range(len(t)):
            _, rem = _deflate(c, t[a])
            # rem equals -(L_a - kappa R_a) up to a nonzero factor
            if spec.additive_variant:
                norm = den[a]
            else:
                norm = den[a] * abs(t[a] * (1 - spec.q ** 2)) * abs(spec.qpow(-spec.total_lambda) * spec.q ** (-len(t)))
            if abs(rem) > spec.tol.residual_tol * norm:
                raise NumericalError(f"nonvanishing residue at t[{a}]")
    for r in t:
        c, _ = _deflate(c, r)
    return CPoly(c)

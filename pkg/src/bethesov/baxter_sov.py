"""Baxter difference equation, its local/global problems and the separated basis.

For integral weights the difference equation

    tau(u) Q(u) = D+(u) Q(u - 1) + D-(u) Q(u + 1)          (additive)
    tau(u) Q(u) = D+(u) Q(u/q^2) + D-(u) Q(q^2 u)            (multiplicative)

restricted to the finite strings S_m only ever touches Q on S_m, because D+
vanishes at the bottom of each string and D- at its top.  The function
space on S_1 x ... x S_n carries shift operators y_m^+-, a commuting
transfer family built from them, and (additive, kappa=1) an sl2 action
E, F, H with a raising operator C(u).
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .numkernel import CPoly, NumericalError, OpPoly, commutator, commuting_diag, poly_eval
from .repr_core import ModelSpec, SpecError
from .bethe_solve import classify, BetheSolution, eigenvalue_tau


class PairSource(str, enum.Enum):
    BETHE = "Bethe"
    SOV = "SoVSpectrum"
    LOCAL = "LocalLinear"


@dataclass
class SeparationLattice:
    sets: list                  # per-factor arrays of points
    spec: ModelSpec
    min_gap: float = np.inf

    @property
    def sizes(self) -> tuple:
        return tuple(len(s) for s in self.sets)

    @property
    def points(self) -> np.ndarray:
        return np.concatenate(self.sets)

    @property
    def owner(self) -> np.ndarray:
        return np.concatenate([np.full(len(s), m) for m, s in enumerate(self.sets)])

    def disjoint(self) -> bool:
        return self.min_gap > self.spec.tol.margin_tol * self.spec.scale

    def grid(self) -> np.ndarray:
        """All lattice multi-points x = (x_1..x_n) in Kronecker order, shape (N, n)."""
        return np.array(list(itertools.product(*self.sets)), complex).reshape(-1, len(self.sets))


@dataclass
class QProfile:
    values: list                    # per-factor arrays over S_m
    poly: CPoly | None = None

    def normalized(self, thresh: float = 1e-6) -> "QProfile":
        out = []
        for v in self.values:
            v = np.asarray(v, complex)
            big = np.abs(v).max() if v.size else 0.0
            if big == 0:
                out.append(v.copy())
                continue
            k = int(np.nonzero(np.abs(v) > thresh * big)[0][0])
            out.append(v / v[k])
        return QProfile(out, self.poly)


@dataclass
class TauQPair:
    tau: CPoly
    q_profile: QProfile
    source: PairSource
    meta: dict = field(default_factory=dict)


def build_lattice(spec: ModelSpec) -> SeparationLattice:
    if not spec.integral:
        raise SpecError("the separated lattice needs integral weights")
    sets = []
    for m, k in enumerate(spec.two_lambda):
        zm, lm = spec.z[m], spec.lam[m]
        s = np.arange(k + 1)
        if spec.additive_variant:
            sets.append(zm - lm + s.astype(complex))
        else:
            sets.append(zm * spec.qpow(2 * (s - lm)))
    gap = np.inf
    for a in range(len(sets)):
        for b in range(a + 1, len(sets)):
            gap = min(gap, np.abs(sets[a][:, None] - sets[b][None, :]).min())
    return SeparationLattice(sets, spec, gap)


# -- coefficient functions ------------------------------------------------------

def _coupling(spec: ModelSpec) -> complex:
    return spec.kappa if spec.additive_variant else spec.theta


def delta_plus(spec: ModelSpec, u):
    u = np.asarray(u, complex)
    out = np.ones_like(u)
    for zm, lm in zip(spec.z, spec.lam):
        out = out * ((u - zm + lm) if spec.additive_variant else (spec.qpow(2 * lm) * u - zm))
    return out


def delta_minus(spec: ModelSpec, u, coupling: bool = True):
    u = np.asarray(u, complex)
    out = np.ones_like(u)
    for zm, lm in zip(spec.z, spec.lam):
        out = out * ((u - zm - lm) if spec.additive_variant else (u - spec.qpow(2 * lm) * zm))
    return out * _coupling(spec) if coupling else out


def scattering_block(spec: ModelSpec, lattice: SeparationLattice, tau: CPoly, m: int) -> np.ndarray:
    """Tridiagonal restriction of the difference equation to S_m."""
    x = lattice.sets[m]
    k = len(x)
    M = np.zeros((k, k), complex)
    tv = poly_eval(tau, x)
    dp = delta_plus(spec, x)
    dm = delta_minus(spec, x)
    for s in range(k):
        M[s, s] = tv[s]
        if s > 0:
            M[s, s - 1] = -dp[s]
        if s < k - 1:
            M[s, s + 1] = -dm[s]
    return M


def baxter_residual(spec: ModelSpec, lattice: SeparationLattice, pair: TauQPair) -> float:
    """Max relative defect of the difference equation over the lattice."""
    worst = 0.0
    for m in range(spec.n):
        M = scattering_block(spec, lattice, pair.tau, m)
        v = np.asarray(pair.q_profile.values[m], complex)
        r = M @ v
        mag = np.abs(M) @ np.abs(v)
        sc = mag.max()
        if sc == 0:
            return np.inf
        worst = max(worst, float(np.abs(r).max() / sc))
    return worst


def local_solve_linear(spec: ModelSpec, lattice: SeparationLattice, tau: CPoly):
    """Kernel of every tridiagonal block, or None if one block is regular."""
    vals = []
    for m in range(spec.n):
        M = scattering_block(spec, lattice, tau, m)
        _, s, vh = np.linalg.svd(M)
        if s[-1] >= spec.tol.rank_tol * max(s[0], 1e-300):
            return None
        vals.append(vh[-1].conj())
    return QProfile(vals).normalized(spec.tol.margin_tol)


def degree_cap(spec: ModelSpec) -> float:
    """Largest degree of Q allowed for global solutions."""
    if not spec.additive_variant:
        return float(sum(spec.two_lambda))
    if spec.kappa == 1:
        # the half-integer cap 1/2 + sum(L) rounds down to sum(L) for integers
        return float(np.floor(0.5 * sum(spec.two_lambda)))
    return float(sum(spec.two_lambda))


def global_from_bethe(spec: ModelSpec, t, lattice: SeparationLattice | None = None) -> TauQPair:
    """tau and Q = prod (u - t_a) for an admissible Bethe solution.

    In the multiplicative case the Bethe system is solved at
    kappa = q^(2 l) theta and tau is rescaled by q^(L - l).
    """
    t = np.asarray(t, complex)
    ell = len(t)
    lattice = lattice or build_lattice(spec)
    if spec.additive_variant:
        kappa = spec.kappa
    else:
        kappa = spec.q ** (2 * ell) * spec.theta
    sol = classify(spec, BetheSolution(t=t, kappa=kappa, ell=ell))
    if not (sol.admissible and sol.offdiagonal):
        raise NumericalError("inadmissible solution")
    tau = eigenvalue_tau(spec, t, kappa)
    if not spec.additive_variant:
        tau = tau.scale(spec.qpow(spec.total_lambda) * spec.q ** (-ell))
    Q = CPoly.from_roots(t)
    prof = QProfile([poly_eval(Q, s) for s in lattice.sets], Q)
    return TauQPair(tau, prof, PairSource.BETHE, {"deg_Q": ell, "kappa": kappa, "degree_cap": degree_cap(spec)})


# -- separated function space ------------------------------------------------------

def shift_operators(spec: ModelSpec, lattice: SeparationLattice):
    """Lists (y_plus, y_minus, X) of dense matrices on functions over the grid."""
    grid = lattice.grid()
    sizes = lattice.sizes
    N = len(grid)
    idx = np.array(list(itertools.product(*[range(k) for k in sizes])), int).reshape(N, -1)
    yp, ym, X = [], [], []
    for k in range(spec.n):
        P = np.zeros((N, N), complex)
        Mi = np.zeros((N, N), complex)
        xk = grid[:, k]
        pre_p = delta_plus(spec, xk)
        pre_m = delta_minus(spec, xk, coupling=False)
        for i in range(N):
            s = idx[i].copy()
            if s[k] > 0:
                s[k] -= 1
                P[i, np.ravel_multi_index(tuple(s), sizes)] = pre_p[i]
                s[k] += 1
            if s[k] < sizes[k] - 1:
                s[k] += 1
                Mi[i, np.ravel_multi_index(tuple(s), sizes)] = pre_m[i]
        yp.append(P)
        ym.append(Mi)
        X.append(np.diag(xk))
    return yp, ym, X


def _interp_basis(grid: np.ndarray, m: int) -> np.ndarray:
    """Coefficients (ascending) of prod_{k!=m} (u - x_k)/(x_m - x_k) per grid point."""
    N, n = grid.shape
    out = np.zeros((N, n), complex)
    for i in range(N):
        x = grid[i]
        others = np.delete(x, m)
        c = CPoly.from_roots(others).padded(n)
        out[i] = c / np.prod(x[m] - others)
    return out


def sov_operators(spec: ModelSpec, lattice: SeparationLattice) -> OpPoly:
    """Transfer polynomial on the separated space; its coefficients commute."""
    grid = lattice.grid()
    N, n = grid.shape
    yp, ym, _ = shift_operators(spec, lattice)
    c = _coupling(spec)
    coeffs = np.zeros((n + 1, N, N), complex)
    for i in range(N):
        x = grid[i]
        if spec.additive_variant:
            base = CPoly.from_roots(x, lead=1 + c)
        else:
            lead = (1 + spec.qpow(2 * spec.total_lambda) * c) * np.prod(np.array(spec.z) / x)
            base = CPoly.from_roots(x, lead=lead)
        coeffs[:, i, i] += base.padded(n + 1)
    for m in range(n):
        L = _interp_basis(grid, m)
        shift = yp[m] + c * ym[m]
        if spec.additive_variant:
            for k in range(n):
                coeffs[k] += L[:, k][:, None] * shift
        else:
            # extra factor u / x_m raises the degree by one
            for k in range(n):
                coeffs[k + 1] += (L[:, k] / grid[:, m])[:, None] * shift
    return OpPoly(coeffs)


def rank1_factors(vec: np.ndarray, sizes) -> tuple[list, float]:
    """Best rank-1 split of a tensor, left to right; returns factors and relative error."""
    vec = np.asarray(vec, complex)
    rest = vec.copy()
    factors = []
    for k in sizes[:-1]:
        M = rest.reshape(k, -1)
        U, s, Vh = np.linalg.svd(M, full_matrices=False)
        factors.append(U[:, 0] * s[0])
        rest = Vh[0]
    factors.append(rest)
    recon = factors[0]
    for f in factors[1:]:
        recon = np.kron(recon, f)
    err = np.linalg.norm(vec - recon) / max(np.linalg.norm(vec), 1e-300)
    return factors, float(err)


def sov_spectrum(spec: ModelSpec, lattice: SeparationLattice, family: OpPoly | None = None,
                 rng=None, degenerate: bool | None = None) -> list:
    """Joint eigenpairs of the separated transfer polynomial.

    Each eigenvector is split into a product of per-string profiles.  At the
    sl2-symmetric point (additive, kappa=1) joint eigenvalues repeat, so the
    diagonalization works per eigenvalue cluster and returns one vector per
    distinct tau.
    """
    family = family if family is not None else sov_operators(spec, lattice)
    rng = np.random.default_rng(spec.rng_seed) if rng is None else rng
    if degenerate is None:
        degenerate = spec.additive_variant and spec.kappa == 1
    ev, vecs = commuting_diag(list(family.coeffs), spec.tol, rng, allow_degenerate=degenerate)
    out = []
    for i in range(vecs.shape[1]):
        tau = CPoly(ev[:, i])
        factors, err = rank1_factors(vecs[:, i], lattice.sizes)
        prof = QProfile(factors).normalized(spec.tol.margin_tol)
        out.append(TauQPair(tau, prof, PairSource.SOV, {"factor_residual": err}))
    return out


def tau_distance(a: CPoly, b: CPoly) -> float:
    n = max(len(a.coeffs), len(b.coeffs))
    x, y = a.padded(n), b.padded(n)
    return float(np.abs(x - y).max() / max(1.0, np.abs(x).max(), np.abs(y).max()))


def distinct_taus(pairs, tol: float) -> list:
    reps = []
    for p in pairs:
        if all(tau_distance(p.tau, r.tau) > tol for r in reps):
            reps.append(p)
    return reps


def match_pairs(left, right):
    """Optimal bijection between two tau lists; returns (pairs, worst distance)."""
    if len(left) != len(right):
        return [], np.inf
    if not left:
        return [], 0.0
    cost = np.array([[tau_distance(a.tau, b.tau) for b in right] for a in left])
    r, c = linear_sum_assignment(cost)
    return list(zip(r.tolist(), c.tolist())), float(cost[r, c].max())


def count_local_solutions(spec: ModelSpec, rng=None) -> int:
    lattice = build_lattice(spec)
    pairs = sov_spectrum(spec, lattice, rng=rng)
    return len(distinct_taus(pairs, 1e-6))


# -- sl2 structure at kappa = 1 ----------------------------------------------------

def _require_additive(spec: ModelSpec):
    if not spec.additive_variant:
        raise SpecError("the sl2 structure on the separated space is only defined additively")


def _inv_vandermonde_rows(grid: np.ndarray, m: int) -> np.ndarray:
    others = np.delete(grid, m, axis=1)
    return 1.0 / np.prod(grid[:, [m]] - others, axis=1)


def sl2_on_F(spec: ModelSpec, lattice: SeparationLattice):
    """Matrices E, F, H on the separated space."""
    _require_additive(spec)
    grid = lattice.grid()
    N, n = grid.shape
    yp, ym, X = shift_operators(spec, lattice)
    E = np.zeros((N, N), complex)
    F = np.zeros((N, N), complex)
    H = np.zeros((N, N), complex)
    for m in range(n):
        D = np.diag(_inv_vandermonde_rows(grid, m))
        W = X[m] - spec.z[m] * np.eye(N)
        F += D @ ym[m]
        H += W - D @ ym[m]
        E += 2 * W - D @ (yp[m] + ym[m])
    return E, F, H


def _big_delta(spec: ModelSpec, u):
    u = np.asarray(u, complex)
    out = np.ones_like(u)
    for zm, lm in zip(spec.z, spec.lam):
        out = out * (u - zm + lm) * (u - zm - lm - 1)
    return out


def raising_C(spec: ModelSpec, lattice: SeparationLattice) -> OpPoly:
    """The operator polynomial C(u) added to the transfer polynomial at kappa=1."""
    _require_additive(spec)
    grid = lattice.grid()
    N, n = grid.shape
    yp, ym, _ = shift_operators(spec, lattice)
    coeffs = np.zeros((max(n, 1), N, N), complex)
    for m in range(n):
        xm = grid[:, m]
        diff = xm[:, None] - grid          # x_m - x_k for all k (k = m included)
        diag = (_big_delta(spec, xm + 1) / np.prod(diff + 1, axis=1)
                + _big_delta(spec, xm) / np.prod(diff - 1, axis=1))
        K = np.diag(diag) - yp[m] - ym[m]
        L = _interp_basis(grid, m)
        for k in range(n):
            coeffs[k] += L[:, k][:, None] * K
        for l in range(n):
            if l == m:
                continue
            xl = grid[:, l]
            rest = [k for k in range(n) if k not in (l, m)]
            w = 1.0 / ((xm - xl) * (xm - xl - 1))
            for i in range(N):
                c = CPoly.from_roots(grid[i, rest]).padded(max(n - 1, 1))
                den = np.prod((xm[i] - grid[i, rest]) * (xl[i] - grid[i, rest]))
                cc = w[i] * c / den
                for k in range(len(cc)):
                    coeffs[k][i] += cc[k] * (yp[m] @ ym[l])[i]
    return OpPoly(coeffs)


def sl2_report(spec: ModelSpec, lattice: SeparationLattice, samples=(0.37 + 0.21j, -1.3 + 0.8j, 2.1 - 0.4j)) -> dict:
    """Numerical defects of the sl2 relations and of the raising operator."""
    E, F, H = sl2_on_F(spec, lattice)
    nrm = max(np.linalg.norm(E, 2), np.linalg.norm(F, 2), np.linalg.norm(H, 2))
    rep = {
        "HE": np.linalg.norm(commutator(H, E) - E, 2) / nrm ** 2,
        "HF": np.linalg.norm(commutator(H, F) + F, 2) / nrm ** 2,
        "EF": np.linalg.norm(commutator(E, F) - 2 * H, 2) / nrm ** 2,
    }
    Tpoly = sov_operators(spec.with_(kappa=1.0), lattice)
    Cpoly = raising_C(spec, lattice)
    S = Tpoly + Cpoly
    worst_x = 0.0
    worst_raise_C = 0.0
    worst_raise_H = 0.0
    for u in samples:
        Su = S(u)
        for Xop in (E, F, H):
            worst_x = max(worst_x, np.linalg.norm(commutator(Su, Xop), 2) / (np.linalg.norm(Su, 2) * np.linalg.norm(Xop, 2)))
        Cu = Cpoly(u)
        cn = max(np.linalg.norm(Cu, 2), 1e-300)
        worst_raise_C = max(worst_raise_C, np.linalg.norm(commutator(H, Cu) - Cu, 2) / (cn * np.linalg.norm(H, 2)))
        worst_raise_H = max(worst_raise_H, np.linalg.norm(commutator(H, Cu) - H, 2) / (cn * np.linalg.norm(H, 2)))
    fam = list(S.coeffs)
    worst_comm = 0.0
    for i in range(len(fam)):
        for j in range(i + 1, len(fam)):
            a, b = fam[i], fam[j]
            d = np.linalg.norm(commutator(a, b), 2)
            worst_comm = max(worst_comm, d / max(np.linalg.norm(a, 2) * np.linalg.norm(b, 2), 1e-300))
    rep.update({"TC_X": worst_x, "TC_commute": worst_comm,
                "HC_minus_C": worst_raise_C, "HC_minus_H": worst_raise_H})
    return rep

"""Bethe vectors and the checks built on them.

``w(t) = B(t_1) ... B(t_l) v`` is computed two ways: by applying the
monodromy entry B and by the explicit sum over ordered set partitions of
{1..l} into n blocks.  The remaining functions verify eigenvector, norm,
orthogonality, completeness and intertwining properties.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass

import numpy as np

from .numkernel import CPoly, NumericalError, OpPoly, ToleranceProfile, matrix_rank, oppoly_apply, poly_eval
from .repr_core import ModelSpec, MonodromyBundle, TensorSpace, build_space, monodromy
from .bethe_solve import bae_jacobian


class Construction(str, enum.Enum):
    PRODUCT = "OperatorProduct"
    SUM = "PartitionSum"


@dataclass
class BetheVector:
    coords: np.ndarray      # coordinates in the V[ell] block
    t: np.ndarray
    ell: int
    construction: Construction

    def norm(self) -> float:
        return float(np.linalg.norm(self.coords))


def embed(space: TensorSpace, w: BetheVector) -> np.ndarray:
    full = np.zeros(space.dim, complex)
    full[space.block(w.ell)] = w.coords
    return full


def bethe_vector_product(bundle: MonodromyBundle, t) -> BetheVector:
    t = np.asarray(t, complex)
    space = bundle.space
    v = space.vacuum()
    for ta in t[::-1]:
        v = oppoly_apply(bundle.B, ta, v)
    return BetheVector(v[space.block(len(t))], t, len(t), Construction.PRODUCT)


def _pair_weight(spec: ModelSpec, ta, tb):
    if spec.additive_variant:
        return (ta - tb - 1) / (ta - tb)
    q = spec.q
    return (ta / q - q * tb) / (ta - tb)


def _site_factors(spec: ModelSpec, t):
    """alpha[m, a] for a placed right of site m, beta[l, a] for a placed left of site l."""
    n = spec.n
    alpha = np.empty((n, len(t)), complex)
    beta = np.empty((n, len(t)), complex)
    for m in range(n):
        zm, lm = spec.z[m], spec.lam[m]
        if spec.additive_variant:
            alpha[m] = t - zm + lm
            beta[m] = t - zm - lm
        else:
            p = spec.qpow(lm)
            alpha[m] = p * t - zm / p
            beta[m] = t / p - p * zm
    return alpha, beta


def bethe_vector_sum(spec: ModelSpec, space: TensorSpace, t) -> BetheVector:
    """Partition-sum formula for w(t); needs pairwise distinct t."""
    t = np.asarray(t, complex)
    ell = len(t)
    n = spec.n
    if ell > 1:
        d = np.abs(t[:, None] - t[None, :])
        np.fill_diagonal(d, np.inf)
        if d.min() < spec.tol.dedup_tol * spec.scale:
            raise NumericalError("diagonal t: coordinates must be pairwise distinct")
    W = np.ones((ell, ell), complex)
    for a in range(ell):
        for b in range(ell):
            if a != b:
                W[a, b] = _pair_weight(spec, t[a], t[b])
    alpha, beta = _site_factors(spec, t)
    idx = space.block(ell)
    pos = {tuple(space.basis[i]): k for k, i in enumerate(idx)}
    coords = np.zeros(len(idx), complex)
    for g in itertools.product(range(n), repeat=ell):
        nu = tuple(np.bincount(np.array(g, int), minlength=n)) if ell else (0,) * n
        if nu not in pos:
            continue
        w = 1.0 + 0j
        for a in range(ell):
            # a sits in block g[a]; pair it with every site/element to its left
            for m in range(g[a]):
                w *= alpha[m, a]
            for l in range(g[a] + 1, n):
                w *= beta[l, a]
            for b in range(ell):
                if g[b] < g[a]:
                    w *= W[a, b]
        coords[pos[nu]] += w
    if not spec.additive_variant and ell:
        coords *= (spec.q - 1 / spec.q) ** ell * np.prod(t)
    return BetheVector(coords, t, ell, Construction.SUM)


def eigen_residual(bundle: MonodromyBundle, t, tau: CPoly, sample_count: int = 6,
                   kappa: complex | None = None, rng=None) -> float:
    """max over sample u of |T(u) w - tau(u) w| / (|T(u)| |w|)."""
    spec = bundle.spec
    rng = np.random.default_rng(12345) if rng is None else rng
    T = bundle.transfer if kappa is None else bundle.A + bundle.D.scale(kappa)
    w = bethe_vector_product(bundle, t)
    full = embed(bundle.space, w)
    nrm = np.linalg.norm(full)
    if nrm < spec.tol.residual_tol * spec.scale:
        raise NumericalError("trivial vector")
    worst = 0.0
    for _ in range(sample_count):
        u = spec.scale * (rng.normal() + 1j * rng.normal())
        if not spec.additive_variant:
            u = spec.scale * np.exp(rng.uniform(-0.5, 0.5) + 1j * rng.uniform(0, 2 * np.pi))
        Tu = T(u)
        r = Tu @ full - poly_eval(tau, u) * full
        worst = max(worst, np.linalg.norm(r) / (np.linalg.norm(Tu, 2) * nrm))
    return float(worst)


def dual_pairing(bundle: MonodromyBundle, t, t_other) -> complex:
    """<v*, C(s_1) ... C(s_l) w(t)> with s = t_other."""
    t, s = np.asarray(t, complex), np.asarray(t_other, complex)
    if len(t) != len(s):
        raise ValueError("ell mismatch")
    v = embed(bundle.space, bethe_vector_product(bundle, t))
    for sa in s[::-1]:
        v = oppoly_apply(bundle.C, sa, v)
    return complex(v[0])


def norm_determinant(spec: ModelSpec, t, kappa: complex | None = None,
                     form: str = "corrected") -> complex:
    """Closed-form value of <v*, C(t_1)..C(t_l) w(t)> for a Bethe solution.

    Both forms multiply the Jacobian determinant of the Bethe system
    (with ``t_a d/dt_a`` rows in the multiplicative case) by
    ``(-1)^l prod_{m,a} (t_a - z_m - L_m)`` (resp. ``t_a - q^{2L_m} z_m``).

    form="printed" uses the pair factor ``prod_{a>b} (t_a-t_b+1)/(t_a-t_b)``
    (``(q^2 t_a - t_b)/(t_a - t_b)`` and ``q^{-2L-l(l+1)} (q-1/q)^l``).  In the
    additive case it agrees with the pairing only for l <= 1; in the
    multiplicative case it is off by q^-2 already at l = 1.

    form="corrected" uses ``prod_{a!=b} 1/(t_a - t_b)`` and, in the
    multiplicative case, ``q^{-2Ll-l(l-1)} (q-1/q)^l``.  This is the form
    that matches the directly computed pairing for every l tested.
    """
    if form not in ("corrected", "printed"):
        raise ValueError(f"unknown form {form!r}")
    kappa = spec.kappa if kappa is None else kappa
    t = np.asarray(t, complex)
    ell = len(t)
    if ell == 0:
        return 1.0 + 0j
    if ell > 1:
        d = np.abs(t[:, None] - t[None, :])
        np.fill_diagonal(d, np.inf)
        if d.min() < spec.tol.dedup_tol * spec.scale:
            raise NumericalError("diagonal t")
    J = bae_jacobian(spec, t, kappa)
    pref = (-1.0 + 0j) ** ell
    if spec.additive_variant:
        for zm, lm in zip(spec.z, spec.lam):
            pref *= np.prod(t - zm - lm)
        det = np.linalg.det(J)
    else:
        q = spec.q
        pref *= (q - 1 / q) ** ell
        if form == "printed":
            pref *= q ** (-ell * (ell + 1)) * spec.qpow(-2 * spec.total_lambda)
        else:
            pref *= q ** (-ell * (ell - 1)) * spec.qpow(-2 * spec.total_lambda * ell)
        for zm, lm in zip(spec.z, spec.lam):
            pref *= np.prod(t - spec.qpow(2 * lm) * zm)
        det = np.linalg.det(t[:, None] * J.T)
    for a in range(ell):
        for b in range(ell):
            if form == "corrected" and a != b:
                pref /= t[a] - t[b]
            elif form == "printed" and b < a:
                if spec.additive_variant:
                    pref *= (t[a] - t[b] + 1) / (t[a] - t[b])
                else:
                    pref *= (spec.q ** 2 * t[a] - t[b]) / (t[a] - t[b])
    return complex(pref * det)


def basis_rank(vectors, ell: int, tol: ToleranceProfile | None = None,
               restrict: np.ndarray | None = None) -> tuple[int, float]:
    """Rank/condition of the Bethe vectors of one weight space.

    ``restrict`` (orthonormal columns) expresses the vectors in a subspace,
    e.g. the singular vectors at kappa = 1.
    """
    if not vectors:
        return 0, 1.0
    M = np.column_stack([w.coords / max(w.norm(), 1e-300) for w in vectors])
    if restrict is not None:
        M = restrict.conj().T @ M
    return matrix_rank(M, tol)


def singular_basis(space: TensorSpace, ell: int, tol: float = 1e-10) -> np.ndarray:
    """Orthonormal basis of Sing V[ell] in block coordinates."""
    from .repr_core import singular_projector
    n_ell = len(space.block(ell))
    if ell == 0:
        return np.eye(n_ell, dtype=complex)
    E = singular_projector(space, ell)
    _, s, vh = np.linalg.svd(E)
    rank = int((s > tol * max(1.0, s.max() if s.size else 1.0)).sum())
    return vh[rank:].conj().T


def singular_check(space: TensorSpace, w: BetheVector) -> float:
    """|delta(e) w| / |w|."""
    nrm = w.norm()
    if nrm == 0:
        raise NumericalError("trivial vector")
    if w.ell == 0:
        return 0.0
    from .repr_core import singular_projector
    return float(np.linalg.norm(singular_projector(space, w.ell) @ w.coords) / nrm)


def permuted_spec(spec: ModelSpec, sigma) -> ModelSpec:
    sigma = list(sigma)
    return spec.with_(lam=tuple(spec.lam[i] for i in sigma), z=tuple(spec.z[i] for i in sigma))


def random_tuples(spec: ModelSpec, ell: int, count: int, rng) -> list:
    sc = spec.scale
    out = []
    for _ in range(count):
        if spec.additive_variant:
            out.append(sc * (rng.normal(size=ell) + 1j * rng.normal(size=ell)))
        else:
            r = np.exp(rng.uniform(-0.7, 0.7, ell) + 1j * rng.uniform(0, 2 * np.pi, ell))
            out.append(sc * r)
    return out


def permutation_intertwiner(spec: ModelSpec, sigma, samples=None, rng=None,
                            validation: int = 5):
    """Fit M with M w(t) = w^sigma(t) on each weight space, then validate.

    Returns the block-diagonal M (full-space coordinates of V and V^sigma)
    and the worst relative residual on fresh validation tuples.
    """
    rng = np.random.default_rng(spec.rng_seed) if rng is None else rng
    sp2 = permuted_spec(spec, sigma)
    space, space2 = build_space(spec), build_space(sp2)
    b1, b2 = monodromy(spec, space), monodromy(sp2, space2)
    M = np.zeros((space2.dim, space.dim), complex)
    worst = 0.0
    for ell in sorted(space.weight_blocks):
        i1, i2 = space.block(ell), space2.block(ell)
        k = len(i1)
        if samples is not None and ell in samples:
            fit = samples[ell]
        else:
            fit = random_tuples(spec, ell, k + 3, rng)
        W1 = np.column_stack([bethe_vector_product(b1, t).coords for t in fit])
        W2 = np.column_stack([bethe_vector_product(b2, t).coords for t in fit])
        if matrix_rank(W1, spec.tol)[0] < k:
            raise NumericalError(f"rank-deficient sample set at ell={ell}")
        Mb = W2 @ np.linalg.pinv(W1)
        M[np.ix_(i2, i1)] = Mb
        for t in random_tuples(spec, ell, validation, rng):
            w1 = bethe_vector_product(b1, t).coords
            w2 = bethe_vector_product(b2, t).coords
            worst = max(worst, np.linalg.norm(Mb @ w1 - w2) / max(np.linalg.norm(w2), 1e-300))
    return M, float(worst)

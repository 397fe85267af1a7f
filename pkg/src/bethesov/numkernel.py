"""Complex polynomial and operator-polynomial kernels.

Scalar polynomials are stored in ascending order (``coeffs[k]`` multiplies
``u**k``).  Operator polynomials hold a stack of dense matrices in the same
order.  Everything is double-precision complex.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


class NumericalError(ValueError):
    """Raised for degenerate inputs to the numerical kernels."""


@dataclass(frozen=True)
class ToleranceProfile:
    residual_tol: float = 1e-10
    dedup_tol: float = 1e-7
    rank_tol: float = 1e-8
    margin_tol: float = 1e-6

    def __post_init__(self):
        vals = (self.residual_tol, self.dedup_tol, self.rank_tol, self.margin_tol)
        if min(vals) <= 0:
            raise ValueError("tolerances must be strictly positive")
        if self.dedup_tol <= self.residual_tol:
            raise ValueError("dedup_tol must exceed residual_tol")


class CPoly:
    """Dense univariate complex polynomial, ascending coefficients.

    Trailing zeros are stripped on construction so that ``degree()`` is
    meaningful; the zero polynomial has an empty coefficient array and
    degree -1.
    """

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: Sequence[complex] | np.ndarray = ()):
        c = np.asarray(coeffs, dtype=complex).ravel()
        nz = np.nonzero(c)[0]
        self.coeffs = c[: nz[-1] + 1].copy() if nz.size else np.zeros(0, complex)

    @classmethod
    def from_roots(cls, roots, lead: complex = 1.0) -> "CPoly":
        c = np.array([lead], dtype=complex)
        for r in roots:
            c = np.convolve(c, [-r, 1.0])
        return cls(c)

    def degree(self) -> int:
        return len(self.coeffs) - 1

    def is_zero(self) -> bool:
        return len(self.coeffs) == 0

    def __call__(self, u):
        return poly_eval(self, u)

    def __add__(self, other: "CPoly") -> "CPoly":
        a, b = self.coeffs, other.coeffs
        out = np.zeros(max(len(a), len(b)), complex)
        out[: len(a)] += a
        out[: len(b)] += b
        return CPoly(out)

    def __sub__(self, other: "CPoly") -> "CPoly":
        return self + other.scale(-1.0)

    def __mul__(self, other: "CPoly") -> "CPoly":
        if self.is_zero() or other.is_zero():
            return CPoly()
        return CPoly(np.convolve(self.coeffs, other.coeffs))

    def scale(self, c: complex) -> "CPoly":
        return CPoly(self.coeffs * c)

    def padded(self, length: int) -> np.ndarray:
        out = np.zeros(length, complex)
        out[: len(self.coeffs)] = self.coeffs
        return out

    def __repr__(self):
        return f"CPoly({self.coeffs.tolist()!r})"


def poly_eval(p: CPoly, u):
    """Horner evaluation; works for scalar or array ``u``."""
    u = np.asarray(u, dtype=complex)
    acc = np.zeros_like(u)
    for c in p.coeffs[::-1]:
        acc = acc * u + c
    return acc[()] if acc.ndim == 0 else acc


def poly_roots(p: CPoly) -> np.ndarray:
    """Roots from the companion matrix followed by one Newton polish."""
    if p.is_zero() or p.degree() < 1:
        raise NumericalError("degenerate input: need a polynomial of degree >= 1")
    c = p.coeffs
    deg = len(c) - 1
    comp = np.zeros((deg, deg), complex)
    comp[1:, :-1] = np.eye(deg - 1)
    comp[:, -1] = -c[:-1] / c[-1]
    r = np.linalg.eigvals(comp)
    dp = CPoly(c[1:] * np.arange(1, deg + 1))
    for i, x in enumerate(r):
        d = poly_eval(dp, x)
        if d != 0:
            step = poly_eval(p, x) / d
            if np.isfinite(step) and abs(step) < 1e-3 * (1 + abs(x)):
                r[i] = x - step
    return r


class OpPoly:
    """Polynomial in u with dense operator coefficients of shape (rows, cols)."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs):
        c = np.asarray(coeffs, dtype=complex)
        if c.ndim != 3:
            raise ValueError("OpPoly expects a stack of matrices")
        self.coeffs = c

    @property
    def shape(self):
        return self.coeffs.shape[1:]

    @property
    def dim(self) -> int:
        return self.coeffs.shape[1]

    def degree(self) -> int:
        return self.coeffs.shape[0] - 1

    @classmethod
    def constant(cls, M) -> "OpPoly":
        return cls(np.asarray(M, complex)[None])

    @classmethod
    def zero(cls, rows: int, cols: int | None = None) -> "OpPoly":
        return cls(np.zeros((1, rows, rows if cols is None else cols), complex))

    def __call__(self, u: complex) -> np.ndarray:
        acc = np.zeros(self.shape, complex)
        for c in self.coeffs[::-1]:
            acc = acc * u + c
        return acc

    def __add__(self, other: "OpPoly") -> "OpPoly":
        a, b = self.coeffs, other.coeffs
        out = np.zeros((max(len(a), len(b)),) + self.shape, complex)
        out[: len(a)] += a
        out[: len(b)] += b
        return OpPoly(out)

    def scale(self, c: complex) -> "OpPoly":
        return OpPoly(self.coeffs * c)

    def __matmul__(self, other: "OpPoly") -> "OpPoly":
        a, b = self.coeffs, other.coeffs
        out = np.zeros((len(a) + len(b) - 1, a.shape[1], b.shape[2]), complex)
        for i in range(len(a)):
            for j in range(len(b)):
                out[i + j] += a[i] @ b[j]
        return OpPoly(out)

    def trimmed(self, tol: float = 0.0) -> "OpPoly":
        c = self.coeffs
        k = len(c)
        while k > 1 and np.abs(c[k - 1]).max() <= tol:
            k -= 1
        return OpPoly(c[:k])


def oppoly_apply(P: OpPoly, u: complex, v) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    if v.shape[0] != P.shape[1]:
        raise ValueError(f"shape mismatch: operator {P.shape}, vector {v.shape}")
    acc = np.zeros((P.shape[0],) + v.shape[1:], complex)
    for c in P.coeffs[::-1]:
        acc = acc * u + c @ v
    return acc


def matrix_rank(M, tol: ToleranceProfile | None = None) -> tuple[int, float]:
    """Numerical rank and condition number of the retained singular values."""
    tol = tol or ToleranceProfile()
    M = np.asarray(M, dtype=complex)
    if M.size == 0:
        return 0, 1.0
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0:
        return 0, 1.0
    keep = s > tol.rank_tol * s[0]
    return int(keep.sum()), float(s[0] / s[keep][-1])


def commutator(A, B) -> np.ndarray:
    return A @ B - B @ A


def _clusters(vals: np.ndarray, radius: float) -> list[list[int]]:
    # single-linkage clustering of complex numbers
    n = len(vals)
    label = -np.ones(n, int)
    out = []
    for i in range(n):
        if label[i] >= 0:
            continue
        label[i] = len(out)
        group = [i]
        k = 0
        while k < len(group):
            j = group[k]
            near = np.nonzero((np.abs(vals - vals[j]) <= radius) & (label < 0))[0]
            label[near] = label[i]
            group.extend(near.tolist())
            k += 1
        out.append(sorted(group))
    return out


def commuting_diag(family, tol: ToleranceProfile | None = None, rng=None,
                   allow_degenerate: bool = False, max_retries: int = 8):
    """Common eigenvectors of a commuting family of matrices.

    A random real combination of the (norm-scaled) family is diagonalized.
    With ``allow_degenerate=False`` every eigenvalue must be simple; on a
    collision a fresh combination is drawn.  With ``allow_degenerate=True``
    clusters of the combination's spectrum are treated as one joint
    eigenvalue (possibly defective) and one common eigenvector is returned
    per cluster; this is what the sl2-symmetric point needs.

    Returns
    -------
    eigvals : ndarray, shape (len(family), k)
        ``eigvals[j, i]`` is the eigenvalue of ``family[j]`` on vector ``i``.
    vecs : ndarray, shape (dim, k)
    """
    tol = tol or ToleranceProfile()
    rng = np.random.default_rng(0) if rng is None else rng
    mats = [np.asarray(M, complex) for M in family]
    dim = mats[0].shape[0]
    norms = [max(np.linalg.norm(M, 2), 1e-300) for M in mats]
    for i, A in enumerate(mats):
        for j in range(i + 1, len(mats)):
            defect = np.linalg.norm(commutator(A, mats[j]), 2)
            if defect > 1e3 * tol.residual_tol * norms[i] * norms[j]:
                raise NumericalError("not a commuting family")
    for _ in range(max_retries):
        w = rng.uniform(0.5, 1.5, len(mats)) * rng.choice([-1, 1], len(mats))
        M = sum(wj * Mj / nj for wj, Mj, nj in zip(w, mats, norms))
        lam = np.linalg.eigvals(M)
        mscale = max(np.abs(lam).max(), 1e-300)
        if not allow_degenerate:
            vals, vecs = np.linalg.eig(M)
            gaps = np.abs(vals[:, None] - vals[None, :])
            np.fill_diagonal(gaps, np.inf)
            if gaps.min() <= tol.dedup_tol * mscale:
                continue
            vecs = vecs / np.linalg.norm(vecs, axis=0)
        else:
            # defective clusters split like eps**(1/k); the cluster mean is accurate
            groups = _clusters(lam, 1e-3 * mscale)
            vecs = []
            for g in groups:
                mu = lam[g].mean()
                _, s, vh = np.linalg.svd(M - mu * np.eye(dim))
                vecs.append(vh[-1].conj())
            vecs = np.array(vecs).T
        ev = np.array([[np.vdot(x, Mj @ x) / np.vdot(x, x) for x in vecs.T] for Mj in mats])
        return ev, vecs
    raise NumericalError("degenerate spectrum")

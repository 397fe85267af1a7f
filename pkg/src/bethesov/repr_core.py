"""Highest-weight modules, tensor products and monodromy matrices.

Two variants are supported.  In the additive (Yangian-type) case the local
L-operator is ``[[u+h, f], [e, u-h]]`` and the monodromy is the ordered
product of ``T_m(u - z_m)``.  In the multiplicative (quantum-group) case
the local factor is ``z_m T_m(u/z_m)`` with

    T(u) = [[u q^h - q^-h, u f (q - 1/q)], [e (q - 1/q), u q^-h - q^h]].

States are expanded in the monomial basis ``f^nu1 v1 x ... x f^nun vn``
ordered lexicographically in ``nu``, which is also the Kronecker order.
"""
from __future__ import annotations

import enum
import itertools
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .numkernel import OpPoly, ToleranceProfile


class Variant(str, enum.Enum):
    ADDITIVE = "additive"
    MULTIPLICATIVE = "multiplicative"


class SpecError(ValueError):
    """Invalid model description."""


def _is_halfint(x: complex, tol: float = 1e-12) -> bool:
    x = complex(x)
    two = 2 * x.real
    return abs(x.imag) < tol and abs(two - round(two)) < tol and round(two) >= 0


@dataclass(frozen=True)
class ModelSpec:
    """A full problem instance.

    ``lam`` holds the highest weights Lambda_m.  For integral weights
    ``2*Lambda_m`` is a nonnegative integer and the module has dimension
    ``2*Lambda_m + 1``.  Otherwise ``truncation`` fixes the highest power of
    ``f`` kept.  In the multiplicative variant ``lam = d/2`` so that
    ``q**(2*Lambda) = q**d``; all q-powers go through :meth:`qpow`.
    """

    variant: Variant
    lam: tuple
    z: tuple
    kappa: complex = 1.0
    theta: complex = 1.0
    q: complex | None = None
    truncation: int | None = None
    tol: ToleranceProfile = field(default_factory=ToleranceProfile)
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        object.__setattr__(self, "lam", tuple(complex(x) for x in self.lam))
        object.__setattr__(self, "z", tuple(complex(x) for x in self.z))
        object.__setattr__(self, "kappa", complex(self.kappa))
        object.__setattr__(self, "theta", complex(self.theta))
        if self.q is not None:
            object.__setattr__(self, "q", complex(self.q))
        if len(self.lam) != len(self.z) or not self.lam:
            raise SpecError("need one weight and one inhomogeneity per factor")
        if self.variant is Variant.MULTIPLICATIVE:
            if self.q is None:
                raise SpecError("multiplicative variant requires q")
            if any(abs(zm) == 0 for zm in self.z):
                raise SpecError("multiplicative inhomogeneities must be nonzero")
        if not self.integral and self.truncation is None:
            raise SpecError("generic weights need an explicit truncation depth")
        if self.truncation is not None and self.truncation < 0:
            raise SpecError("truncation must be nonnegative")

    # construction helpers
    @classmethod
    def additive(cls, two_lambda, z, kappa=1.0, **kw) -> "ModelSpec":
        return cls(Variant.ADDITIVE, tuple(0.5 * x for x in two_lambda), z, kappa=kappa, **kw)

    @classmethod
    def multiplicative(cls, d, z, q, theta=1.0, kappa=1.0, **kw) -> "ModelSpec":
        return cls(Variant.MULTIPLICATIVE, tuple(0.5 * x for x in d), z,
                   kappa=kappa, theta=theta, q=q, **kw)

    def with_(self, **kw) -> "ModelSpec":
        return replace(self, **kw)

    @property
    def n(self) -> int:
        return len(self.lam)

    @property
    def additive_variant(self) -> bool:
        return self.variant is Variant.ADDITIVE

    @property
    def integral(self) -> bool:
        return all(_is_halfint(x) for x in self.lam)

    @property
    def two_lambda(self) -> tuple:
        if not self.integral:
            raise SpecError("weights are not integral")
        return tuple(int(round(2 * x.real)) for x in self.lam)

    @property
    def dims(self) -> tuple:
        if self.integral:
            return tuple(k + 1 for k in self.two_lambda)
        return (self.truncation + 1,) * self.n

    @property
    def total_lambda(self) -> complex:
        return sum(self.lam)

    @property
    def scale(self) -> float:
        return max(1.0, max(abs(x) for x in self.z), max(abs(x) for x in self.lam))

    def qpow(self, x) -> complex:
        """q**x through a fixed branch of log q."""
        return np.exp(np.asarray(x, complex) * np.log(self.q))

    @property
    def ell_max(self) -> int:
        return sum(d - 1 for d in self.dims)

    def lattice_points(self) -> list:
        """Per-factor strings z-L, ..., z+L (or the q-geometric analogue)."""
        pts = []
        for m in range(self.n):
            lam, zm = self.lam[m], self.z[m]
            top = int(round(2 * lam.real)) if _is_halfint(lam) else 0
            if self.additive_variant:
                row = [zm - lam + s for s in range(top + 1)] + [zm + lam]
            else:
                row = [zm * self.qpow(2 * (s - lam)) for s in range(top + 1)] + [zm * self.qpow(2 * lam)]
            pts.append(row)
        return pts

    def min_separation(self) -> float:
        pts = self.lattice_points()
        best = np.inf
        for a in range(self.n):
            for b in range(a + 1, self.n):
                for x in pts[a]:
                    for y in pts[b]:
                        best = min(best, abs(x - y))
        return best

    def well_separated(self) -> bool:
        return self.min_separation() > self.tol.margin_tol * self.scale

    def q_ok(self, kmax: int = 24) -> bool:
        if self.q is None:
            return True
        return all(abs(self.qpow(2 * k) - 1) > self.tol.margin_tol for k in range(1, kmax + 1))


def qint(spec: ModelSpec, x) -> complex:
    """q-number [x] = (q^x - q^-x)/(q - 1/q)."""
    q = spec.q
    return (spec.qpow(x) - spec.qpow(-x)) / (q - 1 / q)


def local_generators(spec: ModelSpec, m: int) -> dict:
    """Generator matrices of the m-th factor in its own monomial basis."""
    d = spec.dims[m]
    lam = spec.lam[m]
    k = np.arange(d)
    f = np.diag(np.ones(d - 1, complex), -1)
    e = np.zeros((d, d), complex)
    out = {"f": f}
    if spec.additive_variant:
        for j in range(1, d):
            e[j - 1, j] = j * (2 * lam - j + 1)
        out["h"] = np.diag(lam - k).astype(complex)
    else:
        for j in range(1, d):
            e[j - 1, j] = qint(spec, j) * qint(spec, 2 * lam - j + 1)
        out["K"] = np.diag(spec.qpow(lam - k))
        out["Kinv"] = np.diag(spec.qpow(k - lam))
    out["e"] = e
    return out


def _embed(op: np.ndarray, m: int, dims) -> np.ndarray:
    left = int(np.prod(dims[:m]))
    right = int(np.prod(dims[m + 1:]))
    return np.kron(np.kron(np.eye(left), op), np.eye(right))


@dataclass
class TensorSpace:
    dims: tuple
    basis: np.ndarray          # (N, n) multi-indices, lexicographic
    level: np.ndarray          # total f-degree of each basis vector
    weight_blocks: dict        # ell -> indices into basis
    local: list                # per-factor generator dicts (small matrices)
    gens: dict                 # name -> list of full-space embeddings per factor
    delta: dict                # global sl2 action (additive only)

    @property
    def dim(self) -> int:
        return len(self.basis)

    def block(self, ell: int) -> np.ndarray:
        return self.weight_blocks.get(ell, np.zeros(0, int))

    def index(self, nu) -> int:
        return int(np.ravel_multi_index(tuple(nu), self.dims))

    def vacuum(self) -> np.ndarray:
        v = np.zeros(self.dim, complex)
        v[0] = 1.0
        return v


def build_space(spec: ModelSpec, ell_max: int | None = None) -> TensorSpace:
    if ell_max is None:
        ell_max = spec.ell_max
    if not spec.integral and spec.truncation < ell_max + 1:
        raise SpecError("truncation must be at least ell_max + 1 for generic weights")
    if not spec.well_separated():
        warnings.warn("inhomogeneities are not well separated", RuntimeWarning, stacklevel=2)
    dims = spec.dims
    if min(dims) < 1:
        raise SpecError("nonpositive module dimension")
    basis = np.array(list(itertools.product(*[range(d) for d in dims])), int).reshape(-1, len(dims))
    level = basis.sum(axis=1)
    blocks = {ell: np.nonzero(level == ell)[0] for ell in range(int(level.max()) + 1)}
    local = [local_generators(spec, m) for m in range(spec.n)]
    gens = {name: [_embed(local[m][name], m, dims) for m in range(spec.n)] for name in local[0]}
    delta = {}
    if spec.additive_variant:
        delta = {name: sum(gens[name]) for name in ("e", "f", "h")}
    return TensorSpace(tuple(dims), basis, level, blocks, local, gens, delta)


def weight_dims(spec: ModelSpec) -> dict:
    """dim V[ell] for every ell, counted combinatorially."""
    out = {}
    for nu in itertools.product(*[range(d) for d in spec.dims]):
        out[sum(nu)] = out.get(sum(nu), 0) + 1
    return out


@dataclass
class MonodromyBundle:
    spec: ModelSpec
    space: TensorSpace
    A: OpPoly
    B: OpPoly
    C: OpPoly
    D: OpPoly
    transfer: OpPoly


def _local_lax(spec: ModelSpec, space: TensorSpace, m: int):
    g = {k: v[m] for k, v in space.gens.items()}
    eye = np.eye(space.dim, dtype=complex)
    zm = spec.z[m]
    if spec.additive_variant:
        a = OpPoly([g["h"] - zm * eye, eye])
        b = OpPoly([g["f"]])
        c = OpPoly([g["e"]])
        d = OpPoly([-g["h"] - zm * eye, eye])
    else:
        s = spec.q - 1 / spec.q
        zero = np.zeros_like(eye)
        a = OpPoly([-zm * g["Kinv"], g["K"]])
        b = OpPoly([zero, s * g["f"]])
        c = OpPoly([zm * s * g["e"]])
        d = OpPoly([-zm * g["K"], g["Kinv"]])
    return [[a, b], [c, d]]


def monodromy(spec: ModelSpec, space: TensorSpace) -> MonodromyBundle:
    T = _local_lax(spec, space, 0)
    for m in range(1, spec.n):
        L = _local_lax(spec, space, m)
        T = [[T[i][0] @ L[0][j] + T[i][1] @ L[1][j] for j in range(2)] for i in range(2)]
    A, B, C, D = T[0][0], T[0][1], T[1][0], T[1][1]
    B, C = B.trimmed(), C.trimmed()
    bundle = MonodromyBundle(spec, space, A, B, C, D, A)
    bundle.transfer = transfer(spec, bundle, spec.kappa)
    return bundle


def transfer(spec: ModelSpec, bundle: MonodromyBundle, kappa: complex | None = None) -> OpPoly:
    """A(u) + kappa D(u); kappa defaults to the model coupling."""
    kappa = spec.kappa if kappa is None else kappa
    return bundle.A + bundle.D.scale(kappa)


def singular_projector(space: TensorSpace, ell: int) -> np.ndarray:
    """Matrix of the global e-action from V[ell] to V[ell-1]."""
    if not space.delta:
        raise SpecError("global sl2 action is only built for the additive variant")
    if ell < 0 or ell not in space.weight_blocks:
        raise SpecError(f"ell={ell} out of range")
    if ell == 0:
        return np.zeros((0, 1), complex)
    rows, cols = space.block(ell - 1), space.block(ell)
    return space.delta["e"][np.ix_(rows, cols)]


def sing_dims(space: TensorSpace) -> dict:
    """dim Sing V[ell] = dim V[ell] - rank of e on V[ell]."""
    out = {}
    for ell, idx in space.weight_blocks.items():
        if ell == 0:
            out[ell] = len(idx)
            continue
        M = singular_projector(space, ell)
        s = np.linalg.svd(M, compute_uv=False) if M.size else np.zeros(0)
        rank = int((s > 1e-10 * max(1.0, s.max() if s.size else 1.0)).sum())
        out[ell] = len(idx) - rank
    return out

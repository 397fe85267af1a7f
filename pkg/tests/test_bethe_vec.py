import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bethesov.numkernel import NumericalError
from bethesov.repr_core import ModelSpec, build_space, monodromy
from bethesov.bethe_solve import PathStatus, eigenvalue_tau, seeds_kappa0, track_path
from bethesov.bethe_vec import (basis_rank, bethe_vector_product, bethe_vector_sum, dual_pairing,
                                eigen_residual, norm_determinant, permutation_intertwiner,
                                singular_basis, singular_check)

Z2 = (0.3 + 0.2j, 3.1 - 0.4j)
Z3 = (0.3 + 0.2j, 3.1 - 0.4j, -2.2 + 0.7j)
ADD = ModelSpec.additive([1, 2], Z2, kappa=0.7 + 1.1j)
MUL = ModelSpec.multiplicative([1, 2], (1.0, 3.7), q=1.21, theta=0.8 + 0.6j)


def _bundle(spec):
    return monodromy(spec, build_space(spec))


B_ADD, B_MUL = _bundle(ADD), _bundle(MUL)


def _kappa(spec, ell):
    return spec.kappa if spec.additive_variant else spec.q ** (2 * ell) * spec.theta


def _solutions(spec, ell):
    k = _kappa(spec, ell)
    out = []
    for s in seeds_kappa0(spec, ell):
        if s[0].in_Zlo:
            sol = track_path(spec, s, k)
            assert sol.path_status is PathStatus.CONVERGED
            out.append(sol.t)
    return out


coord = st.complex_numbers(min_magnitude=0.2, max_magnitude=4, allow_nan=False, allow_infinity=False)


@settings(max_examples=40, deadline=None)
@given(st.lists(coord, min_size=1, max_size=3, unique=True), st.sampled_from(["add", "mul"]))
def test_product_matches_partition_sum(t, which):
    spec, b = (ADD, B_ADD) if which == "add" else (MUL, B_MUL)
    t = np.array(t)
    if len(t) > 1 and (np.abs(t[:, None] - t[None, :]) + np.eye(len(t))).min() < 1e-3:
        return
    w1 = bethe_vector_product(b, t).coords
    w2 = bethe_vector_sum(spec, b.space, t).coords
    assert np.linalg.norm(w1 - w2) <= 1e-9 * max(np.linalg.norm(w1), 1e-12)


@settings(max_examples=25, deadline=None)
@given(st.lists(coord, min_size=2, max_size=3), st.randoms())
def test_bethe_vector_is_symmetric(t, rnd):
    t = np.array(t)
    perm = list(range(len(t)))
    rnd.shuffle(perm)
    for b in (B_ADD, B_MUL):
        w = bethe_vector_product(b, t).coords
        ws = bethe_vector_product(b, t[perm]).coords
        assert np.linalg.norm(w - ws) <= 1e-10 * max(np.linalg.norm(w), 1.0)


def test_partition_sum_rejects_diagonal():
    with pytest.raises(NumericalError):
        bethe_vector_sum(ADD, B_ADD.space, np.array([1.0, 1.0]))


@pytest.mark.parametrize("spec,b", [(ADD, B_ADD), (MUL, B_MUL)])
def test_bethe_vectors_are_eigenvectors(spec, b):
    for ell in range(4):
        k = _kappa(spec, ell)
        for t in _solutions(spec, ell):
            tau = eigenvalue_tau(spec, t, k)
            assert eigen_residual(b, t, tau, 2 * spec.n + 2, kappa=k) < 1e-8


def test_eigen_residual_rejects_trivial_vector():
    # the out-of-range string solution gives w = 0
    seed = [s for s in seeds_kappa0(ADD, 2) if not s[0].in_Zlo][0]
    t = track_path(ADD, seed).t
    assert bethe_vector_product(B_ADD, t).norm() < 1e-10
    with pytest.raises(NumericalError, match="trivial"):
        eigen_residual(B_ADD, t, eigenvalue_tau(ADD, t))


@pytest.mark.parametrize("spec,b", [(ADD, B_ADD), (MUL, B_MUL)])
def test_norm_formula_and_orthogonality(spec, b):
    for ell in range(1, 4):
        k = _kappa(spec, ell)
        sols = _solutions(spec, ell)
        diag = [dual_pairing(b, t, t) for t in sols]
        for t, d in zip(sols, diag):
            rhs = norm_determinant(spec, t, k)
            assert abs(d - rhs) < 1e-8 * abs(rhs)
        scale = max(abs(d) for d in diag)
        for t1, t2 in itertools.permutations(sols, 2):
            assert abs(dual_pairing(b, t1, t2)) < 1e-8 * scale


def test_printed_norm_form_differs_beyond_one_root():
    t1 = _solutions(ADD, 1)[0]
    assert np.isclose(norm_determinant(ADD, t1, form="printed"), dual_pairing(B_ADD, t1, t1), rtol=1e-8)
    t2 = _solutions(ADD, 2)[0]
    exact = dual_pairing(B_ADD, t2, t2)
    assert not np.isclose(norm_determinant(ADD, t2, form="printed"), exact, rtol=1e-3)
    with pytest.raises(ValueError):
        norm_determinant(ADD, t2, form="other")


def test_basis_rank_full():
    for ell, want in enumerate((1, 2, 2, 1)):
        vecs = [bethe_vector_product(B_ADD, t) for t in _solutions(ADD, ell)]
        rank, cond = basis_rank(vecs, ell)
        assert rank == want and cond < 1e6


def test_singular_vectors_at_symmetric_point():
    spec = ModelSpec.additive([1, 1, 1], Z3, kappa=1)
    b = _bundle(spec)
    vecs = []
    for s in seeds_kappa0(spec, 1):
        sol = track_path(spec, s)
        if sol.path_status is PathStatus.CONVERGED and sol.admissible:
            w = bethe_vector_product(b, sol.t)
            assert singular_check(b.space, w) < 1e-8
            vecs.append(w)
    S = singular_basis(b.space, 1)
    assert S.shape == (3, 2)
    assert basis_rank(vecs, 1, restrict=S)[0] == 2


def test_permutation_intertwiner():
    M, worst = permutation_intertwiner(ADD, (1, 0), rng=np.random.default_rng(3))
    assert worst < 1e-8
    assert M.shape == (6, 6)

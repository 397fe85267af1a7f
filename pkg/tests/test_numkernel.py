import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bethesov.numkernel import (CPoly, NumericalError, OpPoly, ToleranceProfile, commutator,
                                commuting_diag, matrix_rank, oppoly_apply, poly_eval, poly_roots)

cplx = st.complex_numbers(max_magnitude=5, allow_nan=False, allow_infinity=False)


def test_tolerance_defaults_and_validation():
    tol = ToleranceProfile()
    assert (tol.residual_tol, tol.dedup_tol, tol.rank_tol, tol.margin_tol) == (1e-10, 1e-7, 1e-8, 1e-6)
    with pytest.raises(ValueError):
        ToleranceProfile(residual_tol=0)
    with pytest.raises(ValueError):
        ToleranceProfile(residual_tol=1e-6, dedup_tol=1e-7)


def test_cpoly_strips_trailing_zeros():
    p = CPoly([1, 2, 0, 0])
    assert p.degree() == 1
    assert CPoly([0, 0]).is_zero() and CPoly().degree() == -1


def test_cpoly_arithmetic():
    p, q = CPoly([1, 1]), CPoly([-1, 1])
    assert np.allclose((p * q).coeffs, [-1, 0, 1])
    assert np.allclose((p + q).coeffs, [0, 2])
    assert (p - p).is_zero()
    assert np.allclose(p.scale(2j).coeffs, [2j, 2j])


def test_from_roots_lead():
    p = CPoly.from_roots([1, 2], lead=3)
    assert np.allclose(p.coeffs, [6, -9, 3])


@given(st.lists(cplx, min_size=1, max_size=6), cplx)
def test_poly_eval_matches_numpy(c, u):
    p = CPoly(c)
    assert np.isclose(poly_eval(p, u), np.polyval(np.asarray(c, complex)[::-1], u), atol=1e-9)


def test_poly_eval_array():
    p = CPoly([1, 0, 1])
    u = np.array([0, 1j, 2])
    assert np.allclose(p(u), [1, 0, 5])


@settings(max_examples=60, deadline=None)
@given(st.lists(cplx, min_size=1, max_size=5, unique=True))
def test_roots_recover_well_separated_roots(roots):
    roots = np.array(roots)
    gaps = np.abs(roots[:, None] - roots[None, :]) + np.eye(len(roots))
    if gaps.min() < 0.1:
        return
    found = poly_roots(CPoly.from_roots(roots))
    for r in roots:
        assert np.min(np.abs(found - r)) < 1e-7 * (1 + abs(r))


def test_roots_degenerate_input():
    with pytest.raises(NumericalError):
        poly_roots(CPoly([3.0]))
    with pytest.raises(NumericalError):
        poly_roots(CPoly())


def test_oppoly_matmul_evaluates_pointwise():
    rng = np.random.default_rng(1)
    A = OpPoly(rng.normal(size=(3, 4, 4)) + 1j * rng.normal(size=(3, 4, 4)))
    B = OpPoly(rng.normal(size=(2, 4, 4)))
    for u in (0.3, -1.1 + 0.5j):
        assert np.allclose((A @ B)(u), A(u) @ B(u))
        assert np.allclose((A + B)(u), A(u) + B(u))
    v = rng.normal(size=4)
    assert np.allclose(oppoly_apply(A, 0.7j, v), A(0.7j) @ v)
    with pytest.raises(ValueError):
        oppoly_apply(A, 0.1, np.ones(3))


def test_oppoly_trimmed():
    P = OpPoly(np.stack([np.eye(2), np.zeros((2, 2))]))
    assert P.trimmed().degree() == 0


def test_matrix_rank():
    M = np.outer([1, 2, 3], [1, 1]).astype(complex)
    r, cond = matrix_rank(M)
    assert r == 1 and cond == pytest.approx(1.0)
    assert matrix_rank(np.eye(3))[0] == 3
    assert matrix_rank(np.zeros((0, 0)))[0] == 0


def _family(rng, dim=5, count=3):
    V = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    Vi = np.linalg.inv(V)
    diags = rng.normal(size=(count, dim)) + 1j * rng.normal(size=(count, dim))
    return [V @ np.diag(d) @ Vi for d in diags], diags


def test_commuting_diag_joint_eigenvalues():
    rng = np.random.default_rng(7)
    fam, diags = _family(rng)
    ev, vecs = commuting_diag(fam, rng=np.random.default_rng(0))
    for j, M in enumerate(fam):
        assert np.allclose(M @ vecs, vecs * ev[j], atol=1e-8)
    got = sorted(map(tuple, np.round(ev.T, 6).tolist()), key=lambda x: (x[0].real, x[0].imag))
    want = sorted(map(tuple, np.round(diags.T, 6).tolist()), key=lambda x: (x[0].real, x[0].imag))
    assert np.allclose(np.array(got), np.array(want), atol=1e-5)


def test_commuting_diag_rejects_noncommuting():
    A = np.array([[0, 1], [0, 0]], complex)
    with pytest.raises(NumericalError, match="not a commuting family"):
        commuting_diag([A, A.T])


def test_commuting_diag_degenerate_spectrum():
    with pytest.raises(NumericalError, match="degenerate spectrum"):
        commuting_diag([np.eye(3)])
    ev, vecs = commuting_diag([np.eye(3)], allow_degenerate=True)
    assert ev.shape == (1, 1) and np.isclose(ev[0, 0], 1)


def test_commuting_diag_defective_cluster():
    J = np.array([[2, 1], [0, 2]], complex)
    ev, vecs = commuting_diag([J], allow_degenerate=True)
    assert ev.shape[1] == 1
    assert np.isclose(ev[0, 0], 2)
    assert np.linalg.norm(J @ vecs[:, 0] - 2 * vecs[:, 0]) < 1e-8


def test_commutator():
    A = np.array([[0, 1], [0, 0]])
    assert np.allclose(commutator(A, A.T), np.diag([1, -1]))

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bethesov.numkernel import commutator
from bethesov.repr_core import (ModelSpec, SpecError, Variant, build_space, local_generators,
                                monodromy, qint, sing_dims, singular_projector, transfer, weight_dims)

Z2 = (0.3 + 0.2j, 3.1 - 0.4j)
Z3 = (0.3 + 0.2j, 3.1 - 0.4j, -2.2 + 0.7j)


def test_dims_and_weight_spaces():
    spec = ModelSpec.additive([1, 2], Z2)
    assert spec.dims == (2, 3)
    assert spec.ell_max == 3
    assert weight_dims(spec) == {0: 1, 1: 2, 2: 2, 3: 1}


def test_multiplicative_weights_are_half_degrees():
    spec = ModelSpec.multiplicative([1, 2], (1.0, 3.7), q=1.21)
    assert spec.lam == (0.5, 1.0)
    assert np.isclose(spec.qpow(2 * spec.lam[1]), 1.21 ** 2)


def test_spec_errors():
    with pytest.raises(SpecError):
        ModelSpec(Variant.MULTIPLICATIVE, (0.5,), (1.0,))
    with pytest.raises(SpecError):
        ModelSpec.multiplicative([1], (0.0,), q=1.2)
    with pytest.raises(SpecError):
        ModelSpec(Variant.ADDITIVE, (0.3,), (0.0,))
    with pytest.raises(SpecError):
        ModelSpec.additive([1, 1], (0.0,))


def test_generic_weight_needs_deep_truncation():
    spec = ModelSpec(Variant.ADDITIVE, (0.3 + 0.1j,), (0.0,), truncation=2)
    with pytest.raises(SpecError):
        build_space(spec, ell_max=2)
    space = build_space(spec, ell_max=1)
    assert space.dim == 3


@pytest.mark.parametrize("two_lam", [1, 2, 3])
def test_local_sl2_relations_additive(two_lam):
    spec = ModelSpec.additive([two_lam], (0.0,))
    g = local_generators(spec, 0)
    assert np.allclose(commutator(g["e"], g["f"]), 2 * g["h"])
    assert np.allclose(commutator(g["h"], g["e"]), g["e"])


@pytest.mark.parametrize("d", [1, 2, 3])
def test_local_quantum_relations(d):
    spec = ModelSpec.multiplicative([d], (1.0,), q=1.3 + 0.1j)
    g = local_generators(spec, 0)
    q = spec.q
    K, Ki = g["K"], g["Kinv"]
    assert np.allclose(commutator(g["e"], g["f"]), (K @ K - Ki @ Ki) / (q - 1 / q))
    assert np.allclose(K @ g["e"] @ Ki, q * g["e"])


def test_qint():
    spec = ModelSpec.multiplicative([1], (1.0,), q=1.5)
    assert np.isclose(qint(spec, 2), 1.5 + 1 / 1.5)


@pytest.mark.parametrize("spec", [
    ModelSpec.additive([1, 2], Z2, kappa=0.7 + 0.4j),
    ModelSpec.multiplicative([1, 2], (1.0, 3.7), q=1.21, kappa=0.6 - 0.2j),
])
def test_transfer_commutes_and_preserves_weight(spec):
    space = build_space(spec)
    bundle = monodromy(spec, space)
    T = bundle.transfer
    u, v = 0.37 + 0.21j, -1.3 + 0.8j
    Tu, Tv = T(u), T(v)
    assert np.linalg.norm(commutator(Tu, Tv)) < 1e-10 * np.linalg.norm(Tu) * np.linalg.norm(Tv)
    Bu, Bv = bundle.B(u), bundle.B(v)
    assert np.linalg.norm(commutator(Bu, Bv)) < 1e-10 * np.linalg.norm(Bu) * np.linalg.norm(Bv)
    for ell, idx in space.weight_blocks.items():
        other = np.setdiff1d(np.arange(space.dim), idx)
        assert np.abs(Tu[np.ix_(other, idx)]).max(initial=0) < 1e-12 * np.abs(Tu).max()


def test_transfer_kappa_override():
    spec = ModelSpec.additive([1], (0.0,), kappa=2.0)
    b = monodromy(spec, build_space(spec))
    T3 = transfer(spec, b, 3.0)
    assert np.allclose(T3(0.5), b.A(0.5) + 3.0 * b.D(0.5))


def test_monodromy_degrees():
    spec = ModelSpec.additive([1, 1, 1], Z3)
    b = monodromy(spec, build_space(spec))
    assert b.A.degree() == 3 and b.B.degree() == 2


def test_vacuum_eigenvalues_additive():
    # A v = prod (u - z + L) v and D v = prod (u - z - L) v
    spec = ModelSpec.additive([1, 2], Z2)
    b = monodromy(spec, build_space(spec))
    u = 0.9 - 0.3j
    v = b.space.vacuum()
    a = np.prod([u - z + l for z, l in zip(spec.z, spec.lam)])
    d = np.prod([u - z - l for z, l in zip(spec.z, spec.lam)])
    assert np.allclose(b.A(u) @ v, a * v)
    assert np.allclose(b.D(u) @ v, d * v)


def test_sing_dims_three_spin_halves():
    # 1/2 x 1/2 x 1/2 = 3/2 + 2 * 1/2
    spec = ModelSpec.additive([1, 1, 1], Z3, kappa=1)
    assert sing_dims(build_space(spec)) == {0: 1, 1: 2, 2: 0, 3: 0}


def test_singular_projector_shapes():
    spec = ModelSpec.additive([1, 1], Z2)
    space = build_space(spec)
    assert singular_projector(space, 0).shape == (0, 1)
    assert singular_projector(space, 1).shape == (1, 2)
    with pytest.raises(SpecError):
        singular_projector(space, 5)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.integers(0, 3), min_size=1, max_size=3))
def test_weight_dims_sum_to_total(two_lam):
    z = [3.0 * k + 0.1j for k in range(len(two_lam))]
    spec = ModelSpec.additive(two_lam, z)
    wd = weight_dims(spec)
    assert sum(wd.values()) == int(np.prod([k + 1 for k in two_lam]))
    # weight multiplicities are palindromic
    top = spec.ell_max
    assert all(wd[k] == wd[top - k] for k in wd)


def test_well_separated_warning():
    spec = ModelSpec.additive([1, 1], (0.0, 1.0))
    assert not spec.well_separated()
    with pytest.warns(RuntimeWarning):
        build_space(spec)

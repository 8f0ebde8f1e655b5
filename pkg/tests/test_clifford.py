import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from diraclab.clifford import anticommutator_defect, build_rep, clifford_mul

finite = st.floats(-10, 10, allow_nan=False)


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6, 7])
def test_relations_hold_exactly(n):
    rep = build_rep(n)
    assert rep.spinor_dim == 2 ** (n // 2)
    assert anticommutator_defect(rep) == 0.0
    eye = np.eye(rep.spinor_dim)
    for g in rep.generators:
        np.testing.assert_array_equal(g.conj().T, -g)
        np.testing.assert_array_equal(g.conj().T @ g, eye)


def test_n2_generators():
    g1, g2 = build_rep(2).generators
    assert g1.shape == (2, 2)
    np.testing.assert_array_equal(g1 @ g2 + g2 @ g1, np.zeros((2, 2)))
    np.testing.assert_array_equal(g1 @ g1, -np.eye(2))


def test_n3_volume_element_is_scalar():
    # with e.e = -1 the product of three generators squares to +1, so it is +-1
    rep = build_rep(3)
    g1, g2, g3 = rep.generators
    prod = g1 @ g2 @ g3
    assert np.allclose(prod @ prod, np.eye(2), atol=0)
    assert np.allclose(prod, prod[0, 0] * np.eye(2), atol=0)
    assert prod[0, 0] in (1, -1)
    np.testing.assert_array_equal(rep.volume_element(), -np.eye(2))


def test_n4_pairwise_anticommuting():
    gens = build_rep(4).generators
    assert gens.shape == (4, 4, 4)
    for i in range(4):
        for j in range(i + 1, 4):
            np.testing.assert_array_equal(gens[i] @ gens[j], -gens[j] @ gens[i])


def test_deterministic():
    a, b = build_rep(5), build_rep(5)
    np.testing.assert_array_equal(a.generators, b.generators)


@pytest.mark.parametrize("bad", [1, 0, -3, 2.5])
def test_rejects_small_dimension(bad):
    with pytest.raises(ValueError):
        build_rep(bad)


def test_dimension_mismatch(rep2):
    with pytest.raises(ValueError):
        clifford_mul(rep2, np.ones(3), np.ones(2))
    with pytest.raises(ValueError):
        clifford_mul(rep2, np.ones(2), np.ones(4))


def test_unit_vector_squares_to_minus_one(rep2, rng):
    psi = rng.normal(size=2) + 1j * rng.normal(size=2)
    e1 = np.array([1.0, 0.0])
    np.testing.assert_allclose(clifford_mul(rep2, e1, clifford_mul(rep2, e1, psi)), -psi, atol=1e-15)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(2, 6), data=st.data())
def test_clifford_square_norm_and_skewness(n, data):
    rep = build_rep(n)
    N = rep.spinor_dim
    v = data.draw(arrays(float, n, elements=finite))
    re = data.draw(arrays(float, (2, N), elements=finite))
    im = data.draw(arrays(float, (2, N), elements=finite))
    psi, chi = re[0] + 1j * im[0], re[1] + 1j * im[1]
    vpsi = clifford_mul(rep, v, psi)
    scale = 1 + np.dot(v, v) * np.vdot(psi, psi).real
    # (v.)^2 = -|v|^2
    np.testing.assert_allclose(clifford_mul(rep, v, vpsi), -np.dot(v, v) * psi, atol=1e-12 * scale)
    # |v.psi|^2 = |v|^2 |psi|^2 against a direct matrix product
    direct = sum(vk * g for vk, g in zip(v, rep.generators)) @ psi
    np.testing.assert_allclose(vpsi, direct, atol=1e-12 * scale)
    assert abs(np.vdot(vpsi, vpsi).real - np.dot(v, v) * np.vdot(psi, psi).real) <= 1e-11 * scale
    # <v.psi, psi> is imaginary; <v.psi, chi> = -<psi, v.chi>
    assert abs(np.vdot(psi, vpsi).real) <= 1e-11 * scale
    lhs = np.vdot(chi, vpsi)
    rhs = -np.vdot(clifford_mul(rep, v, chi), psi)
    assert abs(lhs - rhs) <= 1e-11 * (scale + np.vdot(chi, chi).real * (1 + np.dot(v, v)))


def test_linear_in_vector_and_spinor(rep3, rng):
    v, w = rng.normal(size=3), rng.normal(size=3)
    psi, chi = rng.normal(size=2) + 0j, 1j * rng.normal(size=2)
    a, b = 0.7, -1.3 + 0.2j
    np.testing.assert_allclose(
        clifford_mul(rep3, a * v + 2 * w, psi),
        a * clifford_mul(rep3, v, psi) + 2 * clifford_mul(rep3, w, psi), atol=1e-14)
    np.testing.assert_allclose(
        clifford_mul(rep3, v, psi + b * chi),
        clifford_mul(rep3, v, psi) + b * clifford_mul(rep3, v, chi), atol=1e-14)


def test_broadcast_fields(rep2, rng):
    v = rng.normal(size=(5, 7, 2))
    psi = rng.normal(size=(5, 7, 2)) + 0j
    out = clifford_mul(rep2, v, psi)
    np.testing.assert_allclose(out[3, 4], clifford_mul(rep2, v[3, 4], psi[3, 4]))

import math

import numpy as np
import pytest
from scipy import integrate

from diraclab.clifford import build_rep, clifford_mul
from diraclab.flatmodel import (
    SphereConstants, conformal_factor, convergence_order, euclidean_killing_spinor, killing_residual,
    sphere_invariant, sphere_volume,
)


def test_conformal_factor_values():
    assert conformal_factor(np.zeros(3)) == 2.0
    assert conformal_factor(np.array([1.0, 0.0])) == 1.0
    assert conformal_factor(np.array([0.6, 0.8])) == 1.0
    x = np.random.default_rng(0).normal(size=(100, 4))
    f = conformal_factor(x)
    assert np.all((f > 0) & (f <= 2))


def test_f_squared_integrates_to_sphere_area():
    # stereographic projection is volume preserving: int_{R^2} f^2 = omega_2 = 4 pi
    val, err = integrate.quad(lambda r: 2 * np.pi * r * conformal_factor(np.array([r, 0.0])) ** 2, 0, np.inf)
    assert abs(val - 4 * np.pi) < 1e-9


def test_f_cubed_integrates_to_three_sphere_volume():
    val, _ = integrate.quad(lambda r: 4 * np.pi * r**2 * (2 / (1 + r * r)) ** 3, 0, np.inf)
    assert abs(val - 2 * np.pi**2) < 1e-9
    assert sphere_volume(3) == pytest.approx(2 * np.pi**2, rel=1e-15)


def test_sphere_invariant_values():
    assert sphere_invariant(2) == pytest.approx(2 * math.sqrt(math.pi), rel=1e-15)
    assert sphere_invariant(2) == pytest.approx(3.5449077, abs=1e-7)
    assert sphere_invariant(3) == pytest.approx(1.5 * (2 * math.pi**2) ** (1 / 3), rel=1e-15)
    assert sphere_invariant(3) == pytest.approx(4.0538, abs=1e-4)
    c = SphereConstants.for_dimension(2)
    assert c.omega_n == pytest.approx(4 * math.pi) and c.lambda_sphere > 0


def test_sphere_invariant_large_n():
    # omega_n^(1/n) ~ sqrt(2 pi e / n), so the ratio to n/2 decays rather than tending to 1
    ns = (10, 100, 1000, 10000)
    ratios = [sphere_invariant(n) / (n / 2) for n in ns]
    assert ratios == sorted(ratios, reverse=True)
    scaled = [r / math.sqrt(2 * math.pi * math.e / n) for r, n in zip(ratios, ns)]
    assert abs(scaled[-1] - 1) < 1e-3
    assert all(abs(a - 1) > abs(b - 1) for a, b in zip(scaled, scaled[1:]))


@pytest.mark.parametrize("bad", [1, 0])
def test_sphere_invariant_rejects(bad):
    with pytest.raises(ValueError):
        sphere_invariant(bad)


@pytest.mark.parametrize("n", [2, 3, 4])
@pytest.mark.parametrize("sign", [1, -1])
def test_killing_spinor_at_origin(n, sign, rng):
    rep = build_rep(n)
    psi0 = rng.normal(size=rep.spinor_dim) + 0j
    np.testing.assert_allclose(euclidean_killing_spinor(rep, sign, psi0, np.zeros(n), 1.0), 2 ** (n / 2) * psi0)


@pytest.mark.parametrize("n", [2, 3])
@pytest.mark.parametrize("sign", [1, -1])
def test_killing_spinor_pointwise_norm(n, sign, rng):
    rep = build_rep(n)
    psi0 = rng.normal(size=rep.spinor_dim) + 1j * rng.normal(size=rep.spinor_dim)
    eps = 0.3
    x = rng.normal(size=(50, n))
    phi = euclidean_killing_spinor(rep, sign, psi0, x, eps)
    y2 = np.sum((x / eps) ** 2, axis=-1)
    expected = (2 / (1 + y2)) ** n * (1 + y2) * np.vdot(psi0, psi0).real
    np.testing.assert_allclose(np.sum(np.abs(phi) ** 2, axis=-1), expected, rtol=1e-12)


def test_killing_norm_is_radial(rep3, rng):
    psi0 = rng.normal(size=2) + 0j
    d = rng.normal(size=(20, 3))
    d /= np.linalg.norm(d, axis=-1, keepdims=True)
    phi = euclidean_killing_spinor(rep3, 1, psi0, 0.7 * d, 0.5)
    norms = np.sum(np.abs(phi) ** 2, axis=-1)
    np.testing.assert_allclose(norms, norms[0], rtol=1e-12)


@pytest.mark.parametrize("n", [2, 3])
@pytest.mark.parametrize("sign", [1, -1])
@pytest.mark.parametrize("eps", [1.0, 0.25])
def test_killing_identity_second_order(n, sign, eps, rng):
    rep = build_rep(n)
    psi0 = rng.normal(size=rep.spinor_dim) + 1j * rng.normal(size=rep.spinor_dim)
    x = rng.uniform(-2 * eps, 2 * eps, size=(30, n))
    hs = np.array([1e-2, 5e-3, 2.5e-3]) * eps
    res = [killing_residual(rep, sign, psi0, x, eps, h) for h in hs]
    assert res[0] > res[1] > res[2]
    assert convergence_order(hs, res) > 1.9


def test_killing_wrong_sign_fails(rep2, rng):
    # the '-' spinor is an eigenspinor for the negative multiplier only
    psi0 = np.array([1.0, 0.5j])
    x = rng.uniform(-1, 1, size=(10, 2))
    y = x
    phi = euclidean_killing_spinor(rep2, -1, psi0, x, 1.0)
    phi_plus = euclidean_killing_spinor(rep2, 1, psi0, x, 1.0)
    assert not np.allclose(phi, phi_plus)
    h = 1e-4
    d = sum((euclidean_killing_spinor(rep2, -1, psi0, y + h * e, 1.0)
             - euclidean_killing_spinor(rep2, -1, psi0, y - h * e, 1.0)) / (2 * h) @ g.T
            for e, g in zip(np.eye(2), rep2.generators))
    f = conformal_factor(x)[:, None]
    assert np.abs(d + f * phi).max() < 1e-6
    assert np.abs(d - f * phi).max() > 0.1


def test_clifford_term_is_skew(rep2):
    psi0 = np.array([1.0, 2.0j])
    x = np.array([0.3, -0.4])
    phi = euclidean_killing_spinor(rep2, 1, psi0, x, 1.0)
    f = conformal_factor(x)
    np.testing.assert_allclose(phi, f * (psi0 - clifford_mul(rep2, x, psi0)))

import math

import numpy as np
import pytest

from diraclab.invariant import BasisMode, ConformalSearchSpace, minimize, normalized_eigenvalue
from diraclab.torus import NearKernelError, SpinStructure, grid_points

HALF0 = SpinStructure((0.5, 0.0))


def test_search_space_shape():
    s = ConformalSearchSpace.low_frequency(2)
    assert s.dim == 5
    assert [m.label() for m in s.modes] == ["1", "cos[1, 0]", "sin[1, 0]", "cos[0, 1]", "sin[0, 1]"]
    assert ConformalSearchSpace.low_frequency(3, max_freq=2).dim == 13
    assert ConformalSearchSpace.constant_only(2).dim == 1


def test_field_stays_within_bound(rng):
    s = ConformalSearchSpace.low_frequency(2, bound=1.5)
    theta = rng.uniform(-1, 1, size=s.dim)
    theta *= s.coefficient_bound / np.abs(theta).max()
    theta = np.sign(theta) * s.coefficient_bound
    u = s.field(theta, 32)
    assert np.abs(u).max() <= 1.5 + 1e-12
    with pytest.raises(ValueError):
        s.field(np.zeros(3), 8)


def test_basis_modes_are_periodic():
    x = grid_points(2, 8)
    mode = BasisMode("sin", (0, 1))
    np.testing.assert_allclose(mode(x + np.array([0.0, 1.0])), mode(x), atol=1e-13)
    assert np.all(BasisMode("const", (0, 0))(x) == 1)


def test_flat_value_is_pi_for_both_branches():
    s = ConformalSearchSpace.low_frequency(2)
    plus = normalized_eigenvalue(np.zeros(s.dim), s, HALF0, 1, m=16)
    minus = normalized_eigenvalue(np.zeros(s.dim), s, HALF0, -1, m=16)
    assert plus == pytest.approx(np.pi, rel=1e-12)
    assert minus == pytest.approx(plus, rel=1e-12)


def test_constant_shift_invariance():
    s = ConformalSearchSpace.low_frequency(2)
    base = normalized_eigenvalue(np.zeros(s.dim), s, HALF0, 1, m=16)
    for c in (0.25, -0.3):
        theta = np.zeros(s.dim)
        theta[0] = c
        assert abs(normalized_eigenvalue(theta, s, HALF0, 1, m=16) - base) < 1e-12 * base


def test_conformal_factor_changes_eigenvalue_but_stays_positive():
    s = ConformalSearchSpace.low_frequency(2)
    theta = np.array([0.0, 0.3, 0.0, 0.0, -0.2])
    val = normalized_eigenvalue(theta, s, HALF0, 1, m=16)
    assert val > 0 and abs(val - np.pi) > 1e-4


def test_trivial_structure_rejected():
    s = ConformalSearchSpace.low_frequency(2)
    with pytest.raises(NearKernelError):
        normalized_eigenvalue(np.zeros(s.dim), s, SpinStructure((0, 0)))


def test_constant_only_search_returns_flat_value():
    est = minimize(ConformalSearchSpace.constant_only(2), HALF0, 1, budget=10, m=16)
    assert est.value == est.flat_value
    assert all(abs(v - est.flat_value) < 1e-12 * est.flat_value for v in est.evaluations)


@pytest.mark.parametrize("sign", [1, -1])
def test_minimize_contract(sign):
    est = minimize(ConformalSearchSpace.low_frequency(2), HALF0, sign, budget=15, m=16)
    assert est.sign == sign
    assert 0 < est.value <= est.flat_value
    assert np.all(np.diff(est.history) <= 0)
    assert est.history[0] == est.flat_value == pytest.approx(np.pi, rel=1e-12)
    assert len(est.evaluations) <= 15
    assert est.value <= 2 * math.sqrt(math.pi) + 1e-3


def test_budget_exhaustion_flag():
    est = minimize(ConformalSearchSpace.low_frequency(2), HALF0, 1, budget=3, m=16)
    assert est.budget_exhausted and len(est.evaluations) == 3
    with pytest.raises(ValueError):
        minimize(ConformalSearchSpace.low_frequency(2), HALF0, 1, budget=0)

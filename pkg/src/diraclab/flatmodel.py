"""Euclidean model of the round sphere: conformal factor and Killing spinors."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from diraclab.clifford import CliffordRep, clifford_mul


def sphere_volume(n: int) -> float:
    """Volume of the unit round sphere S^n, ``2 pi^((n+1)/2) / Gamma((n+1)/2)``."""
    if n < 0:
        raise ValueError("sphere dimension must be >= 0")
    return math.exp(math.log(2.0) + 0.5 * (n + 1) * math.log(math.pi) - math.lgamma((n + 1) / 2))


def sphere_invariant(n: int) -> float:
    """``(n/2) * omega_n^(1/n)``, the normalized first Dirac eigenvalue of S^n."""
    if int(n) != n or n < 2:
        raise ValueError(f"dimension must be an integer >= 2, got {n!r}")
    log_omega = math.log(2.0) + 0.5 * (n + 1) * math.log(math.pi) - math.lgamma((n + 1) / 2)
    return 0.5 * n * math.exp(log_omega / n)


@dataclass(frozen=True)
class SphereConstants:
    n: int
    omega_n: float
    lambda_sphere: float

    @classmethod
    def for_dimension(cls, n: int) -> "SphereConstants":
        return cls(n=n, omega_n=sphere_volume(n), lambda_sphere=sphere_invariant(n))


def conformal_factor(x) -> np.ndarray | float:
    """``2 / (1 + |x|^2)``; ``x`` has trailing axis n."""
    x = np.asarray(x, dtype=float)
    out = 2.0 / (1.0 + np.sum(x * x, axis=-1))
    return float(out) if out.ndim == 0 else out


def radial_factor(r) -> np.ndarray | float:
    """The conformal factor as a function of ``r = |x|``."""
    return 2.0 / (1.0 + np.square(r))


def _sign(sign) -> int:
    if sign in (1, "+"):
        return 1
    if sign in (-1, "-"):
        return -1
    raise ValueError(f"sign must be +1/-1 or '+'/'-', got {sign!r}")


def euclidean_killing_spinor(rep: CliffordRep, sign, psi0, x, eps: float = 1.0) -> np.ndarray:
    """Pulled-back Killing spinor ``f(|x|/eps)^(n/2) (psi0 -+ (x/eps) . psi0)``.

    With ``sign=+1`` the field solves ``D phi = +(n/2)(1/eps) f phi``, with
    ``sign=-1`` it solves ``D phi = -(n/2)(1/eps) f phi``.
    """
    s = _sign(sign)
    if eps <= 0:
        raise ValueError("eps must be positive")
    psi0 = np.asarray(psi0, dtype=complex)
    y = np.asarray(x, dtype=float) / eps
    f = np.asarray(conformal_factor(y))[..., None]
    base = np.broadcast_to(psi0, y.shape[:-1] + psi0.shape)
    return f ** (rep.n / 2) * (base - s * clifford_mul(rep, y, base))


def killing_eigenfunction(rep: CliffordRep, sign, x, eps: float = 1.0) -> np.ndarray:
    """The pointwise multiplier ``+-(n/2)(1/eps) f(|x|/eps)`` with ``D phi = mu phi``."""
    s = _sign(sign)
    y = np.asarray(x, dtype=float) / eps
    return s * 0.5 * rep.n / eps * np.asarray(conformal_factor(y))


def killing_residual(rep: CliffordRep, sign, psi0, x, eps: float, h: float) -> float:
    """Max over points of ``|D_h phi - mu phi|`` with D_h the central-difference
    Dirac operator of step h and ``mu = +-(n/2)(1/eps) f(|x|/eps)``."""
    x = np.asarray(x, dtype=float)
    n = rep.n
    dphi = 0.0
    for k in range(n):
        e = np.zeros(n)
        e[k] = h
        diff = (euclidean_killing_spinor(rep, sign, psi0, x + e, eps)
                - euclidean_killing_spinor(rep, sign, psi0, x - e, eps)) / (2 * h)
        dphi = dphi + diff @ rep.generators[k].T
    mu = killing_eigenfunction(rep, sign, x, eps)[..., None]
    res = dphi - mu * euclidean_killing_spinor(rep, sign, psi0, x, eps)
    return float(np.sqrt(np.sum(np.abs(res) ** 2, axis=-1)).max())


def convergence_order(steps, residuals) -> float:
    """Least-squares slope of log(residual) against log(step)."""
    slope, _ = np.polyfit(np.log(steps), np.log(residuals), 1)
    return float(slope)

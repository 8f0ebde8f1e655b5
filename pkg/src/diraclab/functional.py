"""The conformally invariant spinor functional and its test-spinor families.

``J(psi) = (int |D psi|^(2n/(n+1)))^((n+1)/n) / |int <D psi, psi>|``

The infimum of J over spinors with positive (negative) denominator is the
conformal invariant lambda_min^+ (lambda_min^-).  Two families of test
spinors concentrate at a point p as eps -> 0:

* the *simple* family ``eta(r) phi(x / eps)``, a cut-off Euclidean Killing
  spinor, whose J tends to the sphere value ``(n/2) omega_n^(1/n)``;
* the *three-zone* family, which glues the Killing spinor to the Green's
  function of D across the annulus rho <= r <= 2 rho.

Both families have ``D psi = 0`` outside the ball of radius 2 rho, so J is
evaluated by a polar quadrature on that ball with radial panels graded
towards the concentration scale eps.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from diraclab.clifford import CliffordRep, clifford_mul
from diraclab.flatmodel import _sign, euclidean_killing_spinor, radial_factor, sphere_invariant
from diraclab.green import TorusGreen
from diraclab.torus import ConformalDirac, SpinStructure, grid_points

log = logging.getLogger(__name__)


class OrthogonalSpinorError(ArithmeticError):
    """``int <D psi, psi>`` vanishes, so J is undefined."""


class ChartSizeError(ValueError):
    pass


@dataclass(frozen=True)
class JValue:
    value: float
    sign: int
    numerator: float
    denominator: float  # signed int <D psi, psi>

    def __float__(self) -> float:
        return self.value


def functional_value(dpsi: np.ndarray, psi: np.ndarray, weights: np.ndarray, n: int,
                     tol: float = 1e-12) -> JValue:
    """J from samples of ``D psi`` and ``psi`` and quadrature weights (spinor axis last)."""
    w = np.asarray(weights, dtype=float)
    q = 2.0 * n / (n + 1)
    mod = np.sqrt(np.sum(np.abs(dpsi) ** 2, axis=-1))
    num = float(np.sum(w * mod**q)) ** ((n + 1) / n)
    pairing = np.sum(w * np.sum(dpsi * np.conj(psi), axis=-1))
    den = float(pairing.real)
    scale = float(np.sum(w * mod * np.sqrt(np.sum(np.abs(psi) ** 2, axis=-1))))
    if scale == 0.0:
        raise OrthogonalSpinorError("test spinor is D-harmonic or zero")
    if abs(den) <= tol * scale:
        raise OrthogonalSpinorError(f"int <D psi, psi> = {den:.3e} vanishes relative to {scale:.3e}")
    return JValue(value=num / abs(den), sign=1 if den > 0 else -1, numerator=num, denominator=den)


def J(psi: np.ndarray, u, rep: CliffordRep, spin: SpinStructure, tol: float = 1e-12) -> JValue:
    """J of a grid spinor field in the metric ``exp(2u) g`` on the torus."""
    op = ConformalDirac(rep, spin, u)
    dpsi = op.apply(psi)
    return functional_value(dpsi, psi, op.weights, rep.n, tol=tol)


# --------------------------------------------------------------------------
# Test-spinor data


@dataclass(frozen=True)
class CutoffProfile:
    """``eta = 1`` on r <= rho, ``cos^2(pi (r - rho) / (2 rho))`` on the annulus, 0 beyond.

    The slope is at most ``pi / (2 rho) < 2 / rho``.
    """

    rho: float

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        t = np.clip((r - self.rho) / self.rho, 0.0, 1.0)
        return np.where(t < 1.0, np.cos(0.5 * np.pi * t) ** 2, 0.0)

    def derivative(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        t = (r - self.rho) / self.rho
        inside = (t > 0) & (t < 1)
        return np.where(inside, -0.5 * np.pi / self.rho * np.sin(np.pi * np.clip(t, 0, 1)), 0.0)

    def max_slope(self) -> float:
        return 0.5 * np.pi / self.rho


@dataclass(frozen=True)
class TestSpinorParams:
    epsilon: float
    n: int
    sign: int = 1
    psi0: np.ndarray = field(default=None, compare=False)
    nu: float = 0.0

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        object.__setattr__(self, "sign", _sign(self.sign))
        if self.psi0 is None:
            N = 2 ** (self.n // 2)
            object.__setattr__(self, "psi0", np.eye(N, dtype=complex)[0])
        psi0 = np.asarray(self.psi0, dtype=complex)
        if np.linalg.norm(psi0) == 0:
            raise ValueError("psi0 must be nonzero")
        object.__setattr__(self, "psi0", psi0)

    @property
    def rho(self) -> float:
        return self.epsilon ** (1.0 / (self.n + 1))

    @property
    def f_rho(self) -> float:
        """``f(rho / eps)^(n/2)``."""
        return float(radial_factor(self.rho / self.epsilon)) ** (self.n / 2)

    @property
    def epsilon_0(self) -> float:
        return self.rho**self.n / self.epsilon * self.f_rho

    def check_chart(self, half_width: float = 0.5) -> None:
        if 2 * self.rho >= half_width:
            raise ChartSizeError(
                f"2 rho = {2 * self.rho:.4f} does not fit in the chart of half-width {half_width}"
            )


class SpinorFamily:
    """A test spinor given in chart coordinates ``x - p`` with analytic ``D psi``."""

    params: TestSpinorParams
    rep: CliffordRep
    center: np.ndarray

    def value(self, x) -> np.ndarray:
        raise NotImplementedError

    def dirac(self, x) -> np.ndarray:
        raise NotImplementedError

    def on_grid(self, m: int, spin: SpinStructure) -> np.ndarray:
        """Sample on the torus grid ``idx / m`` as a twisted-periodic field.

        A grid point ``x`` is reached from the chart point ``x - L`` (L in
        Z^n, chart centred at p), so its value carries the phase
        ``exp(2 pi i delta . L)``.
        """
        if m < 16 / self.params.rho:
            raise ValueError(f"grid size {m} too coarse for rho = {self.params.rho:.3f} (need m >= 16/rho)")
        x = grid_points(self.rep.n, m)
        chart = self.center + (x - self.center + 0.5) % 1.0 - 0.5
        L = np.round(x - chart)
        phase = np.exp(2j * np.pi * (L @ spin.as_array()))
        return phase[..., None] * self.value(chart)


class SimpleFamily(SpinorFamily):
    """``eta(|x - p|) phi((x - p) / eps)`` supported in the ball of radius 2 rho."""

    def __init__(self, rep: CliffordRep, params: TestSpinorParams, center=None, half_width: float = 0.5):
        if params.n != rep.n:
            raise ValueError("dimension mismatch")
        params.check_chart(half_width)
        self.rep, self.params = rep, params
        self.center = np.zeros(rep.n) if center is None else np.asarray(center, dtype=float)
        self.eta = CutoffProfile(params.rho)

    def _local(self, x):
        y = np.asarray(x, dtype=float) - self.center
        r = np.sqrt(np.sum(y * y, axis=-1))
        return y, r

    def value(self, x) -> np.ndarray:
        y, r = self._local(x)
        p = self.params
        phi = euclidean_killing_spinor(self.rep, p.sign, p.psi0, y, p.epsilon)
        return self.eta(r)[..., None] * phi

    def dirac(self, x) -> np.ndarray:
        y, r = self._local(x)
        p = self.params
        n = self.rep.n
        phi = euclidean_killing_spinor(self.rep, p.sign, p.psi0, y, p.epsilon)
        mu = p.sign * 0.5 * n / p.epsilon * radial_factor(r / p.epsilon)
        with np.errstate(invalid="ignore", divide="ignore"):
            grad_eta = np.where(r > 0, self.eta.derivative(r) / r, 0.0)[..., None] * y
        return (self.eta(r) * mu)[..., None] * phi + clifford_mul(self.rep, grad_eta, phi)


class ThreeZoneFamily(SpinorFamily):
    """Killing spinor inside rho, Green's function outside 2 rho, glued on the annulus.

    ``convention="matched"`` uses ``Gh = -omega G(psi0)`` with regular part
    ``vh = Gh - x/|x|^n . psi0 = -v psi0`` (and ``nuh = -nu``), under which the
    zones agree at r = rho and r = 2 rho when nu = 0:

        r <= rho:          f(r/eps)^(n/2) (1 -+ x/eps) . psi0 -+ eps0 nuh psi0
        rho <= r <= 2 rho: -+eps0 (Gh - eta vh - nuh psi0) + eta f(rho/eps)^(n/2) psi0
        r >= 2 rho:        -+eps0 Gh

    ``convention="literal"`` uses the unnormalized Green's function and the
    outer zone ``eps0 G(psi0)``; it is kept to measure the zone jumps only.
    """

    def __init__(self, rep: CliffordRep, params: TestSpinorParams, green: TorusGreen,
                 convention: str = "matched", half_width: float = 0.5):
        if convention not in ("matched", "literal"):
            raise ValueError("convention must be 'matched' or 'literal'")
        if green is None:
            raise ValueError("three-zone family needs Green's function data")
        if params.n != rep.n:
            raise ValueError("dimension mismatch")
        params.check_chart(half_width)
        self.rep, self.params, self.green = rep, params, green
        self.center = green.p
        self.convention = convention
        self.eta = CutoffProfile(params.rho)

    # components in the chosen normalization
    def _green(self, x):
        G = self.green.evaluate(self.params.psi0, x)
        return -self.green.omega * G if self.convention == "matched" else G

    def _regular(self, x):
        v = self.green.regular_part(self.params.psi0, x)
        return -v if self.convention == "matched" else v

    def _nu(self):
        return -self.params.nu if self.convention == "matched" else self.params.nu

    def inner(self, x):
        p = self.params
        y = np.asarray(x, dtype=float) - self.center
        phi = euclidean_killing_spinor(self.rep, p.sign, p.psi0, y, p.epsilon)
        return phi - p.sign * p.epsilon_0 * self._nu() * p.psi0

    def annulus(self, x):
        p = self.params
        y = np.asarray(x, dtype=float) - self.center
        eta = self.eta(np.sqrt(np.sum(y * y, axis=-1)))[..., None]
        glue = self._green(x) - eta * self._regular(x) - self._nu() * p.psi0
        return -p.sign * p.epsilon_0 * glue + eta * p.f_rho * p.psi0

    def outer(self, x):
        p = self.params
        G = self._green(x)
        return -p.sign * p.epsilon_0 * G if self.convention == "matched" else p.epsilon_0 * G

    def value(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = x - self.center
        r = np.sqrt(np.sum(y * y, axis=-1))
        rho = self.params.rho
        out = np.zeros(x.shape[:-1] + (self.rep.spinor_dim,), dtype=complex)
        zin = r <= rho
        zan = (r > rho) & (r <= 2 * rho)
        zout = r > 2 * rho
        if zin.any():
            out[zin] = self.inner(x[zin])
        if zan.any():
            out[zan] = self.annulus(x[zan])
        if zout.any():
            out[zout] = self.outer(x[zout])
        return out

    def dirac(self, x) -> np.ndarray:
        """Pointwise ``D psi`` away from the zone boundaries.

        Inside: ``+-(n/2)(1/eps) f phi``.  Annulus: ``+-eps0 grad(eta) . vh +
        f(rho/eps)^(n/2) grad(eta) . psi0`` since Gh and vh are harmonic off p.
        Outside: 0.
        """
        p = self.params
        x = np.asarray(x, dtype=float)
        y = x - self.center
        r = np.sqrt(np.sum(y * y, axis=-1))
        out = np.zeros(x.shape[:-1] + (self.rep.spinor_dim,), dtype=complex)
        zin = r <= p.rho
        zan = (r > p.rho) & (r < 2 * p.rho)
        if zin.any():
            mu = p.sign * 0.5 * self.rep.n / p.epsilon * radial_factor(r[zin] / p.epsilon)
            phi = euclidean_killing_spinor(self.rep, p.sign, p.psi0, y[zin], p.epsilon)
            out[zin] = mu[..., None] * phi
        if zan.any():
            ra = r[zan]
            grad_eta = (self.eta.derivative(ra) / ra)[..., None] * y[zan]
            field_ = p.sign * p.epsilon_0 * self._regular(x[zan]) + p.f_rho * p.psi0
            out[zan] = clifford_mul(self.rep, grad_eta, field_)
        return out

    def boundary_jumps(self, samples: int = 16) -> dict[str, float]:
        """Max jump of the zone formulas at r = rho and r = 2 rho, relative to
        ``f(rho/eps)^(n/2) |psi0|``."""
        p = self.params
        n = self.rep.n
        rng = np.random.default_rng(0)
        dirs = rng.normal(size=(samples, n))
        dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
        scale = p.f_rho * float(np.linalg.norm(p.psi0))
        x1 = self.center + p.rho * dirs
        x2 = self.center + 2 * p.rho * dirs
        j1 = np.abs(self.inner(x1) - self.annulus(x1)).max()
        j2 = np.abs(self.annulus(x2) - self.outer(x2)).max()
        return {"inner_annulus": float(j1 / scale), "annulus_outer": float(j2 / scale)}


# --------------------------------------------------------------------------
# Quadrature on the concentration ball


def _radial_panels(eps: float, rho: float) -> list[tuple[float, float]]:
    edges = [0.0]
    b = eps
    while b < rho:
        edges.append(b)
        b *= 3.0
    edges += [rho, 2 * rho]
    return list(zip(edges[:-1], edges[1:]))


def ball_quadrature(n: int, eps: float, rho: float, order: int = 24, nang: int = 64):
    """Nodes ``(count, n)`` and weights for the ball of radius 2 rho around 0."""
    t, wt = np.polynomial.legendre.leggauss(order)
    rs, ws = [], []
    for a, b in _radial_panels(eps, rho):
        rs.append(0.5 * (b - a) * (t + 1) + a)
        ws.append(0.5 * (b - a) * wt)
    r = np.concatenate(rs)
    wr = np.concatenate(ws) * r ** (n - 1)
    if n == 2:
        th = 2 * np.pi * (np.arange(nang) + 0.5) / nang
        dirs = np.stack([np.cos(th), np.sin(th)], axis=-1)
        wd = np.full(nang, 2 * np.pi / nang)
    elif n == 3:
        c, wc = np.polynomial.legendre.leggauss(max(nang // 2, 2))
        ph = 2 * np.pi * (np.arange(nang) + 0.5) / nang
        sn = np.sqrt(1 - c**2)
        dirs = np.stack([np.outer(sn, np.cos(ph)), np.outer(sn, np.sin(ph)),
                         np.outer(c, np.ones_like(ph))], axis=-1).reshape(-1, 3)
        wd = np.outer(wc, np.full(nang, 2 * np.pi / nang)).ravel()
    else:
        raise ValueError("ball quadrature implemented for n = 2, 3")
    nodes = (r[:, None, None] * dirs[None]).reshape(-1, n)
    weights = (wr[:, None] * wd[None]).ravel()
    return nodes, weights


def J_family(family: SpinorFamily, order: int = 24, nang: int = 64) -> JValue:
    p = family.params
    nodes, w = ball_quadrature(family.rep.n, p.epsilon, p.rho, order, nang)
    x = family.center + nodes
    return functional_value(family.dirac(x), family.value(x), w, family.rep.n)


# --------------------------------------------------------------------------
# Sweeps


@dataclass
class SweepRow:
    epsilon: float
    J: float
    gap: float  # J - lambda_sphere
    sign: int


@dataclass
class SweepResult:
    family: str
    n: int
    lambda_sphere: float
    rows: list[SweepRow]
    exponent: float
    extrapolated: float | None
    monotone: bool
    converging: bool

    def table(self) -> list[dict]:
        return [
            {"epsilon": r.epsilon, "J": r.J, "J_minus_lambda_sphere": r.gap, "sign": r.sign}
            for r in self.rows
        ]


def decay_exponent(eps: Sequence[float], gaps: Sequence[float]) -> float:
    """Least-squares slope of ``log|gap|`` against ``log eps``."""
    e = np.log(np.asarray(eps, dtype=float))
    g = np.log(np.abs(np.asarray(gaps, dtype=float)))
    slope, _ = np.polyfit(e, g, 1)
    return float(slope)


def extrapolate_limit(eps: Sequence[float], values: Sequence[float]) -> float | None:
    """Limit of ``J0 + C eps^q`` through the last three points of a geometric sweep."""
    eps = np.asarray(eps, dtype=float)
    v = np.asarray(values, dtype=float)
    order = np.argsort(eps)[::-1]
    eps, v = eps[order][-3:], v[order][-3:]
    ratio = eps[0] / eps[1]
    if not np.isclose(ratio, eps[1] / eps[2], rtol=1e-6):
        return None
    d1, d2 = v[0] - v[1], v[1] - v[2]
    if d1 == 0 or d2 == 0 or d1 * d2 < 0:
        return None
    q = math.log(d1 / d2) / math.log(ratio)
    if q <= 0:
        return None
    return float(v[2] - d2 / (ratio**q - 1))


def epsilon_sweep(make_family: Callable[[float], SpinorFamily], eps_list: Sequence[float],
                  name: str = "family", order: int = 24, nang: int = 64) -> SweepResult:
    """Evaluate J along ``eps_list`` and fit the decay of ``J - lambda_sphere``."""
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 3:
        raise ValueError("a sweep needs at least three epsilon values")
    if sorted(eps_list, reverse=True) != eps_list and sorted(eps_list) != eps_list:
        raise ValueError("epsilon values must be monotone")
    rows = []
    n = None
    for eps in eps_list:
        fam = make_family(eps)
        n = fam.rep.n
        jv = J_family(fam, order, nang)
        rows.append(SweepRow(eps, jv.value, jv.value - sphere_invariant(n), jv.sign))
    lam = sphere_invariant(n)
    rows.sort(key=lambda r: -r.epsilon)
    gaps = np.array([r.gap for r in rows])
    exponent = decay_exponent([r.epsilon for r in rows], gaps)
    monotone = bool(np.all(np.diff([r.J for r in rows]) < 0))
    converging = bool(np.all(np.diff(np.abs(gaps)) < 0))
    if not converging:
        log.warning("sweep %s: |J - lambda_sphere| does not decrease along eps", name)
    return SweepResult(
        family=name, n=n, lambda_sphere=lam, rows=rows, exponent=exponent,
        extrapolated=extrapolate_limit([r.epsilon for r in rows], [r.J for r in rows]),
        monotone=monotone, converging=converging,
    )


def constant_family_exponent(eps_list: Sequence[float], value: float, lam: float) -> float:
    return decay_exponent(eps_list, [value - lam] * len(eps_list))

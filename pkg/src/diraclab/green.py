"""Green's function of the invertible flat-torus Dirac operator and its mass endomorphism.

With ``delta != 0`` the twisted Laplacian is invertible and
``G(psi0)(x) = grad Phi(x - p) . psi0`` where ``Phi`` is the twisted
Green's function of ``-Laplacian``, so that ``D G(psi0) = psi0 delta_p``.
``Phi`` is split at heat time ``s`` (Ewald splitting): the short-time part
is a rapidly convergent image sum of incomplete-gamma kernels, the long-time
part a Gaussian-damped mode sum.  Both converge absolutely and the split is
exact for every ``s``.

Near the pole, ``omega_{n-1} G(psi0)(x) = -(x - p)/|x - p|^n . psi0 + v(x) psi0``
with ``v`` harmonic; the mass endomorphism is ``alpha = v(p)``.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammainc, gammaincc

from diraclab.clifford import CliffordRep, clifford_mul
from diraclab.flatmodel import sphere_volume
from diraclab.torus import TWO_PI, NearKernelError, SpinStructure, lattice_box

log = logging.getLogger(__name__)

DEFAULT_OFFSETS = (0.04, 0.02, 0.01)


class SingularityError(ValueError):
    pass


class ExtrapolationError(ArithmeticError):
    pass


def _axes(n: int) -> np.ndarray:
    """Approach axes through p: coordinate axes plus all (+-1, ..., +-1)
    diagonals up to overall sign."""
    eye = list(np.eye(n))
    diags = []
    for signs in itertools.product((1.0, -1.0), repeat=n - 1):
        d = np.array((1.0,) + signs)
        diags.append(d / math.sqrt(n))
    return np.array(eye + diags)


class TorusGreen:
    """Ewald-split twisted Green's function on R^n / Z^n.

    ``split`` is the heat time separating the image and mode sums; ``tol``
    bounds the neglected Gaussian tails.
    """

    def __init__(self, rep: CliffordRep, spin: SpinStructure, p=None, split: float | None = None,
                 tol: float = 1e-17):
        if rep.n != spin.n:
            raise ValueError("dimension mismatch between representation and spin structure")
        if spin.is_trivial:
            raise NearKernelError("D is not invertible for the trivial spin structure; no Green's function")
        self.rep, self.spin, self.n = rep, spin, rep.n
        self.p = np.zeros(self.n) if p is None else np.asarray(p, dtype=float)
        self.omega = sphere_volume(self.n - 1)
        self.split = 1.0 / (4.0 * math.pi) if split is None else float(split)
        s, a = self.split, self.n / 2
        # tails: exp(-R^2 / 4s) in real space, exp(-4 pi^2 s k^2) in mode space
        radius = math.sqrt(4 * s * math.log(1 / tol)) + 0.5 * math.sqrt(self.n)
        kmax = math.sqrt(math.log(1 / tol) / (4 * math.pi**2 * s))
        self.images = lattice_box(self.n, int(math.ceil(radius)))
        self.image_phase = np.exp(-TWO_PI * 1j * (self.images @ spin.as_array()))
        k = lattice_box(self.n, int(math.ceil(kmax)) + 1) + spin.as_array()
        k2 = np.sum(k * k, axis=-1)
        keep = k2 <= (kmax + 1) ** 2
        self.k = k[keep]
        self.kweight = np.exp(-4 * math.pi**2 * s * k2[keep]) / (4 * math.pi**2 * k2[keep])
        self._a = a
        # points per batch, keeping the (points x images) work arrays near 16 MB
        self.chunk = max(1, 2**20 // max(len(self.images), len(self.k)))

    # -- scalar potential gradient ---------------------------------------

    def _reduce(self, y):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        shift = np.round(y)
        phase = np.exp(TWO_PI * 1j * (shift @ self.spin.as_array()))
        return y - shift, phase

    def _real_terms(self, y, regularize: bool):
        """Image sum of ``-z Q(n/2, |z|^2/4s) / (omega |z|^n)``; optionally the
        L = 0 term is replaced by its regular part ``+z P(...) / (omega |z|^n)``."""
        z = y[:, None, :] + self.images[None, :, :]
        r2 = np.sum(z * z, axis=-1)
        zero_image = np.all(self.images == 0, axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            rn = r2 ** (self.n / 2)
            q = gammaincc(self._a, r2 / (4 * self.split))
            coef = -q / (self.omega * rn)
            if regularize:
                coef[:, zero_image] = (gammainc(self._a, r2[:, zero_image] / (4 * self.split))
                                       / (self.omega * rn[:, zero_image]))
        coef = np.where(r2 > 0, coef, 0.0)
        return np.einsum("pl,l,pld->pd", coef, self.image_phase, z)

    def _mode_terms(self, y, order: int):
        phase = np.exp(TWO_PI * 1j * (y @ self.k.T)) * self.kweight
        ik = TWO_PI * 1j * self.k
        if order == 1:
            return phase @ ik
        return np.einsum("pk,ki,kj->pij", phase, ik, ik)

    def potential_gradient(self, x, regular: bool = False) -> np.ndarray:
        """``grad Phi(x - p)``; with ``regular=True`` the Euclidean pole
        ``-(x - p)/(omega |x - p|^n)`` is removed analytically."""
        x = np.asarray(x, dtype=float)
        lead = x.shape[:-1]
        y, phase = self._reduce(np.reshape(x, (-1, self.n)) - self.p)
        r2 = np.sum(y * y, axis=-1)
        if not regular and np.any(r2 == 0):
            raise SingularityError("Green's function evaluated at its pole")
        grad = np.empty(y.shape, dtype=complex)
        for i in range(0, len(y), self.chunk):
            sl = slice(i, i + self.chunk)
            grad[sl] = self._real_terms(y[sl], regular) + self._mode_terms(y[sl], 1)
        return np.reshape(grad * phase[:, None], lead + (self.n,))

    def potential_hessian(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lead = x.shape[:-1]
        y, phase = self._reduce(np.reshape(x, (-1, self.n)) - self.p)
        z = y[:, None, :] + self.images[None, :, :]
        r2 = np.sum(z * z, axis=-1)
        if np.any(r2 == 0):
            raise SingularityError("Green's function evaluated at its pole")
        r = np.sqrt(r2)
        zz = r2 / (4 * self.split)
        q = gammaincc(self._a, zz)
        h = -q / (self.omega * r**self.n)
        dq = -(zz ** (self._a - 1)) * np.exp(-zz) / math.gamma(self._a) * r / (2 * self.split)
        dh = -dq / (self.omega * r**self.n) + self.n * q / (self.omega * r ** (self.n + 1))
        eye = np.eye(self.n)
        terms = h[..., None, None] * eye + (dh / r)[..., None, None] * z[..., :, None] * z[..., None, :]
        hess = np.einsum("plij,l->pij", terms, self.image_phase) + self._mode_terms(y, 2)
        return np.reshape(hess * phase[:, None, None], lead + (self.n, self.n))

    # -- spinor fields ----------------------------------------------------

    def evaluate(self, psi0, x) -> np.ndarray:
        """``G(psi0)(x)`` for points ``x`` of shape (..., n)."""
        return clifford_mul(self.rep, self.potential_gradient(x), np.asarray(psi0, dtype=complex))

    def regular_part(self, psi0, x) -> np.ndarray:
        """``v(x) psi0 = omega G(psi0)(x) + (x - p)/|x - p|^n . psi0`` near p.

        Computed without cancellation; finite at ``x = p``.  Valid for x in
        the fundamental cell centred at p.
        """
        return self.omega * clifford_mul(
            self.rep, self.potential_gradient(x, regular=True), np.asarray(psi0, dtype=complex)
        )

    def dirac(self, psi0, x) -> np.ndarray:
        """``D G(psi0)`` evaluated away from the pole from the analytic Hessian."""
        hess = self.potential_hessian(x)
        g = self.rep.generators
        return np.einsum("...ij,jab,ibc,c->...a", hess, g, g, np.asarray(psi0, dtype=complex))


def green_evaluate(rep, spin, psi0, p, x, split: float | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.any(np.linalg.norm(x - np.asarray(p, dtype=float), axis=-1) == 0):
        raise SingularityError("x coincides with the pole p")
    return TorusGreen(rep, spin, p, split=split).evaluate(psi0, x)


# --------------------------------------------------------------------------
# Mass endomorphism


@dataclass
class MassEndomorphism:
    alpha: np.ndarray
    raw: np.ndarray = field(repr=False)
    eigenvalues: np.ndarray = field(default=None)
    hermiticity_defect: float = 0.0
    direction_spread: float = 0.0
    extrapolation_error: float = 0.0

    def __post_init__(self):
        if self.eigenvalues is None:
            self.eigenvalues = np.linalg.eigvalsh(self.alpha)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.alpha, 2))


def richardson(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Extrapolate even samples ``s(h) = s0 + b h^2 + c h^4 + ...`` taken at
    h, h/2, h/4 to h = 0; returns (estimate, error indicator)."""
    s1, s2, s3 = values
    r1a = (4 * s2 - s1) / 3
    r1b = (4 * s3 - s2) / 3
    est = (16 * r1b - r1a) / 15
    return est, np.abs(est - r1b)


def mass_endomorphism(
    rep: CliffordRep,
    spin: SpinStructure,
    p=None,
    offsets=DEFAULT_OFFSETS,
    hermiticity_tol: float = 1e-6,
    spread_tol: float | None = None,
    green: TorusGreen | None = None,
) -> MassEndomorphism:
    """Matrix of ``psi0 -> v(p) psi0`` by extrapolation along several axes.

    On each axis ``d`` the symmetric mean ``(v(p + h d) + v(p - h d)) / 2`` is
    even in h and is Richardson-extrapolated in h^2.
    """
    offsets = tuple(float(h) for h in offsets)
    if len(offsets) != 3 or not np.allclose([offsets[0] / 2, offsets[0] / 4], offsets[1:]):
        raise ValueError("offsets must be a halving sequence h, h/2, h/4")
    green = green or TorusGreen(rep, spin, p)
    N = rep.spinor_dim
    axes = _axes(rep.n)
    h = np.array(offsets)[:, None, None]
    fwd = green.p + h * axes[None]
    bwd = green.p - h * axes[None]
    per_dir = np.empty((len(axes), N, N), dtype=complex)
    err = 0.0
    basis = np.eye(N, dtype=complex)
    for b in range(N):
        samples = 0.5 * (green.regular_part(basis[b], fwd) + green.regular_part(basis[b], bwd))
        est, e = richardson(samples)
        per_dir[:, :, b] = est
        err = max(err, float(e.max()))
    raw = per_dir.mean(axis=0)
    spread = float(np.abs(per_dir - raw).max())
    if spread_tol is not None and spread > spread_tol:
        raise ExtrapolationError(f"direction spread {spread:.3e} exceeds {spread_tol:g}")
    herm = float(np.abs(raw - raw.conj().T).max())
    scale = float(np.abs(raw).max())
    if herm > hermiticity_tol * max(scale, 1.0):
        raise ExtrapolationError(f"Hermiticity defect {herm:.3e} exceeds tolerance")
    alpha = 0.5 * (raw + raw.conj().T)
    return MassEndomorphism(alpha=alpha, raw=raw, hermiticity_defect=herm,
                            direction_spread=spread, extrapolation_error=err)


def mass_endomorphism_direct(rep: CliffordRep, spin: SpinStructure, green: TorusGreen | None = None) -> np.ndarray:
    """``v(p)`` evaluated directly at the pole from the regularized sums."""
    green = green or TorusGreen(rep, spin)
    N = rep.spinor_dim
    cols = [green.regular_part(e, green.p) for e in np.eye(N, dtype=complex)]
    return np.stack(cols, axis=-1)


@dataclass
class SymmetryReport:
    eigenvalues: np.ndarray
    pairing_defect: float
    selfadjoint_defect: float
    symmetric_expected: bool


def symmetry_report(alpha, n: int) -> SymmetryReport:
    a = alpha.alpha if isinstance(alpha, MassEndomorphism) else np.asarray(alpha, dtype=complex)
    ev = np.linalg.eigvalsh(0.5 * (a + a.conj().T))
    return SymmetryReport(
        eigenvalues=ev,
        pairing_defect=float(np.abs(ev + ev[::-1]).max()) if ev.size else 0.0,
        selfadjoint_defect=float(np.linalg.norm(a - a.conj().T)),
        symmetric_expected=(n % 4 != 3),
    )


# --------------------------------------------------------------------------
# Weak form of D G(psi0) = psi0 delta_p


@dataclass(frozen=True)
class BumpSpinor:
    """``chi(x) = b(|x - c| / R) s`` with the smooth bump ``b(t) = exp(1 - 1/(1 - t^2))``."""

    center: np.ndarray
    radius: float
    spinor: np.ndarray

    def _profile(self, x):
        z = np.asarray(x, dtype=float) - self.center
        t2 = np.sum(z * z, axis=-1) / self.radius**2
        inside = t2 < 1
        safe = np.where(inside, 1 - t2, 1.0)
        b = np.where(inside, np.exp(1 - 1 / safe), 0.0)
        return z, b, safe

    def value(self, x) -> np.ndarray:
        _, b, _ = self._profile(x)
        return b[..., None] * self.spinor

    def dirac(self, rep: CliffordRep, x) -> np.ndarray:
        z, b, safe = self._profile(x)
        grad = (-2 * b / (self.radius**2 * safe**2))[..., None] * z
        return clifford_mul(rep, grad, np.broadcast_to(self.spinor, z.shape[:-1] + self.spinor.shape))


def _ball_rule(n: int, radius: float, nr: int, nang: int):
    """Quadrature nodes/weights on the ball of given radius around 0 (n = 2 or 3)."""
    t, wt = np.polynomial.legendre.leggauss(nr)
    r = 0.5 * radius * (t + 1)
    wr = 0.5 * radius * wt
    if n == 2:
        th = TWO_PI * np.arange(nang) / nang
        dirs = np.stack([np.cos(th), np.sin(th)], axis=-1)
        wd = np.full(nang, TWO_PI / nang)
    elif n == 3:
        c, wc = np.polynomial.legendre.leggauss(nang // 2)
        ph = TWO_PI * np.arange(nang) / nang
        sn = np.sqrt(1 - c**2)
        dirs = np.stack([np.outer(sn, np.cos(ph)), np.outer(sn, np.sin(ph)),
                         np.outer(c, np.ones_like(ph))], axis=-1).reshape(-1, 3)
        wd = np.outer(wc, np.full(nang, TWO_PI / nang)).ravel()
    else:
        raise ValueError("weak-form quadrature implemented for n = 2, 3")
    pts = r[:, None, None] * dirs[None, :, :]
    w = (wr * r ** (n - 1))[:, None] * wd[None, :]
    return pts.reshape(-1, n), w.ravel()


def weak_form_pair(green: TorusGreen, psi0, bump: BumpSpinor, nr: int = 240, nang: int = 256):
    """Return ``(<G(psi0), D chi>_{L^2}, <psi0, chi(p)>)``.

    The integral is taken in polar coordinates around p, which absorbs the
    ``|x - p|^(1-n)`` singularity; the bump must lie inside the cell around p.
    """
    reach = float(np.linalg.norm(bump.center - green.p)) + bump.radius
    if reach >= 0.5:
        raise ValueError("bump support must lie inside the fundamental cell around p")
    rel, w = _ball_rule(green.n, reach, nr, nang)
    x = green.p + rel
    G = green.evaluate(psi0, x)
    Dchi = bump.dirac(green.rep, x)
    lhs = complex(np.sum(w * np.sum(G * np.conj(Dchi), axis=-1)))
    rhs = complex(np.sum(np.asarray(psi0) * np.conj(bump.value(green.p))))
    return lhs, rhs

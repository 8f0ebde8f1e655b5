"""Dirac operators on flat tori R^n / Z^n with arbitrary spin structure.

A spin structure is a twist vector ``delta`` in {0, 1/2}^n.  Spinor fields
satisfy ``psi(x + e_j) = exp(2 pi i delta_j) psi(x)`` and expand in the
modes ``exp(2 pi i (gamma + delta) . x)``, ``gamma`` in Z^n.  On each mode the
flat Dirac operator acts as the Hermitian matrix ``2 pi i (gamma + delta) . G``
whose eigenvalues are ``+-2 pi |gamma + delta|``.

Grid fields are stored as arrays of shape ``(m,) * n + (N,)`` holding the
(twisted) values at the points ``x = idx / m``.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.sparse.linalg as spla

from diraclab.clifford import CliffordRep

log = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi


class NearKernelError(ArithmeticError):
    """The Dirac operator has (numerically) zero eigenvalues."""

    def __init__(self, message: str, eigenvalue: float | None = None):
        super().__init__(message)
        self.eigenvalue = eigenvalue


class EigensolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SpinStructure:
    delta: tuple[float, ...]

    def __post_init__(self):
        d = tuple(float(v) for v in self.delta)
        if any(v not in (0.0, 0.5) for v in d):
            raise ValueError(f"spin structure entries must be 0 or 1/2, got {self.delta!r}")
        if len(d) < 1:
            raise ValueError("empty spin structure")
        object.__setattr__(self, "delta", d)

    @property
    def n(self) -> int:
        return len(self.delta)

    @property
    def is_trivial(self) -> bool:
        """True when some mode has zero frequency, i.e. D has a kernel."""
        return all(v == 0.0 for v in self.delta)

    def as_array(self) -> np.ndarray:
        return np.array(self.delta)

    @classmethod
    def parse(cls, text: str) -> "SpinStructure":
        """Parse ``"1/2,0"`` or ``"0.5 0"`` style input."""
        parts = [p for p in text.replace(",", " ").split() if p]
        return cls(tuple(float(Fraction(p)) for p in parts))

    @classmethod
    def all(cls, n: int) -> list["SpinStructure"]:
        return [cls(bits) for bits in itertools.product((0.0, 0.5), repeat=n)]

    def label(self) -> str:
        return "(" + ",".join("1/2" if v else "0" for v in self.delta) + ")"


def _check_dims(rep: CliffordRep, spin: SpinStructure) -> None:
    if rep.n != spin.n:
        raise ValueError(f"Clifford dimension {rep.n} does not match spin structure dimension {spin.n}")


def mode_matrix(rep: CliffordRep, k) -> np.ndarray:
    """``2 pi i k . G``: the flat Dirac operator on the mode with wavevector k."""
    return TWO_PI * 1j * rep.vector(np.asarray(k, dtype=float))


def lattice_box(n: int, cutoff: int) -> np.ndarray:
    """All gamma in Z^n with ``|gamma|_inf <= cutoff``, shape (count, n)."""
    axis = np.arange(-cutoff, cutoff + 1)
    grids = np.meshgrid(*([axis] * n), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)


# --------------------------------------------------------------------------
# Fourier representation


@dataclass
class FourierSpinorField:
    cutoff: int
    coefficients: np.ndarray  # shape (2K+1,)*n + (N,), index gamma + K

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=complex)
        side = 2 * self.cutoff + 1
        if any(s != side for s in self.coefficients.shape[:-1]):
            raise ValueError("coefficient array does not match the cutoff box")

    @property
    def n(self) -> int:
        return self.coefficients.ndim - 1

    @property
    def spinor_dim(self) -> int:
        return self.coefficients.shape[-1]

    @classmethod
    def zeros(cls, n: int, spinor_dim: int, cutoff: int) -> "FourierSpinorField":
        return cls(cutoff, np.zeros((2 * cutoff + 1,) * n + (spinor_dim,), dtype=complex))

    def __getitem__(self, gamma) -> np.ndarray:
        return self.coefficients[tuple(int(g) + self.cutoff for g in gamma)]

    def __setitem__(self, gamma, value) -> None:
        self.coefficients[tuple(int(g) + self.cutoff for g in gamma)] = value

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.coefficients) ** 2)))

    def to_grid(self, spin: SpinStructure, m: int) -> np.ndarray:
        """Sample the field at the points ``idx / m`` (requires m > 2K)."""
        if m <= 2 * self.cutoff:
            raise ValueError(f"grid size {m} cannot resolve cutoff {self.cutoff}")
        n = self.n
        full = np.zeros((m,) * n + (self.spinor_dim,), dtype=complex)
        idx = np.arange(-self.cutoff, self.cutoff + 1) % m
        full[np.ix_(*([idx] * n))] = self.coefficients
        periodic = np.fft.ifftn(full, axes=tuple(range(n))) * m**n
        return periodic * _twist(spin, m)[..., None]

    @classmethod
    def from_grid(cls, psi: np.ndarray, spin: SpinStructure, cutoff: int) -> "FourierSpinorField":
        n = psi.ndim - 1
        m = psi.shape[0]
        if m <= 2 * cutoff:
            raise ValueError(f"grid size {m} cannot resolve cutoff {cutoff}")
        chi = psi * np.conj(_twist(spin, m))[..., None]
        hat = np.fft.fftn(chi, axes=tuple(range(n))) / m**n
        idx = np.arange(-cutoff, cutoff + 1) % m
        return cls(cutoff, hat[np.ix_(*([idx] * n))])


def dirac_apply(rep: CliffordRep, spin: SpinStructure, psi: FourierSpinorField) -> FourierSpinorField:
    """Flat Dirac operator in mode space; the support is unchanged."""
    _check_dims(rep, spin)
    if psi.n != rep.n or psi.spinor_dim != rep.spinor_dim:
        raise ValueError("field dimensions do not match the Clifford representation")
    n, K = rep.n, psi.cutoff
    axis = np.arange(-K, K + 1, dtype=float)
    k = np.stack(np.meshgrid(*([axis] * n), indexing="ij"), axis=-1) + spin.as_array()
    symbol = TWO_PI * 1j * np.tensordot(k, rep.generators, axes=([-1], [0]))
    return FourierSpinorField(K, np.einsum("...ab,...b->...a", symbol, psi.coefficients))


@dataclass
class SpectrumResult:
    eigenvalues: np.ndarray
    lambda_1_plus: float | None
    lambda_1_minus: float | None
    kernel_dim: int = 0

    @classmethod
    def from_values(cls, values, zero_tol: float = 1e-9) -> "SpectrumResult":
        values = np.sort(np.asarray(values, dtype=float))
        scale = max(1.0, float(np.abs(values).max())) if values.size else 1.0
        zero = np.abs(values) <= zero_tol * scale
        pos = values[(values > 0) & ~zero]
        neg = values[(values < 0) & ~zero]
        return cls(
            eigenvalues=values,
            lambda_1_plus=float(pos.min()) if pos.size else None,
            lambda_1_minus=float(neg.max()) if neg.size else None,
            kernel_dim=int(zero.sum()),
        )


def spectrum_exact(rep: CliffordRep, spin: SpinStructure, cutoff: int) -> SpectrumResult:
    """Closed-form flat spectrum ``+-2 pi |gamma + delta|`` over the cutoff box."""
    _check_dims(rep, spin)
    if cutoff < 1:
        raise ValueError("cutoff must be >= 1")
    half = rep.spinor_dim // 2
    k = lattice_box(rep.n, cutoff) + spin.as_array()
    mags = TWO_PI * np.sqrt(np.sum(k * k, axis=-1))
    values = np.concatenate([np.repeat(mags, half), np.repeat(-mags, half)])
    return SpectrumResult.from_values(values)


def spectrum_diagonalized(rep: CliffordRep, spin: SpinStructure, cutoff: int) -> SpectrumResult:
    """Spectrum obtained by diagonalizing each mode block of the Fourier operator."""
    _check_dims(rep, spin)
    k = lattice_box(rep.n, cutoff) + spin.as_array()
    blocks = TWO_PI * 1j * np.tensordot(k, rep.generators, axes=([-1], [0]))
    return SpectrumResult.from_values(np.linalg.eigvalsh(blocks).ravel())


# --------------------------------------------------------------------------
# Grid representation


def grid_points(n: int, m: int) -> np.ndarray:
    """Uniform grid on [0, 1)^n, shape (m,)*n + (n,)."""
    axis = np.arange(m) / m
    return np.stack(np.meshgrid(*([axis] * n), indexing="ij"), axis=-1)


def _twist(spin: SpinStructure, m: int) -> np.ndarray:
    x = grid_points(spin.n, m)
    return np.exp(TWO_PI * 1j * (x @ spin.as_array()))


def grid_wavevectors(spin: SpinStructure, m: int) -> np.ndarray:
    """Twisted wavevectors ``gamma + delta`` in FFT ordering, shape (m,)*n + (n,)."""
    axis = np.fft.fftfreq(m, d=1.0 / m)
    gam = np.stack(np.meshgrid(*([axis] * spin.n), indexing="ij"), axis=-1)
    return gam + spin.as_array()


class FlatDiracGrid:
    """Spectral (FFT) flat Dirac operator on an m^n grid."""

    def __init__(self, rep: CliffordRep, spin: SpinStructure, m: int):
        _check_dims(rep, spin)
        self.rep, self.spin, self.m = rep, spin, int(m)
        self.n = rep.n
        self.shape = (self.m,) * self.n + (rep.spinor_dim,)
        self.axes = tuple(range(self.n))
        self.twist = _twist(spin, self.m)[..., None]
        k = grid_wavevectors(spin, self.m)
        self.k2 = np.sum(k * k, axis=-1)
        self.symbol = TWO_PI * 1j * np.tensordot(k, rep.generators, axes=([-1], [0]))
        self.invertible = bool(self.k2.min() > 0)

    def _modes(self, psi):
        return np.fft.fftn(psi * np.conj(self.twist), axes=self.axes)

    def _field(self, hat):
        return np.fft.ifftn(hat, axes=self.axes) * self.twist

    def apply(self, psi: np.ndarray) -> np.ndarray:
        hat = self._modes(psi)
        return self._field(np.einsum("...ab,...b->...a", self.symbol, hat))

    def solve_shifted(self, psi: np.ndarray, shift: float = 0.0) -> np.ndarray:
        """Apply ``(D - shift)^(-1)`` mode by mode."""
        hat = self._modes(psi)
        # (M - s)^(-1) = (M + s) / (M^2 - s^2) since M^2 = 4 pi^2 |k|^2
        denom = (TWO_PI**2) * self.k2 - shift**2
        if np.any(np.abs(denom) < 1e-14):
            raise NearKernelError(f"D - {shift} is singular on the grid", eigenvalue=shift)
        out = np.einsum("...ab,...b->...a", self.symbol, hat) + shift * hat
        return self._field(out / denom[..., None])


@dataclass
class LogConformalFactor:
    """Grid samples of ``u``; the metric is ``exp(2u) g_flat``."""

    u: np.ndarray
    n: int = field(default=0)

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        if self.n == 0:
            self.n = self.u.ndim
        if self.u.ndim != self.n or len(set(self.u.shape)) != 1:
            raise ValueError("u must be sampled on a uniform m^n grid")
        if not np.all(np.isfinite(self.u)):
            raise ValueError("u must be finite")

    @property
    def m(self) -> int:
        return self.u.shape[0]

    @classmethod
    def constant(cls, n: int, m: int, value: float = 0.0) -> "LogConformalFactor":
        return cls(np.full((m,) * n, float(value)), n)

    @classmethod
    def from_function(cls, func, n: int, m: int) -> "LogConformalFactor":
        x = grid_points(n, m)
        return cls(np.asarray(func(x), dtype=float) * np.ones((m,) * n), n)


def volume(u: LogConformalFactor | np.ndarray, n: int | None = None) -> float:
    """Volume of ``(T^n, exp(2u) g)`` by the periodic trapezoidal rule."""
    if isinstance(u, LogConformalFactor):
        n, values = u.n, u.u
    else:
        values = np.asarray(u, dtype=float)
        n = values.ndim if n is None else n
    return float(np.mean(np.exp(n * values)))


class ConformalDirac:
    """Dirac operator of ``exp(2u) g`` on grid fields, via conformal covariance.

    ``D_u psi = F^(-(n+1)/2) D (F^((n-1)/2) psi)`` with ``F = exp(u)``.  It is
    self-adjoint for the weights ``F^n / m^n``.  The substitution
    ``w = F^(n/2) psi`` turns it into the Hermitian operator
    ``A = F^(-1/2) D F^(-1/2)`` on unweighted vectors, with ``A^(-1) =
    F^(1/2) D^(-1) F^(1/2)`` whenever the flat operator is invertible.
    """

    def __init__(self, rep: CliffordRep, spin: SpinStructure, u: LogConformalFactor | np.ndarray):
        if not isinstance(u, LogConformalFactor):
            u = LogConformalFactor(u, rep.n)
        if u.n != rep.n:
            raise ValueError("conformal factor dimension does not match the representation")
        self.flat = FlatDiracGrid(rep, spin, u.m)
        self.rep, self.spin, self.u = rep, spin, u
        self.n, self.m = rep.n, u.m
        self.shape = self.flat.shape
        self.size = int(np.prod(self.shape))
        F = np.exp(u.u)
        if np.any(F <= 0):
            raise ValueError("conformal factor must be positive")
        self.F = F[..., None]
        self.weights = F**self.n / self.m**self.n

    @property
    def invertible(self) -> bool:
        return self.flat.invertible

    def _check(self, psi):
        psi = np.asarray(psi)
        if psi.shape != self.shape:
            raise ValueError(f"field shape {psi.shape} does not match grid shape {self.shape}")
        return psi

    def apply(self, psi: np.ndarray) -> np.ndarray:
        psi = self._check(psi)
        n = self.n
        return self.F ** (-(n + 1) / 2) * self.flat.apply(self.F ** ((n - 1) / 2) * psi)

    def inner(self, a: np.ndarray, b: np.ndarray) -> complex:
        """Weighted L^2 product ``sum F^n <a, b> / m^n``, linear in ``a``."""
        return complex(np.sum(self.weights[..., None] * a * np.conj(b)))

    def volume(self) -> float:
        return volume(self.u)

    # Hermitian form on unweighted vectors
    def to_hermitian(self, psi):
        return (self.F ** (self.n / 2) * psi).ravel()

    def from_hermitian(self, w):
        return np.reshape(w, self.shape) / self.F ** (self.n / 2)

    def hermitian_apply(self, w: np.ndarray) -> np.ndarray:
        x = np.reshape(w, self.shape) / np.sqrt(self.F)
        return (self.flat.apply(x) / np.sqrt(self.F)).ravel()

    def hermitian_inverse(self, w: np.ndarray) -> np.ndarray:
        if not self.invertible:
            raise NearKernelError("flat Dirac operator has a kernel for this spin structure", 0.0)
        x = np.reshape(w, self.shape) * np.sqrt(self.F)
        return (self.flat.solve_shifted(x) * np.sqrt(self.F)).ravel()

    def hermitian_shift_inverse(self, w: np.ndarray, shift: float, rtol: float = 1e-9) -> np.ndarray:
        """``(A - shift)^(-1) w`` by preconditioned GMRES on ``D - shift F``."""
        sqF = np.sqrt(self.F)
        rhs = (np.reshape(w, self.shape) * sqF).ravel()
        Fbar = float(np.mean(self.F))
        Fflat = self.F

        def op(v):
            v = np.reshape(v, self.shape)
            return (self.flat.apply(v) - shift * Fflat * v).ravel()

        def prec(v):
            return self.flat.solve_shifted(np.reshape(v, self.shape), shift * Fbar).ravel()

        A = spla.LinearOperator((self.size, self.size), matvec=op, dtype=complex)
        M = spla.LinearOperator((self.size, self.size), matvec=prec, dtype=complex)
        sol, info = spla.gmres(A, rhs, M=M, rtol=rtol, atol=0.0, restart=60, maxiter=200)
        if info != 0:
            raise EigensolverError(f"shifted solve did not converge (info={info})")
        return (np.reshape(sol, self.shape) * sqF).ravel()


def conformal_dirac_apply(rep: CliffordRep, spin: SpinStructure, u, psi: np.ndarray) -> np.ndarray:
    return ConformalDirac(rep, spin, u).apply(psi)


# --------------------------------------------------------------------------
# Eigenvalues near zero


@dataclass
class EigenEstimate:
    value: float
    ritz_value: float
    residual: float
    vector: np.ndarray = field(repr=False)


def _rayleigh(op: ConformalDirac, w: np.ndarray) -> tuple[float, float]:
    Aw = op.hermitian_apply(w)
    ww = float(np.vdot(w, w).real)
    rq = float(np.vdot(w, Aw).real) / ww
    res = float(np.linalg.norm(Aw - rq * w)) / np.sqrt(ww)
    return rq, res


def _extreme(op: ConformalDirac, sign: int, tol: float, k: int, kernel_tol: float) -> EigenEstimate:
    if not op.invertible:
        _kernel_probe(op, kernel_tol)
    Binv = spla.LinearOperator((op.size, op.size), matvec=op.hermitian_inverse, dtype=complex)
    which = "LA" if sign > 0 else "SA"
    k = min(k, op.size - 2)
    v0 = np.ones(op.size, dtype=complex) / np.sqrt(op.size)
    try:
        mu, vecs = spla.eigsh(Binv, k=k, which=which, tol=tol, v0=v0, ncv=max(2 * k + 1, 20))
    except spla.ArpackNoConvergence as exc:
        raise EigensolverError(f"ARPACK did not converge: {exc}") from exc
    i = int(np.argmax(mu)) if sign > 0 else int(np.argmin(mu))
    if sign * mu[i] <= 0:
        raise EigensolverError("no eigenvalue of the requested sign was found")
    ritz = 1.0 / mu[i]
    if abs(ritz) < kernel_tol:
        raise NearKernelError(f"eigenvalue {ritz:.3e} is within {kernel_tol:g} of zero", ritz)
    # sign resolution and refinement by the Rayleigh quotient of A itself
    rq, res = _rayleigh(op, vecs[:, i])
    if np.sign(rq) != sign or abs(rq - ritz) > 1e-6 * abs(ritz):
        raise EigensolverError(f"Rayleigh quotient {rq} disagrees with Ritz value {ritz}")
    return EigenEstimate(rq, ritz, res, vecs[:, i])


def _kernel_probe(op: ConformalDirac, kernel_tol: float, k: int = 4) -> None:
    shift = 1e-3
    OPinv = spla.LinearOperator(
        (op.size, op.size), matvec=lambda w: op.hermitian_shift_inverse(w, shift), dtype=complex
    )
    A = spla.LinearOperator((op.size, op.size), matvec=op.hermitian_apply, dtype=complex)
    vals = spla.eigsh(A, k=k, sigma=shift, OPinv=OPinv, which="LM", return_eigenvectors=False, tol=1e-10)
    near = vals[np.argmin(np.abs(vals))]
    if abs(near) < kernel_tol:
        raise NearKernelError(f"eigenvalue {near:.3e} is within {kernel_tol:g} of zero", float(near))


def smallest_positive_eigenvalue(
    op: ConformalDirac, tol: float = 1e-10, k: int = 4, kernel_tol: float = 1e-6
) -> float:
    """Smallest positive eigenvalue by Lanczos on the exact inverse.

    Raises NearKernelError when the operator has an eigenvalue within
    ``kernel_tol`` of zero.
    """
    return _extreme(op, +1, tol, k, kernel_tol).value


def largest_negative_eigenvalue(
    op: ConformalDirac, tol: float = 1e-10, k: int = 4, kernel_tol: float = 1e-6
) -> float:
    return _extreme(op, -1, tol, k, kernel_tol).value


def first_eigenvalue(op: ConformalDirac, sign: int, tol: float = 1e-10, **kwargs) -> EigenEstimate:
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    return _extreme(op, sign, tol, kwargs.get("k", 4), kwargs.get("kernel_tol", 1e-6))


def dense_spectrum(op: ConformalDirac) -> np.ndarray:
    """All grid eigenvalues by dense diagonalization (small grids only)."""
    if op.size > 4096:
        raise ValueError("dense spectrum limited to 4096 unknowns")
    eye = np.eye(op.size, dtype=complex)
    A = np.stack([op.hermitian_apply(e) for e in eye], axis=1)
    return np.linalg.eigvalsh(0.5 * (A + A.conj().T))

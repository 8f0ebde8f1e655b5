"""Complex Clifford algebra representations.

Generators satisfy ``G_i G_j + G_j G_i = -2 delta_ij``, so Clifford
multiplication by a unit vector squares to ``-1`` and the flat Dirac
operator ``D = sum_k G_k d_k`` has ``D^2 = -Laplacian``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

_SX = np.array([[0, 1], [1, 0]], dtype=complex)
_SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
_SZ = np.array([[1, 0], [0, -1]], dtype=complex)


@dataclass(frozen=True, eq=False)
class CliffordRep:
    n: int
    generators: np.ndarray  # shape (n, N, N)

    @property
    def spinor_dim(self) -> int:
        return self.generators.shape[1]

    def vector(self, v) -> np.ndarray:
        """Matrix of Clifford multiplication by ``v`` (real or complex n-vector)."""
        v = np.asarray(v)
        if v.shape[-1] != self.n:
            raise ValueError(f"vector has length {v.shape[-1]}, expected {self.n}")
        return np.tensordot(v, self.generators, axes=([-1], [0]))

    def volume_element(self) -> np.ndarray:
        out = np.eye(self.spinor_dim, dtype=complex)
        for g in self.generators:
            out = out @ g
        return out


def _hermitian_gammas(n: int) -> list[np.ndarray]:
    # Euclidean gammas with gamma_i^2 = +1, built by recursive doubling.
    gam = [_SX, _SY]
    d = 2
    while d + 1 < n:
        m = gam[0].shape[0]
        eye = np.eye(m, dtype=complex)
        gam = [np.kron(_SX, g) for g in gam] + [np.kron(_SY, eye), np.kron(_SZ, eye)]
        d += 2
    if d < n:
        # odd n: append the chirality operator of the first n-1 generators
        k = (n - 1) // 2
        chi = (1j) ** k * np.eye(gam[0].shape[0], dtype=complex)
        for g in gam:
            chi = chi @ g
        gam.append(chi)
    return gam


@lru_cache(maxsize=None)
def _generators(n: int) -> np.ndarray:
    gens = np.array([1j * g for g in _hermitian_gammas(n)])
    # entries are exactly 0, +-1, +-i; scrub signed zeros for determinism
    gens.real[gens.real == 0] = 0.0
    gens.imag[gens.imag == 0] = 0.0
    gens.setflags(write=False)
    return gens


def build_rep(n: int) -> CliffordRep:
    """Irreducible representation of Cl(n) on C^N with N = 2^(n // 2).

    For odd ``n`` the last generator is ``i * i^k * G_1 ... G_{n-1}`` with
    ``k = (n - 1) // 2``; with this choice ``G_1 G_2 G_3 = -1`` when n = 3.
    """
    if int(n) != n or n < 2:
        raise ValueError(f"Clifford dimension must be an integer >= 2, got {n!r}")
    return CliffordRep(n=int(n), generators=_generators(int(n)))


def clifford_mul(rep: CliffordRep, v, psi) -> np.ndarray:
    """Return ``v . psi``.

    ``v`` has trailing axis n and ``psi`` trailing axis N; leading axes
    broadcast, so fields of vectors can act on fields of spinors.
    """
    v = np.asarray(v)
    psi = np.asarray(psi)
    if v.shape[-1] != rep.n:
        raise ValueError(f"vector has length {v.shape[-1]}, expected {rep.n}")
    if psi.shape[-1] != rep.spinor_dim:
        raise ValueError(f"spinor has length {psi.shape[-1]}, expected {rep.spinor_dim}")
    # (..., n) x (n, N, N) x (..., N) -> (..., N)
    return np.einsum("...k,kab,...b->...a", v, rep.generators, psi)


def anticommutator_defect(rep: CliffordRep) -> float:
    eye = np.eye(rep.spinor_dim)
    worst = 0.0
    for i, gi in enumerate(rep.generators):
        for j, gj in enumerate(rep.generators):
            target = -2.0 * eye if i == j else 0.0
            worst = max(worst, float(np.abs(gi @ gj + gj @ gi - target).max()))
    return worst

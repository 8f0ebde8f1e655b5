"""Upper bounds for lambda_min^+- on flat tori by searching conformal factors.

The objective ``|lambda_1^+-(e^{2u} g)| Vol(e^{2u} g)^(1/n)`` is minimized over
``u = sum_j theta_j b_j`` for a finite low-frequency trigonometric basis.
Any value found is an upper bound for the invariant, never the invariant.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from diraclab.clifford import CliffordRep, build_rep
from diraclab.torus import ConformalDirac, SpinStructure, first_eigenvalue, grid_points, volume

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BasisMode:
    kind: str  # "const", "cos" or "sin"
    freq: tuple[int, ...]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "const":
            return np.ones(x.shape[:-1])
        phase = 2 * np.pi * (x @ np.array(self.freq, dtype=float))
        return np.cos(phase) if self.kind == "cos" else np.sin(phase)

    def label(self) -> str:
        if self.kind == "const":
            return "1"
        return f"{self.kind}{list(self.freq)}"


@dataclass
class ConformalSearchSpace:
    n: int
    modes: list[BasisMode]
    bound: float = 1.5  # e^u stays in [e^-bound, e^bound]

    @classmethod
    def low_frequency(cls, n: int, max_freq: int = 1, bound: float = 1.5,
                      include_constant: bool = True) -> "ConformalSearchSpace":
        """Constant mode plus cos/sin along each axis up to ``max_freq``
        (2n + 1 modes for ``max_freq = 1``)."""
        modes = [BasisMode("const", (0,) * n)] if include_constant else []
        for f in range(1, max_freq + 1):
            for j in range(n):
                freq = tuple(f if i == j else 0 for i in range(n))
                modes += [BasisMode("cos", freq), BasisMode("sin", freq)]
        return cls(n, modes, bound)

    @classmethod
    def constant_only(cls, n: int, bound: float = 1.5) -> "ConformalSearchSpace":
        return cls(n, [BasisMode("const", (0,) * n)], bound)

    @property
    def dim(self) -> int:
        return len(self.modes)

    @property
    def coefficient_bound(self) -> float:
        # sup |b_j| = 1, so sum |theta_j| <= bound keeps |u| <= bound
        return self.bound / self.dim

    def field(self, theta, m: int) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim,):
            raise ValueError(f"theta has shape {theta.shape}, expected ({self.dim},)")
        x = grid_points(self.n, m)
        u = np.zeros((m,) * self.n)
        for t, mode in zip(theta, self.modes):
            if t != 0.0:
                u = u + t * mode(x)
        return u


def normalized_eigenvalue(theta, space: ConformalSearchSpace, spin: SpinStructure, sign: int = 1,
                          m: int = 32, rep: CliffordRep | None = None, tol: float = 1e-12) -> float:
    """``|lambda_1^+-(g_theta)| Vol(g_theta)^(1/n)`` on an m^n grid."""
    if spin.is_trivial:
        from diraclab.torus import NearKernelError

        raise NearKernelError("trivial spin structure: D has a kernel")
    rep = rep or build_rep(space.n)
    u = space.field(theta, m)
    op = ConformalDirac(rep, spin, u)
    lam = first_eigenvalue(op, sign, tol=tol).value
    return abs(lam) * volume(u, space.n) ** (1.0 / space.n)


@dataclass
class InvariantEstimate:
    theta: np.ndarray
    value: float
    sign: int
    flat_value: float
    history: list[float] = field(default_factory=list)  # accepted iterates
    evaluations: list[float] = field(default_factory=list)  # every objective call
    budget_exhausted: bool = False
    final_step: float = 0.0


def minimize(space: ConformalSearchSpace, spin: SpinStructure, sign: int = 1, budget: int = 60,
             m: int = 32, initial_step: float | None = None, min_step: float = 1e-3,
             rep: CliffordRep | None = None) -> InvariantEstimate:
    """Coordinate descent with shrinking steps from theta = 0.

    Each sweep tries ``theta_j +- step`` for every coordinate and keeps any
    strict improvement; a sweep without improvement halves the step.
    """
    if budget < 1:
        raise ValueError("budget must allow at least one evaluation")
    rep = rep or build_rep(space.n)
    bound = space.coefficient_bound
    step = 0.5 * bound if initial_step is None else float(initial_step)
    evals: list[float] = []

    def objective(theta):
        val = normalized_eigenvalue(theta, space, spin, sign, m, rep)
        evals.append(val)
        return val

    theta = np.zeros(space.dim)
    best = objective(theta)
    flat = best
    history = [best]
    exhausted = False
    while step >= min_step and not exhausted:
        improved = False
        for j in range(space.dim):
            for direction in (1.0, -1.0):
                if len(evals) >= budget:
                    exhausted = True
                    break
                trial = theta.copy()
                trial[j] = np.clip(trial[j] + direction * step, -bound, bound)
                if trial[j] == theta[j]:
                    continue
                val = objective(trial)
                if val < best - 1e-13 * best:
                    theta, best = trial, val
                    history.append(best)
                    improved = True
                    break
            if exhausted:
                break
        if not improved:
            step *= 0.5
    log.info("minimize sign=%+d: %d evaluations, best %.12f (flat %.12f)", sign, len(evals), best, flat)
    return InvariantEstimate(theta=theta, value=best, sign=sign, flat_value=flat, history=history,
                             evaluations=evals, budget_exhausted=exhausted, final_step=step)

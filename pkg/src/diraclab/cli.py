"""Command-line driver: ``diraclab {spectrum,sweep,mass,minimize,selfcheck}``.

Exit status: 0 when every check passes, 1 when a check fails, 2 for an
invalid configuration, 3 when the Dirac operator is not invertible.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import fields
from fractions import Fraction

import numpy as np

from diraclab.clifford import anticommutator_defect, build_rep
from diraclab.flatmodel import convergence_order, killing_residual, sphere_invariant
from diraclab.functional import (
    J, SimpleFamily, TestSpinorParams, ThreeZoneFamily, J_family, decay_exponent, extrapolate_limit,
)
from diraclab.green import TorusGreen, mass_endomorphism, symmetry_report
from diraclab.invariant import ConformalSearchSpace, minimize
from diraclab.records import DEFAULT_TOLERANCES, Check, ConfigError, ResultRecord, RunConfig
from diraclab.torus import (
    ConformalDirac, LogConformalFactor, NearKernelError, SpinStructure, first_eigenvalue, grid_points,
    mode_matrix, spectrum_diagonalized, spectrum_exact,
)

log = logging.getLogger("diraclab")

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_KERNEL = 0, 1, 2, 3
THREADS_ENV = "DIRACLAB_THREADS"


def _threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _new_record(cfg: RunConfig) -> ResultRecord:
    return ResultRecord(command=cfg.command, config=cfg.canonical(), config_hash=cfg.digest(),
                        timestamp=time.strftime("%Y-%m-%dT%H:%M:%S"))


def _kernel(rec: ResultRecord, exc: NearKernelError) -> ResultRecord:
    rec.status = "kernel"
    rec.scalars["kernel"] = str(exc)
    return rec


# --------------------------------------------------------------------------
# commands


def cmd_spectrum(cfg: RunConfig) -> ResultRecord:
    rec = _new_record(cfg)
    rep, spin = build_rep(cfg.n), SpinStructure(cfg.delta)
    exact = spectrum_exact(rep, spin, cfg.cutoff)
    diag = spectrum_diagonalized(rep, spin, cfg.cutoff)
    defect = float(np.max(np.abs(exact.eigenvalues - diag.eigenvalues) / np.maximum(1.0, np.abs(exact.eigenvalues))))
    rec.add(Check.below("oracle_defect", defect, 1e-12))
    sym = float(np.abs(exact.eigenvalues + exact.eigenvalues[::-1]).max())
    rec.add(Check.below("spectral_symmetry", sym, 1e-12))
    values, counts = np.unique(np.round(exact.eigenvalues, 9), return_counts=True)
    rec.table = [{"eigenvalue": float(v), "multiplicity": int(c)} for v, c in zip(values, counts)]
    rec.scalars.update(kernel_dim=exact.kernel_dim, lambda_1_plus=exact.lambda_1_plus,
                       lambda_1_minus=exact.lambda_1_minus, count=int(exact.eigenvalues.size))
    if exact.kernel_dim:
        rec.scalars["kernel"] = f"D has a {exact.kernel_dim}-dimensional kernel"
        rec.status = "kernel"
        return rec
    # discretized operator on the grid against the closed form
    op = ConformalDirac(rep, spin, LogConformalFactor.constant(cfg.n, min(cfg.grid, 64 if cfg.n == 2 else 16)))
    tol = cfg.tolerances["eigensolver"]
    lp = first_eigenvalue(op, +1, tol=tol).value
    lm = first_eigenvalue(op, -1, tol=tol).value
    rec.scalars.update(grid_lambda_1_plus=lp, grid_lambda_1_minus=lm)
    rec.add(Check.below("grid_solver_defect", max(abs(lp - exact.lambda_1_plus), abs(lm - exact.lambda_1_minus))
                        / abs(exact.lambda_1_plus), 1e-8))
    return rec


def _family_factory(cfg: RunConfig, rep, spin):
    green = None
    if cfg.family == "three-zone":
        green = TorusGreen(rep, spin)

    def make(eps):
        params = TestSpinorParams(eps, cfg.n, cfg.sign)
        if cfg.family == "simple":
            return SimpleFamily(rep, params)
        return ThreeZoneFamily(rep, params, green)

    return make


def cmd_sweep(cfg: RunConfig) -> ResultRecord:
    rec = _new_record(cfg)
    rep, spin = build_rep(cfg.n), SpinStructure(cfg.delta)
    if cfg.family == "three-zone" and spin.is_trivial:
        return _kernel(rec, NearKernelError("three-zone family needs an invertible D"))
    make = _family_factory(cfg, rep, spin)
    eps = sorted(cfg.eps, reverse=True)
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        values = list(pool.map(lambda e: J_family(make(e)), eps))
    lam = sphere_invariant(cfg.n)
    rec.table = [{"epsilon": e, "rho": e ** (1 / (cfg.n + 1)), "J": v.value, "J_minus_lambda_sphere": v.value - lam,
                  "sign": v.sign} for e, v in zip(eps, values)]
    gaps = [v.value - lam for v in values]
    exponent = decay_exponent(eps, gaps)
    limit = extrapolate_limit(eps, [v.value for v in values])
    rec.scalars.update(lambda_sphere=lam, exponent=exponent, extrapolated_limit=limit, family=cfg.family)
    rec.add(Check("sign_tag", all(v.sign == cfg.sign for v in values), 0.0, 0.0))
    converging = bool(np.all(np.diff(np.abs(gaps)) < 0))
    rec.add(Check("converging", converging, float(np.abs(gaps[-1])), float(np.abs(gaps[0]))))
    if cfg.family == "simple":
        monotone = bool(np.all(np.diff([v.value for v in values]) < 0))
        rec.add(Check("J_decreasing", monotone, 0.0, 0.0))
        rel = float("inf") if limit is None else abs(limit - lam) / lam
        rec.add(Check.below("extrapolated_limit_rel_defect", rel, 0.01))
    else:
        rec.add(Check.above("decay_exponent", exponent, 1.1))
    return rec


def cmd_mass(cfg: RunConfig) -> ResultRecord:
    rec = _new_record(cfg)
    rep, spin = build_rep(cfg.n), SpinStructure(cfg.delta)
    try:
        mass = mass_endomorphism(rep, spin, hermiticity_tol=float("inf"))
    except NearKernelError as exc:
        return _kernel(rec, exc)
    rep_sym = symmetry_report(mass, cfg.n)
    tol = cfg.tolerances
    rec.scalars.update(alpha_norm=mass.norm, hermiticity_defect=mass.hermiticity_defect,
                       direction_spread=mass.direction_spread, extrapolation_error=mass.extrapolation_error,
                       pairing_defect=rep_sym.pairing_defect, symmetric_expected=rep_sym.symmetric_expected)
    rec.table = [{"index": i, "eigenvalue": float(ev)} for i, ev in enumerate(rep_sym.eigenvalues)]
    rec.add(Check.below("mass_nullity", mass.norm, tol["mass"]))
    rec.add(Check.below("hermiticity", mass.hermiticity_defect, tol["hermiticity"]))
    rec.add(Check.below("direction_spread", mass.direction_spread, tol["direction_spread"]))
    if rep_sym.symmetric_expected:
        rec.add(Check.below("spectrum_symmetry", rep_sym.pairing_defect, tol["hermiticity"]))
    return rec


def cmd_minimize(cfg: RunConfig) -> ResultRecord:
    rec = _new_record(cfg)
    rep, spin = build_rep(cfg.n), SpinStructure(cfg.delta)
    if spin.is_trivial:
        return _kernel(rec, NearKernelError("trivial spin structure: D has a kernel"))
    space = ConformalSearchSpace.low_frequency(cfg.n, cfg.max_freq)
    lam = sphere_invariant(cfg.n)
    margin = cfg.tolerances["sphere_margin"]
    m = cfg.grid if cfg.n == 2 else min(cfg.grid, 16)
    for sign, tag in ((1, "plus"), (-1, "minus")):
        est = minimize(space, spin, sign, budget=cfg.budget, m=m, rep=rep)
        for i, v in enumerate(est.history):
            rec.table.append({"branch": tag, "iterate": i, "value": v})
        rec.scalars.update({f"{tag}_value": est.value, f"{tag}_flat_value": est.flat_value,
                            f"{tag}_theta": [float(t) for t in est.theta],
                            f"{tag}_budget_exhausted": est.budget_exhausted,
                            f"{tag}_evaluations": len(est.evaluations)})
        rec.add(Check.below(f"{tag}_below_sphere", max(est.history) - lam, margin))
        rec.add(Check.below(f"{tag}_below_flat", est.value - est.flat_value, 1e-8))
        rec.add(Check("%s_monotone" % tag, bool(np.all(np.diff(est.history) <= 0)), 0.0, 0.0))
    rec.scalars["lambda_sphere"] = lam
    return rec


def cmd_selfcheck(cfg: RunConfig) -> ResultRecord:
    """Fast desk-scale checks of every module."""
    rec = _new_record(cfg)
    rng = np.random.default_rng(cfg.seed)
    rows = []

    def note(check: Check):
        rec.add(check)
        rows.append({"check": check.name, "passed": check.passed, "defect": check.defect,
                     "threshold": check.threshold})

    for n in (2, 3):
        rep = build_rep(n)
        note(Check.below(f"clifford_n{n}", anticommutator_defect(rep), 1e-15))
        worst = 0.0
        for spin in SpinStructure.all(n):
            a = spectrum_exact(rep, spin, 4).eigenvalues
            b = spectrum_diagonalized(rep, spin, 4).eigenvalues
            worst = max(worst, float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(a)))))
        note(Check.below(f"spectrum_oracle_n{n}", worst, 1e-12))
        psi0 = rng.normal(size=rep.spinor_dim) + 1j * rng.normal(size=rep.spinor_dim)
        x = rng.uniform(-1, 1, size=(16, n))
        hs = [1e-2, 5e-3, 2.5e-3]
        order = convergence_order(hs, [killing_residual(rep, 1, psi0, x, 1.0, h) for h in hs])
        note(Check.above(f"killing_order_n{n}", order, 1.9))
    rep, spin = build_rep(2), SpinStructure((0.5, 0.0))
    k = np.array([0.5, 0.0])
    w, v = np.linalg.eigh(mode_matrix(rep, k))
    s = v[:, int(np.argmax(w))]
    m = 32
    psi = np.exp(2j * np.pi * (grid_points(2, m) @ k))[..., None] * s
    jv = J(psi, LogConformalFactor.constant(2, m), rep, spin)
    note(Check.below("eigenspinor_J", abs(jv.value - np.pi) / np.pi, 1e-8))
    mass = mass_endomorphism(rep, spin)
    note(Check.below("mass_nullity", mass.norm, cfg.tolerances["mass"]))
    g = TorusGreen(rep, spin)
    pts = rng.uniform(-0.5, 0.5, size=(8, 2))
    pts = pts[np.linalg.norm(pts, axis=-1) > 0.1]
    note(Check.below("green_harmonic", float(np.abs(g.dirac(np.array([1.0, 0j]), pts)).max()), 1e-6))
    rec.table = rows
    return rec


COMMANDS = {
    "spectrum": cmd_spectrum,
    "sweep": cmd_sweep,
    "mass": cmd_mass,
    "minimize": cmd_minimize,
    "selfcheck": cmd_selfcheck,
}


# --------------------------------------------------------------------------
# argument handling


def _floats(text: str) -> tuple[float, ...]:
    parts = [p for p in text.replace(",", " ").split() if p]
    return tuple(float(Fraction(p)) for p in parts)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="diraclab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--n", type=int, default=argparse.SUPPRESS, help="dimension (default 2)")
        p.add_argument("--delta", type=_floats, default=argparse.SUPPRESS,
                       help="spin structure, e.g. '1/2,0' (default (1/2, 0, ...))")
        p.add_argument("-K", "--cutoff", type=int, default=argparse.SUPPRESS, help="mode cutoff (default 16)")
        p.add_argument("-m", "--grid", type=int, default=argparse.SUPPRESS, help="grid size (default 64)")
        p.add_argument("--eps", type=_floats, default=argparse.SUPPRESS, help="epsilon list for sweeps")
        p.add_argument("--family", choices=("simple", "three-zone"), default=argparse.SUPPRESS)
        p.add_argument("--sign", type=int, choices=(1, -1), default=argparse.SUPPRESS)
        p.add_argument("--budget", type=int, default=argparse.SUPPRESS)
        p.add_argument("--max-freq", dest="max_freq", type=int, default=argparse.SUPPRESS)
        p.add_argument("--tol", action="append", default=[], metavar="NAME=VALUE",
                       help=f"override a tolerance ({', '.join(DEFAULT_TOLERANCES)})")
        p.add_argument("--seed", type=int, default=argparse.SUPPRESS)
        p.add_argument("-o", "--output", default=argparse.SUPPRESS, help="run prefix for output files")
        p.add_argument("--config", help="JSON file; its keys override flags")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    known = {f.name for f in fields(RunConfig)}
    values = {k: v for k, v in vars(args).items() if k in known}
    tolerances = dict(DEFAULT_TOLERANCES)
    for item in args.tol:
        name, _, val = item.partition("=")
        tolerances[name] = float(val)
    if args.config:
        with open(args.config) as fh:
            overrides = json.load(fh)
        unknown = set(overrides) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        tolerances.update(overrides.pop("tolerances", {}))
        for key in ("delta", "eps"):
            if key in overrides:
                overrides[key] = tuple(float(Fraction(str(v))) for v in overrides[key])
        values.update(overrides)
    values["command"] = args.command
    values["tolerances"] = tolerances
    n = int(values.get("n", 2))
    values.setdefault("delta", (0.5,) + (0.0,) * (n - 1))
    return RunConfig(**values).validate()


def run(cfg: RunConfig) -> tuple[ResultRecord, int]:
    rec = COMMANDS[cfg.command](cfg)
    if rec.status == "kernel":
        return rec, EXIT_KERNEL
    if not rec.passed:
        rec.status = "failed"
        return rec, EXIT_FAILED
    return rec, EXIT_OK


def _print_table(rows, stream) -> None:
    if not rows:
        return
    keys = list(rows[0])
    stream.write(",".join(keys) + "\n")
    for row in rows:
        stream.write(",".join(repr(row[k]) if isinstance(row[k], float) else str(row[k]) for k in keys) + "\n")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"diraclab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    rec, code = run(cfg)
    _print_table(rec.table, sys.stdout)
    for c in rec.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.defect:.6g} (threshold {c.threshold:g})")
    if rec.status == "kernel":
        print(f"KERNEL {rec.scalars.get('kernel')}")
    if cfg.output:
        paths = rec.write(cfg.output)
        print("wrote " + ", ".join(str(p) for p in paths), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())

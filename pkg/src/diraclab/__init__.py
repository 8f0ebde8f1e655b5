"""Numerical laboratory for conformal Dirac eigenvalue invariants on flat spin tori."""

from diraclab.clifford import CliffordRep, build_rep, clifford_mul
from diraclab.flatmodel import conformal_factor, euclidean_killing_spinor, sphere_invariant, sphere_volume
from diraclab.torus import SpinStructure

__all__ = [
    "CliffordRep",
    "SpinStructure",
    "build_rep",
    "clifford_mul",
    "conformal_factor",
    "euclidean_killing_spinor",
    "sphere_invariant",
    "sphere_volume",
]

__version__ = "0.1.0"

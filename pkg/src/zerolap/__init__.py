"""Numerical probes of zero-energy resolvent estimates for slowly decaying attractive potentials."""
from .discrete import BandedOperator, Grid, build_dilation_generator, build_hamiltonian
from .kernels import USE_NUMBA
from .model import BumpSpec, PotentialSpec, PowerTail, WeightFamily, eval_potential, validate_assumptions, virial
from .resolve import Resolvent, boundary_values, lap_sweep, shifted_solve, weighted_norm

__version__ = "0.1.0"

__all__ = [
    "USE_NUMBA",
    "BandedOperator",
    "BumpSpec",
    "Grid",
    "PotentialSpec",
    "PowerTail",
    "Resolvent",
    "WeightFamily",
    "boundary_values",
    "build_dilation_generator",
    "build_hamiltonian",
    "eval_potential",
    "lap_sweep",
    "shifted_solve",
    "validate_assumptions",
    "virial",
    "weighted_norm",
]

"""Numerical laboratory for capillary overdetermined problems in the half-space.

Modules: :mod:`geometry` (analytic domains), :mod:`meshgen` (structured
triangulations), :mod:`fem` (quadratic elements for the mixed torsion
problem), :mod:`quantities` (deficits, centres, integral identities),
:mod:`experiments` (refinement studies and stability sweeps) and
:mod:`cli`.
"""

from .geometry import DomainSpec, Mode, PerturbationMode, SpecError, measures
from .meshgen import build_mesh, refine
from .fem import solve_mixed_bvp, boundary_flux, derivatives
from .quantities import deficit_report

__version__ = "0.1.0"

__all__ = [
    "DomainSpec", "Mode", "PerturbationMode", "SpecError", "measures",
    "build_mesh", "refine", "solve_mixed_bvp", "boundary_flux", "derivatives",
    "deficit_report",
]

"""Riesz potential theory workbench."""
__version__ = "0.1.0"

from ._backend import BACKEND
from .geometry import (
    Ball, DiscreteMeasure, HalfCylinder, PointCloud, RotationBody, Shell, Slice, Sphere, Truncate, Union,
    discretize,
)
from .kernel import KernelContext, assemble_kernel
from .potential_ops import (
    balayage, capacity, equilibrium_measure, h_value, harmonic_measure, wiener_classify,
)
from .gauss import FieldSpec, check_solution_formula, existence_probe, solve_weighted

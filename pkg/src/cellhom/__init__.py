"""Periodic homogenization of voxelized elastic composites and the symmetry
calculus linking microstructure symmetries to symmetries of the effective
tensor."""

from .builders import build_example
from .cell import Lattice, Material, UnitCell, rasterize, sample, wrap
from .cellio import load_cell, save_cell
from .errors import CellHomError
from .homog import (
    check_macro_symmetry,
    classify_macro,
    effective_tensor,
    effective_transport,
)
from .microsym import (
    AffineSymmetry,
    check_micro_symmetry,
    detect_symmetries,
    induced_periodicity_check,
    transform_cell,
)
from .solver import CellProblem, SolverOptions, solve_cell_problem, validate_assumptions
from .tensor import (
    ElasticityTensor,
    SymTensor2,
    UnimodularMap,
    classify,
    conjugate,
    coercivity_margin,
    iso_tensor,
    reflection,
    rotation_about_axis,
    sym_residual,
)

__version__ = "0.1.0"

"""Nodal sets of Dirichlet eigenfunctions on perturbed rectangles.

The target mode is the eigenfunction in the spectral position of
``sin(2 pi x/N) sin(2 pi y)`` on ``[0, N] x [0, 1]`` after the left side is
replaced by ``x = eta * phi(y)``.
"""

from .errors import (ConfigError, ConvergenceError, DomainError, FitError, GeometryError,
                     InsufficientDataError, NodalOpeningsError, NumericalError,
                     ResonanceError, SelectionError, SignatureError, TopologyError)
from .geometry import (BoundaryProfile, DomainSpec, boundary_polyline, eval_profile,
                       shape_integral, symmetry_defect, validate_profile)
from .mesh import Mesh, NodalField, build_mesh, field_gradient, interpolate_field
from .spectral import (EigenSolution, assemble, compute_target_mode, factorize_shifted,
                       select_mode, solve_near)
from .modes import (ModeDecomposition, ResonanceReport, fit_trig_forms, hadamard_predict,
                    normalize_sign, resonance_scan, slice_modes)
from .nodal import (GapMeasurement, HyperbolaFit, NodalSet, StructureCheckReport,
                    boundary_angles, extract_nodal_set, local_quadratic_model, measure_gap,
                    structure_check)

__version__ = "0.1.0"

__all__ = [
    "BoundaryProfile", "DomainSpec", "Mesh", "NodalField", "EigenSolution",
    "ModeDecomposition", "ResonanceReport", "NodalSet", "GapMeasurement", "HyperbolaFit",
    "StructureCheckReport", "eval_profile", "validate_profile", "shape_integral",
    "symmetry_defect", "boundary_polyline", "build_mesh", "interpolate_field",
    "field_gradient", "assemble", "factorize_shifted", "solve_near", "select_mode",
    "compute_target_mode", "slice_modes", "fit_trig_forms", "resonance_scan",
    "hadamard_predict", "normalize_sign", "extract_nodal_set", "measure_gap",
    "local_quadratic_model", "structure_check", "boundary_angles",
    "NodalOpeningsError", "DomainError", "GeometryError", "NumericalError",
    "ConvergenceError", "ResonanceError", "SelectionError", "SignatureError",
    "TopologyError", "FitError", "InsufficientDataError", "ConfigError",
]

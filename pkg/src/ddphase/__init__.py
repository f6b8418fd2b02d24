"""Variational ground-state phase diagrams of multilevel atoms in multimode
cavities with atomic dipole-dipole interactions."""

from .model import (
    Coupling,
    GTable,
    ModelSpec,
    ValidationError,
    load_model,
    model_from_dict,
    model_to_dict,
    named_configuration,
    save_model,
)
from .operator_algebra import (
    DimensionCapError,
    algebra_selftest,
    enumerate_basis,
)
from .oracle import ExactReport, brute_min, exact_ground
from .phase_diagram import (
    PhaseGrid,
    SeparatrixCurve,
    bures_ridge,
    casimir_delta,
    casimir_expectation,
    casimir_field,
    classify_separatrix,
    derivative_fields,
    export_grid,
    extract_separatrix,
    normal_cell_count,
    scan_ground,
)
from .two_level import (
    TransitionReport,
    TwoLevelParams,
    classify_2level,
    e_min,
    e_min_derivatives,
    rho_critical,
    x_critical,
)
from .variational import (
    CoherentParams,
    GroundSolution,
    bures_distance,
    dd_energy,
    energy,
    energy_gradient,
    field_critical,
    minimize_ground,
    state_overlap,
)
from .kernels import active_backend, use_backend

__version__ = "0.1.0"

__all__ = [
    "CoherentParams",
    "Coupling",
    "DimensionCapError",
    "ExactReport",
    "GTable",
    "GroundSolution",
    "ModelSpec",
    "PhaseGrid",
    "SeparatrixCurve",
    "TransitionReport",
    "TwoLevelParams",
    "ValidationError",
    "active_backend",
    "algebra_selftest",
    "brute_min",
    "bures_distance",
    "bures_ridge",
    "casimir_delta",
    "casimir_expectation",
    "casimir_field",
    "classify_2level",
    "classify_separatrix",
    "dd_energy",
    "derivative_fields",
    "e_min",
    "e_min_derivatives",
    "energy",
    "energy_gradient",
    "enumerate_basis",
    "exact_ground",
    "export_grid",
    "extract_separatrix",
    "field_critical",
    "load_model",
    "minimize_ground",
    "model_from_dict",
    "model_to_dict",
    "named_configuration",
    "normal_cell_count",
    "rho_critical",
    "save_model",
    "scan_ground",
    "state_overlap",
    "use_backend",
    "x_critical",
    "__version__",
]

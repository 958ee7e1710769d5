"""screwtb: a numerical laboratory for screw-dislocated tight-binding lattices.

Builds dislocated lattice Hamiltonians at fixed momentum along the
dislocation line, computes bulk weak Chern invariants and dislocation
spectral indices by three independent estimators, and verifies their
integer correspondence, including a property-tested discrete kernel-lifting
operation between the flat and dislocated lattices.
"""

__version__ = "0.1.0"

from .errors import (
    BranchMatchingError,
    ConfigError,
    ConvergenceError,
    GapClosedError,
    ScrewtbError,
)
from .lattice import (
    BurgersFrame,
    DislocatedLattice,
    Site,
    build_lattice,
    burgers_frame,
    height_offset,
    nearest_lift,
)
from .models import (
    HoppingModel,
    MomentumSlice,
    assemble_core_removed,
    assemble_dislocated,
    assemble_flat,
    bloch,
    builtin_model,
    qwz_stack,
    transform_model,
    trivial,
)
from .invariants import chern_lattice, chern_weil, fermi_projection, weak_vector
from .dislocation import (
    ChiFunction,
    SpectralData,
    boundary_unitary,
    dislocation_run,
    kz_sweep,
    localized_winding,
    sigma_screw,
    spectral_flow,
)
from .kalgebra import KClass, az_lookup, boundary_map, even_class, odd_class, real_generator_order
from .coarselift import FlatKernel, lift, multiplicativity_defect, norm_bound_check

__all__ = [
    "__version__",
    "ScrewtbError",
    "ConfigError",
    "GapClosedError",
    "ConvergenceError",
    "BranchMatchingError",
    "Site",
    "BurgersFrame",
    "DislocatedLattice",
    "height_offset",
    "nearest_lift",
    "build_lattice",
    "burgers_frame",
    "HoppingModel",
    "MomentumSlice",
    "trivial",
    "qwz_stack",
    "builtin_model",
    "bloch",
    "transform_model",
    "assemble_dislocated",
    "assemble_flat",
    "assemble_core_removed",
    "fermi_projection",
    "chern_weil",
    "chern_lattice",
    "weak_vector",
    "ChiFunction",
    "SpectralData",
    "kz_sweep",
    "spectral_flow",
    "boundary_unitary",
    "localized_winding",
    "sigma_screw",
    "dislocation_run",
    "KClass",
    "even_class",
    "odd_class",
    "boundary_map",
    "az_lookup",
    "real_generator_order",
    "FlatKernel",
    "lift",
    "norm_bound_check",
    "multiplicativity_defect",
]
